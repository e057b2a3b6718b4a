"""SVG figures: data plus decoded grid codes per pattern, and the pattern census."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .spectrum import format_pattern  # noqa: E402

# fixed salt and no timestamp keep SVG bytes reproducible
plt.rcParams["svg.hashsalt"] = "spectrum-mdl"
_SVG_META = {"Date": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def scatter_codes(path, X, data_patterns, codes_by_pattern, cover_points=None, title=None) -> Path:
    """Data points coloured by pattern with decoded codes drawn as squares.

    ``codes_by_pattern`` maps a pattern to an (n, D) array of decoded codes.
    Only the first two data dimensions are drawn.
    """
    X = np.atleast_2d(X)
    order = sorted(set(data_patterns) | set(codes_by_pattern), key=lambda p: (len(p), p))
    cmap = plt.get_cmap("tab10")
    colour = {p: cmap(i % 10) for i, p in enumerate(order)}
    fig, ax = plt.subplots(figsize=(7, 4.5))
    pats = list(data_patterns)
    for p in order:
        m = np.array([q == p for q in pats], dtype=bool)
        if m.any():
            ax.scatter(X[m, 0], X[m, 1] if X.shape[1] > 1 else np.zeros(m.sum()),
                       s=4, alpha=0.35, color=colour[p], linewidths=0)
        C = codes_by_pattern.get(p)
        if C is not None and len(C):
            C = np.atleast_2d(C)
            ax.scatter(C[:, 0], C[:, 1] if C.shape[1] > 1 else np.zeros(len(C)), marker="s",
                       s=22, color=colour[p], edgecolors="black", linewidths=0.4,
                       label=f"{format_pattern(p)} ({len(C)} codes)")
    if cover_points is not None and len(cover_points):
        P = np.atleast_2d(cover_points)
        ax.scatter(P[:, 0], P[:, 1] if P.shape[1] > 1 else np.zeros(len(P)), marker="x",
                   s=14, color="0.3", linewidths=0.6, label="cover points")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, loc="upper right")
    return _save(fig, path)


def census_bars(path, census, title=None) -> Path:
    labels = [format_pattern(p) for p in census.patterns]
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(labels) + 2), 3.5))
    ax.bar(np.arange(len(labels)), census.sizes, color="tab:blue")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("samples")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
