"""Histogram-based discrete entropy and mutual information (plug-in, log2)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InputShapeError, InvalidInputError

DEFAULT_BINS = 64


def bin_indices(values, lo: float, hi: float, B: int) -> tuple[np.ndarray, int]:
    """Equal-width bin index per value over [lo, hi]; out-of-range values are
    clamped to the edge bins and counted."""
    if B < 2:
        raise InvalidInputError(f"need at least 2 bins, got {B}")
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("non-finite value")
    clamped = int(np.count_nonzero((v < lo) | (v > hi)))
    if hi <= lo:
        return np.zeros(v.size, dtype=np.int64), clamped
    idx = np.floor((v - lo) / (hi - lo) * B).astype(np.int64)
    return np.clip(idx, 0, B - 1), clamped


def _entropy_from_counts(counts: np.ndarray) -> float:
    c = counts[counts > 0].astype(np.float64)
    p = c / c.sum()
    return float(-np.sum(p * np.log2(p)))


def discrete_entropy(seq, bounds: tuple[float, float], B: int = DEFAULT_BINS) -> float:
    """Entropy in bits of the binned values of a 1-D sequence."""
    v = np.asarray(seq, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise EmptyInputError("empty sequence")
    idx, _ = bin_indices(v, bounds[0], bounds[1], B)
    return _entropy_from_counts(np.bincount(idx, minlength=B))


@dataclass
class Histogram2D:
    bins: int
    edges: np.ndarray
    joint: np.ndarray
    clamped: int = 0

    @property
    def row_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=1)

    @property
    def col_marginal(self) -> np.ndarray:
        return self.joint.sum(axis=0)

    def mutual_information(self) -> float:
        n = self.joint.sum()
        nz = self.joint > 0
        pij = self.joint[nz] / n
        pi = (self.row_marginal / n)[np.nonzero(nz)[0]]
        qj = (self.col_marginal / n)[np.nonzero(nz)[1]]
        return float(np.sum(pij * np.log2(pij / (pi * qj))))


def histogram2d(x, y, bounds: tuple[float, float], B: int = DEFAULT_BINS) -> Histogram2D:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise InputShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size == 0:
        raise EmptyInputError("empty sequence")
    i, ci = bin_indices(x, *bounds, B)
    j, cj = bin_indices(y, *bounds, B)
    joint = np.bincount(i * B + j, minlength=B * B).reshape(B, B)
    return Histogram2D(B, np.linspace(bounds[0], bounds[1], B + 1), joint, ci + cj)


@dataclass
class InfoReport:
    bins: int
    entropy_orig: list[float]
    entropy_recon: list[float]
    mi: list[float]
    clamped: int

    @property
    def total(self) -> float:
        return float(sum(self.mi))

    def to_dict(self) -> dict:
        return {"bins": self.bins, "entropy_orig": self.entropy_orig,
                "entropy_recon": self.entropy_recon, "mi": self.mi,
                "total_mi": self.total, "clamped": self.clamped}

    def rows(self):
        for d, (h, hr, i) in enumerate(zip(self.entropy_orig, self.entropy_recon, self.mi)):
            yield d + 1, h, hr, i


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def mutual_information(orig, recon, bounds, B: int = DEFAULT_BINS) -> InfoReport:
    """Per-dimension I(X_d; X~_d) in bits and their total.

    ``bounds`` holds one (lo, hi) pair per dimension.
    """
    X, Y = _as_2d(orig), _as_2d(recon)
    if X.shape != Y.shape:
        raise InputShapeError(f"shape mismatch: {X.shape} vs {Y.shape}")
    bounds = list(bounds)
    if len(bounds) != X.shape[1]:
        raise InputShapeError(f"need {X.shape[1]} (lo, hi) pairs, got {len(bounds)}")
    hx, hy, mi, clamped = [], [], [], 0
    for d, bd in enumerate(bounds):
        h = histogram2d(X[:, d], Y[:, d], bd, B)
        hx.append(_entropy_from_counts(h.row_marginal))
        hy.append(_entropy_from_counts(h.col_marginal))
        mi.append(h.mutual_information())
        clamped += h.clamped
    return InfoReport(B, hx, hy, mi, clamped)


def permutation_null(orig, recon, bounds, B: int = DEFAULT_BINS, n_perm: int = 200,
                     seed: int = 0) -> tuple[float, float]:
    """Mean and std of total MI after shuffling the reconstruction rows."""
    Y = _as_2d(recon)
    rng = np.random.default_rng(seed)
    totals = [mutual_information(orig, Y[rng.permutation(Y.shape[0])], bounds, B).total
              for _ in range(n_perm)]
    return float(np.mean(totals)), float(np.std(totals, ddof=1))
