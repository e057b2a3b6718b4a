"""Covering/packing bounds on the number of U-balls needed for a bounded
support, code-usage accounting, the two numeric theorem checks and
on-boundary pair counting.

All geometry is evaluated on a regular grid over the support, so cover
validity holds at grid resolution only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .datasets import BoundedSupport
from .errors import InvalidInputError, NotCertifiedError, ResolutionError
from .mdl import DescriptionLengthReport, quantize_codes
from .net import SpectrumVae, reconstruction_error
from .spectrum import SpikingPattern, format_pattern, patterns_of

GRID_BUDGET = 10**7
_DIST_SLACK = 1 + 1e-12


@dataclass
class EssenceBounds:
    """Interval ``[lower, upper]`` for the minimum number of U-balls covering the support."""

    U: float
    grid_res: float
    lower: int
    upper: int
    cover_points: np.ndarray = field(repr=False)
    packing_points: np.ndarray = field(repr=False)
    n_grid: int = 0
    cover_verified: bool = False

    def to_dict(self) -> dict:
        return {
            "U": self.U, "grid_res": self.grid_res, "lower": self.lower, "upper": self.upper,
            "n_grid": self.n_grid, "cover_verified": self.cover_verified,
            "note": "cover validity holds at grid resolution",
        }


def support_grid(support: BoundedSupport, res: float, budget: int = GRID_BUDGET) -> np.ndarray:
    """Regular grid points of spacing ``res`` that belong to the support.

    Empirical supports are snapped to the grid instead.
    """
    if not res > 0:
        raise InvalidInputError(f"grid resolution must be positive, got {res}")
    lam, mu = support.lam, support.mu
    if support.points is not None:
        cells = np.unique(np.round((support.points - lam) / res).astype(np.int64), axis=0)
        return lam + cells * res
    n = np.floor((mu - lam) / res + 1e-9).astype(np.int64) + 1
    total = math.prod(int(k) for k in n)
    if total > budget:
        raise ResolutionError(f"grid of {total} points exceeds budget {budget}")
    axes = [lam[d] + res * np.arange(n[d]) for d in range(support.D)]
    mesh = np.meshgrid(*axes, indexing="ij")
    G = np.stack([m.reshape(-1) for m in mesh], axis=1)
    G = G[support.membership(G)]
    if G.shape[0] > budget:
        raise ResolutionError(f"grid of {G.shape[0]} points exceeds budget {budget}")
    return G


def greedy_cover(G: np.ndarray, U: float) -> np.ndarray:
    """Indices of grid points chosen by greedy max-coverage (lowest index wins ties)."""
    tree = cKDTree(G)
    balls = tree.query_ball_point(G, U * _DIST_SLACK)
    gain = np.array([len(b) for b in balls], dtype=np.int64)
    covered = np.zeros(G.shape[0], dtype=bool)
    chosen = []
    left = G.shape[0]
    while left > 0:
        c = int(np.argmax(gain))
        chosen.append(c)
        for q in balls[c]:
            if not covered[q]:
                covered[q] = True
                left -= 1
                # balls are symmetric: every centre that reached q loses one
                gain[balls[q]] -= 1
    return np.asarray(chosen, dtype=np.int64)


def greedy_packing(G: np.ndarray, sep: float, order: np.ndarray | None = None) -> np.ndarray:
    """Greedy maximal set of points pairwise more than ``sep`` apart."""
    tree = cKDTree(G)
    blocked = np.zeros(G.shape[0], dtype=bool)
    chosen = []
    for i in (range(G.shape[0]) if order is None else order):
        if blocked[i]:
            continue
        chosen.append(int(i))
        blocked[tree.query_ball_point(G[i], sep)] = True
    return np.asarray(chosen, dtype=np.int64)


def verify_cover(G: np.ndarray, cover: np.ndarray, U: float) -> bool:
    d, _ = cKDTree(cover).query(G)
    return bool(np.all(d <= U * _DIST_SLACK))


def essence_bounds(support: BoundedSupport, U: float, grid_res: float | None = None, seed: int = 0,
                   restarts: int = 8, budget: int = GRID_BUDGET) -> EssenceBounds:
    """Packing lower bound and greedy-cover upper bound at grid resolution.

    The packing keeps points pairwise more than 2U apart, so no U-ball can
    hold two of them.  It is grown in index order and in ``restarts`` seeded
    random orders; the largest one is kept.
    """
    if not U > 0:
        raise InvalidInputError(f"U must be positive, got {U}")
    res = U / 4 if grid_res is None else float(grid_res)
    if res > U / 4 * _DIST_SLACK:
        raise InvalidInputError(f"grid_res {res} must be at most U/4 = {U / 4}")
    G = support_grid(support, res, budget)
    if G.shape[0] == 0:
        raise ResolutionError("support grid is empty; refine grid_res")
    cover_idx = greedy_cover(G, U)
    cover = G[cover_idx]
    ok = verify_cover(G, cover, U)
    if not ok:
        raise AssertionError("greedy cover failed its own coverage sweep")
    best = greedy_packing(G, 2 * U)
    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        cand = greedy_packing(G, 2 * U, rng.permutation(G.shape[0]))
        if cand.size > best.size:
            best = cand
    return EssenceBounds(U, res, int(best.size), int(cover_idx.size), cover, G[best], G.shape[0], ok)


@dataclass
class UsageAccounting:
    patterns: list[SpikingPattern]
    set_sizes: list[int]
    used_counts: list[int]
    essence_lower: int
    essence_upper: int
    max_distance_to_used_code: float
    unseen_samples: int = 0

    @property
    def residual(self) -> int:
        return sum(self.set_sizes) - sum(self.used_counts)

    @property
    def used_total(self) -> int:
        return sum(self.used_counts)

    @property
    def redundancy_vs_lower(self) -> int:
        return self.used_total - self.essence_lower

    @property
    def redundancy_vs_upper(self) -> int:
        return self.used_total - self.essence_upper

    def to_dict(self) -> dict:
        return {
            "patterns": [{"pattern": list(p), "set_size": s, "used": u}
                         for p, s, u in zip(self.patterns, self.set_sizes, self.used_counts)],
            "residual": self.residual,
            "used_total": self.used_total,
            "redundancy_vs_lower": self.redundancy_vs_lower,
            "redundancy_vs_upper": self.redundancy_vs_upper,
            "max_distance_to_used_code": self.max_distance_to_used_code,
            "unseen_samples": self.unseen_samples,
        }


def used_codes(model: SpectrumVae, samples, dl: DescriptionLengthReport,
               eb: EssenceBounds | None = None) -> UsageAccounting:
    """Count quantized codes actually hit by samples, per certified pattern."""
    if not dl.regular:
        raise NotCertifiedError("description length has uncertified patterns")
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    Z = model.encode(X)
    pats = patterns_of(Z, model.params)
    Zq, seen, keys = quantize_codes(Z, pats, dl)
    hit: dict[SpikingPattern, set] = {e.pattern: set() for e in dl.entries}
    for P, k, s in zip(pats, keys, seen):
        if s:
            hit[P].add(k)
    if np.any(seen):
        used_rows = {}
        for i in np.flatnonzero(seen):
            used_rows.setdefault((pats[i], keys[i]), i)
        codes = model.decode(Zq[sorted(used_rows.values())])
        dist, _ = cKDTree(codes).query(X[seen])
        max_d = float(dist.max())
    else:
        max_d = math.inf
    return UsageAccounting(
        [e.pattern for e in dl.entries],
        [int(e.complexity) for e in dl.entries],
        [len(hit[e.pattern]) for e in dl.entries],
        eb.lower if eb else 0, eb.upper if eb else 0, max_d,
        int(np.count_nonzero(~seen)),
    )


@dataclass(frozen=True)
class Theorem1Result:
    holds: bool
    margin: float
    bits: float
    log2_lower: float

    def to_dict(self) -> dict:
        return {"holds": self.holds, "margin_bits": self.margin, "bits": self.bits,
                "log2_essence_lower": self.log2_lower}


def theorem1_check(dl: DescriptionLengthReport, eb: EssenceBounds) -> Theorem1Result:
    """Achieved bits against log2 of the packing lower bound (same U)."""
    if not dl.regular:
        raise NotCertifiedError("description length is not regular")
    if not math.isclose(dl.U, eb.U, rel_tol=1e-12):
        raise InvalidInputError(f"U mismatch: description length at {dl.U}, essence at {eb.U}")
    lo = math.log2(eb.lower)
    return Theorem1Result(dl.bits >= lo, dl.bits - lo, dl.bits, lo)


def theorem2_score(ua: UsageAccounting, against: str = "lower") -> int:
    """Residual plus redundancy; equals total set size minus the essence bound."""
    if against == "lower":
        return ua.residual + ua.redundancy_vs_lower
    if against == "upper":
        return ua.residual + ua.redundancy_vs_upper
    raise InvalidInputError(f"against must be 'lower' or 'upper', got {against!r}")


@dataclass
class BoundaryReport:
    threshold: float
    pairs: list[tuple[np.ndarray, np.ndarray, SpikingPattern, SpikingPattern]]

    @property
    def pair_count(self) -> int:
        return len(self.pairs)

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "pair_count": self.pair_count}

    def rows(self):
        for p, q, P, Q in self.pairs:
            yield [*map(float, p), *map(float, q), format_pattern(P), format_pattern(Q),
                   float(np.linalg.norm(p - q))]


def on_boundary_pairs(model, eb: EssenceBounds, U: float) -> BoundaryReport:
    """Cover-point pairs within U/2 whose encodings spike on different patterns.

    ``model`` needs an ``encode`` method and a ``params`` attribute.
    """
    pts = np.atleast_2d(eb.cover_points)
    pats = patterns_of(model.encode(pts), model.params)
    pairs = []
    for i, j in sorted(cKDTree(pts).query_pairs(U / 2 * _DIST_SLACK)):
        if pats[i] != pats[j] and np.linalg.norm(pts[i] - pts[j]) <= U / 2 * _DIST_SLACK:
            pairs.append((pts[i], pts[j], pats[i], pats[j]))
    return BoundaryReport(U / 2, pairs)
