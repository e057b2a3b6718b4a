"""Bounded data supports and seeded samplers (two disks, ring, point clouds)."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, EmptyInputError, InputShapeError

TWO_CIRCLE_CENTERS = ((2.0, 2.0), (5.0, 2.0))
TWO_CIRCLE_RADIUS = 1.2


@dataclass
class BoundedSupport:
    """A bounded region with a membership test and a seeded sampler.

    ``points`` is set for empirical supports (custom point files); the
    essence grid is then built from the snapped points instead of the
    membership predicate.
    """

    D: int
    lam: np.ndarray
    mu: np.ndarray
    membership: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[int, np.random.Generator], np.ndarray]
    analytic_tag: dict | None = None
    points: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        if self.lam.shape != (self.D,) or self.mu.shape != (self.D,):
            raise InputShapeError("lam and mu must have length D")
        if not np.all(self.lam <= self.mu):
            raise ConfigError("need lam <= mu in every dimension")

    def sample(self, n: int, seed: int) -> np.ndarray:
        return self.sampler(n, np.random.default_rng(seed))

    @property
    def bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lam.tolist(), self.mu.tolist()))


def _rejection_in_disk(center, radius, n, rng, inner=0.0) -> np.ndarray:
    cx, cy = center
    out = np.empty((0, 2))
    while out.shape[0] < n:
        m = max(2 * (n - out.shape[0]), 16)
        pts = rng.uniform([cx - radius, cy - radius], [cx + radius, cy + radius], size=(m, 2))
        r2 = (pts[:, 0] - cx) ** 2 + (pts[:, 1] - cy) ** 2
        keep = pts[(r2 <= radius**2) & (r2 >= inner**2)]
        out = np.vstack([out, keep])
    return out[:n]


def disks(centers, radii) -> BoundedSupport:
    """Uniform distribution on a union of disjoint disks."""
    centers = np.asarray(centers, dtype=np.float64)
    radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), (len(centers),)).copy()
    areas = np.pi * radii**2
    weights = areas / areas.sum()

    def membership(X):
        X = np.atleast_2d(X)
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        return np.any(d2 <= radii[None, :] ** 2, axis=1)

    def sampler(n, rng):
        which = rng.choice(len(centers), size=n, p=weights)
        out = np.empty((n, 2))
        for j in range(len(centers)):
            idx = np.flatnonzero(which == j)
            if idx.size:
                out[idx] = _rejection_in_disk(centers[j], radii[j], idx.size, rng)
        return out

    lam = (centers - radii[:, None]).min(axis=0)
    mu = (centers + radii[:, None]).max(axis=0)
    tag = {"kind": "disks", "centers": centers.tolist(), "radii": radii.tolist()}
    return BoundedSupport(2, lam, mu, membership, sampler, tag)


def two_circles() -> BoundedSupport:
    """Two radius-1.2 disks centred at (2, 2) and (5, 2)."""
    s = disks(TWO_CIRCLE_CENTERS, TWO_CIRCLE_RADIUS)
    s.analytic_tag["kind"] = "two-circles"
    return s


def ring(center=(2.0, 2.0), inner=0.6, outer=1.2) -> BoundedSupport:
    """Uniform distribution on an annulus."""
    c = np.asarray(center, dtype=np.float64)

    def membership(X):
        X = np.atleast_2d(X)
        r2 = ((X - c) ** 2).sum(axis=1)
        return (r2 <= outer**2) & (r2 >= inner**2)

    def sampler(n, rng):
        return _rejection_in_disk(c, outer, n, rng, inner=inner)

    tag = {"kind": "ring", "center": c.tolist(), "inner": inner, "outer": outer}
    return BoundedSupport(2, c - outer, c + outer, membership, sampler, tag)


def interval(lo=0.0, hi=1.0) -> BoundedSupport:
    """Uniform distribution on a 1-D interval."""
    return BoundedSupport(
        1, [lo], [hi],
        lambda X: ((np.atleast_2d(X)[:, 0] >= lo) & (np.atleast_2d(X)[:, 0] <= hi)),
        lambda n, rng: rng.uniform(lo, hi, size=(n, 1)),
        {"kind": "interval", "lo": lo, "hi": hi},
    )


def single_point(x) -> BoundedSupport:
    x = np.asarray(x, dtype=np.float64)
    return BoundedSupport(
        x.size, x, x,
        lambda X: np.all(np.isclose(np.atleast_2d(X), x), axis=1),
        lambda n, rng: np.tile(x, (n, 1)),
        {"kind": "point", "x": x.tolist()},
    )


def empirical(points) -> BoundedSupport:
    """Support given by a finite point cloud; sampling draws with replacement."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if P.shape[0] == 0:
        raise EmptyInputError("empty point cloud")

    def membership(X):
        X = np.atleast_2d(X)
        return np.array([np.any(np.all(P == row, axis=1)) for row in X])

    def sampler(n, rng):
        return P[rng.integers(0, P.shape[0], size=n)]

    return BoundedSupport(P.shape[1], P.min(axis=0), P.max(axis=0), membership, sampler,
                          {"kind": "points", "n": int(P.shape[0])}, points=P)


DATASETS = {"two-circles": two_circles, "ring": ring}


def get_support(name: str, points_file=None) -> BoundedSupport:
    if name == "custom":
        if points_file is None:
            raise ConfigError("dataset 'custom' needs a point file")
        return empirical(read_points(points_file))
    try:
        return DATASETS[name]()
    except KeyError:
        raise ConfigError(f"unknown dataset {name!r}; choose from {sorted(DATASETS) + ['custom']}") from None


def gen_data(name: str, n: int, seed: int, points_file=None) -> np.ndarray:
    if n < 1:
        raise ConfigError("n must be >= 1")
    return get_support(name, points_file).sample(n, seed)


def write_points(X, path) -> Path:
    """Point CSV: header ``x1,...,xD`` then one row per point."""
    X = np.atleast_2d(X)
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{d + 1}" for d in range(X.shape[1])])
        for row in X:
            w.writerow([repr(float(v)) for v in row])
    return path


def read_points(path) -> np.ndarray:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise EmptyInputError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if not all(h.strip().lower().startswith("x") for h in header):
        raise InputShapeError(f"{path}: expected header x1,...,xD, got {header}")
    return np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(-1, len(header))
