"""Decoder robustness under clamped latent perturbations, quantization grids
and certified pattern complexity.

Certification here is statistical: a decoder is probed on base spectra
preserved by a pattern (a lattice sweep for small patterns, otherwise random
draws), each perturbed by every signed corner of the box plus random
interior draws.  The resulting :class:`Certificate` records the budget and
seed so the evidence can be replayed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import InputShapeError, InvalidBoxError, PatternMismatchError
from .spectrum import (
    DORMANT,
    SpectrumParams,
    SpikingPattern,
    embed,
    is_preserved_by,
    make_pattern,
    pattern_index,
)

INFINITE = math.inf
ALPHA_FLOOR_EXPONENT = 20
_CHUNK_ROWS = 1 << 16

Decoder = Callable[[np.ndarray], np.ndarray]


def as_decoder(decoder) -> Decoder:
    """Accept a model (anything with ``.decode``) or a plain callable."""
    return decoder.decode if hasattr(decoder, "decode") else decoder


@dataclass(frozen=True)
class PerturbBox:
    pattern: SpikingPattern
    alphas: tuple[float, ...]
    certificate: "Certificate | None" = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if len(self.alphas) != len(self.pattern):
            raise InvalidBoxError(f"{len(self.alphas)} half-widths for pattern of size {len(self.pattern)}")
        if any(not (a > 0 and math.isfinite(a)) for a in self.alphas):
            raise InvalidBoxError(f"half-widths must be positive and finite: {self.alphas}")


@dataclass(frozen=True)
class CertBudget:
    """How hard :func:`certify` probes a decoder.

    ``base_points`` random base spectra are used unless a lattice sweep
    applies (pattern size <= 3 and at most ``lattice_max`` lattice points).
    Each base point gets every signed corner of the box (if ``corners``;
    random corners once there are more than ``max_corners``) plus
    ``perturbs_per_point`` uniform interior draws.
    """

    base_points: int = 256
    perturbs_per_point: int = 8
    seed: int = 0
    corners: bool = True
    lattice_max: int = 10**6
    max_corners: int = 4096


@dataclass
class Certificate:
    pattern: SpikingPattern
    alphas: tuple[float, ...]
    U: float
    base_points_tested: int
    perturbations_per_point: int
    violations: int
    max_observed_deviation: float
    seed: int
    sampling: str = "random"

    @property
    def n_tests(self) -> int:
        return self.base_points_tested * self.perturbations_per_point

    @property
    def vacuous(self) -> bool:
        return self.n_tests == 0

    @property
    def valid(self) -> bool:
        return self.violations == 0 and not self.vacuous

    def to_dict(self) -> dict:
        return {
            "pattern": list(self.pattern),
            "alphas": list(self.alphas),
            "U": self.U,
            "base_points_tested": self.base_points_tested,
            "perturbations_per_point": self.perturbations_per_point,
            "violations": self.violations,
            "max_observed_deviation": self.max_observed_deviation,
            "seed": self.seed,
            "sampling": self.sampling,
            "valid": self.valid,
            "vacuous": self.vacuous,
        }


# -- perturbation and quantization --------------------------------------------


def perturb_truncate(z, pattern: Sequence[int], eps, p: SpectrumParams) -> np.ndarray:
    """Add ``eps`` to the spiking dims of ``z`` and clamp back into [a, b].

    Clamping is to ``a`` (not 0) from below, so the pattern never changes.
    ``eps`` holds one value per pattern dim.
    """
    pattern = make_pattern(pattern, p.K)
    z = np.asarray(z, dtype=np.float64)
    if not is_preserved_by(z, pattern, p):
        raise PatternMismatchError(f"spectrum is not preserved by pattern {pattern}")
    eps = np.asarray(eps, dtype=np.float64).reshape(-1)
    if eps.size != len(pattern):
        raise InputShapeError(f"need {len(pattern)} perturbations, got {eps.size}")
    out = z.copy()
    idx = pattern_index(pattern)
    out[idx] = np.clip(z[idx] + eps, p.a, p.b)
    return out


def _exact(x: float) -> Fraction:
    # the shortest decimal that round-trips to x, so 0.1 means 1/10
    return Fraction(repr(float(x)))


def quant_count(a: float, b: float, alpha: float) -> int:
    """Smallest integer strictly greater than (b - a) / (2 alpha), in exact rationals.

    Each float is read as its shortest round-trip decimal.
    """
    if not (alpha > 0 and math.isfinite(alpha)):
        raise InvalidBoxError(f"alpha must be positive and finite, got {alpha}")
    ratio = (_exact(b) - _exact(a)) / (2 * _exact(alpha))
    return math.floor(ratio) + 1


@dataclass(frozen=True)
class QuantGrid:
    pattern: SpikingPattern
    alphas: tuple[float, ...]
    counts: tuple[int, ...]
    scales: tuple[np.ndarray, ...] = field(repr=False)
    params: SpectrumParams

    @property
    def size(self) -> int:
        return math.prod(self.counts)


def build_grid(pattern: Sequence[int], alphas: Sequence[float], p: SpectrumParams) -> QuantGrid:
    """Midpoint scales of ``Q`` equal segments of [a, b] per pattern dim."""
    pattern = make_pattern(pattern, p.K)
    alphas = tuple(float(x) for x in alphas)
    if len(alphas) != len(pattern):
        raise InvalidBoxError(f"{len(alphas)} half-widths for pattern of size {len(pattern)}")
    counts, scales = [], []
    for alpha in alphas:
        Q = quant_count(p.a, p.b, alpha)
        i = np.arange(1, Q + 1)
        counts.append(Q)
        scales.append(p.a + (2 * i - 1) * (p.b - p.a) / (2 * Q))
    return QuantGrid(pattern, alphas, tuple(counts), tuple(scales), p)


def quantize_values(values, grid: QuantGrid) -> tuple[np.ndarray, np.ndarray]:
    """Snap per-dim values (shape (n, L)) to the nearest scale, ties to the lower one.

    Returns ``(indices, snapped_values)``.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    L = len(grid.pattern)
    if values.shape[1] != L:
        raise InputShapeError(f"expected {L} values per row, got {values.shape[1]}")
    idx = np.empty(values.shape, dtype=np.int64)
    out = np.empty(values.shape)
    p = grid.params
    for l in range(L):
        sc = grid.scales[l]
        Q = sc.size
        seg = (p.b - p.a) / Q
        v = values[:, l]
        j = np.clip(np.floor((v - p.a) / seg).astype(np.int64), 0, Q - 1)
        cands = np.stack([np.clip(j - 1, 0, Q - 1), j, np.clip(j + 1, 0, Q - 1)], axis=1)
        dist = np.abs(v[:, None] - sc[cands])
        # argmin keeps the first minimum; sort candidates so that is the lower scale
        order = np.argsort(cands, axis=1, kind="stable")
        cands = np.take_along_axis(cands, order, axis=1)
        dist = np.take_along_axis(dist, order, axis=1)
        pick = cands[np.arange(v.size), np.argmin(dist, axis=1)]
        idx[:, l] = pick
        out[:, l] = sc[pick]
    return idx, out


def quantize(z, grid: QuantGrid) -> np.ndarray:
    """Quantize a spectrum preserved by ``grid.pattern`` onto the grid."""
    p = grid.params
    z = np.asarray(z, dtype=np.float64)
    if not is_preserved_by(z, grid.pattern, p):
        raise PatternMismatchError(f"spectrum is not preserved by pattern {grid.pattern}")
    if not grid.pattern:
        return z.copy()
    _, vals = quantize_values(z[pattern_index(grid.pattern)][None, :], grid)
    return embed(vals[0], grid.pattern, p)


@dataclass(frozen=True)
class RepresentationSet:
    """All quantized spectra of a grid, enumerated lexicographically over dims."""

    grid: QuantGrid

    @property
    def size(self) -> int:
        return self.grid.size

    def __len__(self) -> int:
        return self.size

    def index_tuples(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(Q) for Q in self.grid.counts))

    def __iter__(self) -> Iterator[np.ndarray]:
        for idx in self.index_tuples():
            yield self.spectrum(idx)

    def spectrum(self, idx: Sequence[int]) -> np.ndarray:
        vals = [self.grid.scales[l][i] for l, i in enumerate(idx)]
        return embed(np.asarray(vals), self.grid.pattern, self.grid.params)

    def to_array(self, limit: int = 10**6) -> np.ndarray:
        if self.size > limit:
            raise ValueError(f"representation set of size {self.size} exceeds limit {limit}")
        if not self.grid.pattern:
            return np.zeros((1, self.grid.params.K))
        mesh = np.meshgrid(*self.grid.scales, indexing="ij")
        vals = np.stack([m.reshape(-1) for m in mesh], axis=1)
        return embed(vals, self.grid.pattern, self.grid.params)


# -- certification --------------------------------------------------------------


def _lattice_axis(p: SpectrumParams, res: float) -> np.ndarray:
    n = int(math.ceil((p.b - p.a) / res)) + 1
    return np.linspace(p.a, p.b, n)


def _plan(pattern, alphas, p: SpectrumParams, budget: CertBudget):
    L = len(pattern)
    res = min(alphas) / 2
    if L <= 3:
        n_axis = int(math.ceil((p.b - p.a) / res)) + 1
        if n_axis**L <= budget.lattice_max:
            return "lattice", n_axis**L
    return "random", budget.base_points


def _corner_signs(L: int, budget: CertBudget, rng: np.random.Generator) -> np.ndarray:
    if not budget.corners or L == 0:
        return np.zeros((0, L))
    if 2**L <= budget.max_corners:
        r = np.arange(2**L)[:, None]
        return np.where((r >> np.arange(L)[None, :]) & 1, 1.0, -1.0)
    return rng.choice([-1.0, 1.0], size=(budget.max_corners, L))


def perturbation_chunks(pattern, alphas, p: SpectrumParams, budget: CertBudget):
    """Deterministic stream of ``(base_values, eps)`` test chunks.

    ``base_values`` has shape (B, L), ``eps`` shape (B, R, L).  Replaying the
    same stream with scaled ``eps`` reuses exactly the same directions.
    """
    L = len(pattern)
    alphas = np.asarray(alphas, dtype=np.float64)
    sampling, n_base = _plan(pattern, alphas, p, budget)
    ss_base, ss_corner, ss_pert = np.random.SeedSequence(budget.seed).spawn(3)
    base_rng = np.random.default_rng(ss_base)
    signs = _corner_signs(L, budget, np.random.default_rng(ss_corner))
    R = signs.shape[0] + budget.perturbs_per_point
    if R == 0 or n_base == 0:
        return sampling, n_base, R, iter(())

    if sampling == "lattice":
        axis = _lattice_axis(p, min(alphas) / 2)

        def base_iter():
            mesh = np.meshgrid(*([axis] * L), indexing="ij")
            flat = np.stack([m.reshape(-1) for m in mesh], axis=1)
            for s in range(0, flat.shape[0], max(1, _CHUNK_ROWS // R)):
                yield flat[s:s + max(1, _CHUNK_ROWS // R)]
    else:
        def base_iter():
            left = n_base
            step = max(1, _CHUNK_ROWS // R)
            while left > 0:
                m = min(step, left)
                yield base_rng.uniform(p.a, p.b, size=(m, L))
                left -= m

    def gen():
        for chunk_seq, base in zip(_spawn_forever(ss_pert), base_iter()):
            rng = np.random.default_rng(chunk_seq)
            B = base.shape[0]
            corner = np.broadcast_to(signs * alphas, (B,) + signs.shape)
            inner = rng.uniform(-1.0, 1.0, size=(B, budget.perturbs_per_point, L)) * alphas
            yield base, np.concatenate([corner, inner], axis=1)

    return sampling, n_base, R, gen()


def _spawn_forever(ss: np.random.SeedSequence):
    while True:
        yield from ss.spawn(16)


def _evaluate(dec: Decoder, pattern, p: SpectrumParams, chunks, U: float, scale: float = 1.0):
    violations = 0
    max_dev = 0.0
    for base, eps in chunks:
        B, R, L = eps.shape
        z = embed(base, pattern, p)
        pert = np.clip(base[:, None, :] + scale * eps, p.a, p.b).reshape(B * R, L)
        x0 = np.asarray(dec(z))
        x1 = np.asarray(dec(embed(pert, pattern, p))).reshape(B, R, -1)
        dev = np.sqrt(np.sum((x1 - x0[:, None, :]) ** 2, axis=2))
        violations += int(np.count_nonzero(dev > U))
        max_dev = max(max_dev, float(dev.max()))
    return violations, max_dev


def certify(decoder, pattern: Sequence[int], box: PerturbBox | Sequence[float], U: float,
            p: SpectrumParams, budget: CertBudget = CertBudget()) -> Certificate:
    """Probe whether perturbations inside ``box`` move the decoder output by at most ``U``.

    A failing certificate is a normal result, not an error.  A certificate
    built from zero tests is never valid.
    """
    pattern = make_pattern(pattern, p.K)
    alphas = tuple(float(x) for x in (box.alphas if isinstance(box, PerturbBox) else box))
    if isinstance(box, PerturbBox) and box.pattern != pattern:
        raise InvalidBoxError(f"box pattern {box.pattern} != {pattern}")
    PerturbBox(pattern, alphas)
    dec = as_decoder(decoder)
    if not pattern:
        # only the all-zero spectrum is preserved; no perturbation exists
        return Certificate(pattern, alphas, U, 1, 1 if budget.corners or budget.perturbs_per_point else 0,
                           0, 0.0, budget.seed, "dormant")
    sampling, n_base, R, chunks = perturbation_chunks(pattern, alphas, p, budget)
    violations, max_dev = _evaluate(dec, pattern, p, chunks, U)
    return Certificate(pattern, alphas, U, n_base if R else 0, R, violations, max_dev, budget.seed, sampling)


def replay(decoder, cert: Certificate, p: SpectrumParams, budget: CertBudget, scale: float) -> Certificate:
    """Re-run a certificate's exact test stream with perturbations scaled by ``scale``."""
    dec = as_decoder(decoder)
    sampling, n_base, R, chunks = perturbation_chunks(cert.pattern, cert.alphas, p, budget)
    violations, max_dev = _evaluate(dec, cert.pattern, p, chunks, cert.U, scale)
    return replace(cert, violations=violations, max_observed_deviation=max_dev,
                   alphas=tuple(scale * a for a in cert.alphas))


def search_qualified(decoder, pattern: Sequence[int], U: float, p: SpectrumParams,
                     budget: CertBudget = CertBudget(), rel_tol: float = 1e-3,
                     growth: float = 1.25, max_passes: int = 64) -> PerturbBox | None:
    """Find a large certified box, or ``None`` when even the smallest half-width fails.

    A shared half-width is bisected (geometrically) over
    ``[(b - a) / 2**20, b - a]``; then each dim is grown by ``growth`` in turn
    while the box keeps certifying, until a full pass makes no progress.
    Half-widths beyond ``b - a`` are equivalent after clamping, so that is
    the ceiling.
    """
    pattern = make_pattern(pattern, p.K)
    dec = as_decoder(decoder)
    L = len(pattern)
    hi = p.b - p.a
    lo = hi / 2**ALPHA_FLOOR_EXPONENT
    if L == 0:
        cert = certify(dec, pattern, (), U, p, budget)
        return PerturbBox(pattern, (), cert)

    def check(alphas):
        return certify(dec, pattern, tuple(alphas), U, p, budget)

    top = check([hi] * L)
    if top.valid:
        return PerturbBox(pattern, (hi,) * L, top)
    best = check([lo] * L)
    if not best.valid:
        return None
    while hi / lo > 1 + rel_tol:
        mid = math.sqrt(lo * hi)
        cert = check([mid] * L)
        if cert.valid:
            lo, best = mid, cert
        else:
            hi = mid
    alphas = [lo] * L
    ceiling = p.b - p.a
    for _ in range(max_passes):
        grew = False
        for l in range(L):
            if alphas[l] >= ceiling:
                continue
            trial = list(alphas)
            trial[l] = min(alphas[l] * growth, ceiling)
            cert = check(trial)
            if cert.valid:
                alphas, best, grew = trial, cert, True
        if not grew:
            break
    return PerturbBox(pattern, tuple(alphas), best)


@dataclass
class PatternCertification:
    """Outcome of searching a certified box for one pattern."""

    pattern: SpikingPattern
    U: float
    box: PerturbBox | None
    grid: QuantGrid | None
    complexity: int | float

    @property
    def certified(self) -> bool:
        return self.box is not None

    def to_dict(self) -> dict:
        return {
            "pattern": list(self.pattern),
            "U": self.U,
            "alphas": list(self.box.alphas) if self.box else None,
            "counts": list(self.grid.counts) if self.grid else None,
            "complexity": self.complexity if self.complexity != INFINITE else "inf",
            "certificate": self.box.certificate.to_dict() if self.box and self.box.certificate else None,
        }


def certify_pattern(decoder, pattern: Sequence[int], U: float, p: SpectrumParams,
                    budget: CertBudget = CertBudget(), rel_tol: float = 1e-3) -> PatternCertification:
    pattern = make_pattern(pattern, p.K)
    box = search_qualified(decoder, pattern, U, p, budget, rel_tol)
    if box is None:
        return PatternCertification(pattern, U, None, None, INFINITE)
    if pattern == DORMANT:
        grid = build_grid((), (), p)
        return PatternCertification(pattern, U, box, grid, 1)
    grid = build_grid(pattern, box.alphas, p)
    return PatternCertification(pattern, U, box, grid, grid.size)


def complexity(decoder, pattern: Sequence[int], U: float, p: SpectrumParams,
               budget: CertBudget = CertBudget(), rel_tol: float = 1e-3) -> int | float:
    """Certified complexity (an upper bound on the optimum): product of grid
    counts of the best box found, or ``INFINITE`` if nothing certifies."""
    return certify_pattern(decoder, pattern, U, p, budget, rel_tol).complexity
