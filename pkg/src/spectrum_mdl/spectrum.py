"""Spectra, spiking patterns and the threshold/cap truncation of latent codes.

A spectrum is a length-K vector whose entries are exactly 0 or lie in
``[a, b]``.  Its spiking pattern is the sorted tuple of 1-based dimensions
that are nonzero; the empty tuple is the dormant pattern.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputShapeError, InvalidInputError, InvalidSpectrumError

SpikingPattern = tuple[int, ...]
DORMANT: SpikingPattern = ()


@dataclass(frozen=True)
class SpectrumParams:
    """Spiking threshold ``a``, spiking bound ``b`` and latent width ``K``."""

    a: float
    b: float
    K: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise InvalidInputError("a and b must be finite")
        if not 0 < self.a < self.b:
            raise InvalidInputError(f"need 0 < a < b, got a={self.a}, b={self.b}")
        if int(self.K) != self.K or self.K < 1:
            raise InvalidInputError(f"K must be a positive integer, got {self.K}")

    @property
    def width(self) -> float:
        return self.b - self.a


def make_pattern(dims: Iterable[int], K: int | None = None) -> SpikingPattern:
    """Normalise ``dims`` into a sorted, deduplicated pattern tuple."""
    pattern = tuple(sorted({int(d) for d in dims}))
    if pattern and pattern[0] < 1:
        raise InvalidInputError(f"pattern dims are 1-based, got {pattern}")
    if K is not None and pattern and pattern[-1] > K:
        raise InvalidInputError(f"pattern {pattern} exceeds K={K}")
    return pattern


def pattern_index(pattern: SpikingPattern) -> np.ndarray:
    """0-based array indices for a pattern."""
    return np.asarray(pattern, dtype=np.intp) - 1


def truncate(z_pre, p: SpectrumParams) -> np.ndarray:
    """Map pre-activations to a spectrum.

    Values below ``a`` become exactly 0, values above ``b`` become ``b`` and
    values in ``[a, b]`` pass through.  Works elementwise on any shape.
    """
    z_pre = np.asarray(z_pre, dtype=np.float64)
    if not np.all(np.isfinite(z_pre)):
        raise InvalidInputError("truncate received non-finite pre-activations")
    out = np.where(z_pre > p.b, p.b, z_pre)
    return np.where(z_pre < p.a, 0.0, out)


def check_spectrum(z, p: SpectrumParams) -> np.ndarray:
    """Return ``z`` as a float array after validating spectrum invariants."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[-1] != p.K:
        raise InputShapeError(f"spectrum length {z.shape[-1]} != K={p.K}")
    ok = (z == 0.0) | ((z >= p.a) & (z <= p.b))
    if not np.all(ok):
        bad = np.argwhere(~ok)[0]
        raise InvalidSpectrumError(
            f"entry {tuple(bad)} = {z[tuple(bad)]!r} is neither 0 nor in [{p.a}, {p.b}]"
        )
    return z


def pattern_of(z, p: SpectrumParams) -> SpikingPattern:
    """Spiking pattern of a single spectrum."""
    z = check_spectrum(z, p)
    if z.ndim != 1:
        raise InputShapeError("pattern_of expects a single spectrum; use patterns_of")
    return tuple(int(k) + 1 for k in np.flatnonzero(z >= p.a))


def patterns_of(Z, p: SpectrumParams) -> list[SpikingPattern]:
    """Spiking patterns for every row of an (n, K) array of spectra."""
    Z = check_spectrum(np.atleast_2d(Z), p)
    mask = Z >= p.a
    dims = np.arange(1, p.K + 1)
    return [tuple(int(k) for k in dims[row]) for row in mask]


def is_dormant(z, p: SpectrumParams) -> bool:
    return pattern_of(z, p) == DORMANT


def is_preserved_by(z, pattern: Sequence[int], p: SpectrumParams) -> bool:
    """True iff the nonzero dimensions of ``z`` are exactly ``pattern``."""
    try:
        return pattern_of(z, p) == make_pattern(pattern)
    except (InvalidSpectrumError, InputShapeError, InvalidInputError):
        return False


def embed(values, pattern: SpikingPattern, p: SpectrumParams) -> np.ndarray:
    """Build spectra preserved by ``pattern`` from per-dimension values.

    ``values`` has shape (..., len(pattern)); the result has shape (..., K)
    with zeros outside the pattern.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.shape[-1] != len(pattern):
        raise InputShapeError(f"got {values.shape[-1]} values for pattern of size {len(pattern)}")
    out = np.zeros(values.shape[:-1] + (p.K,))
    out[..., pattern_index(pattern)] = values
    return out


def format_pattern(pattern: SpikingPattern) -> str:
    """Render a pattern for CSV/report files, e.g. ``{2,3}`` or ``{}``."""
    return "{" + ",".join(str(k) for k in pattern) + "}"


def parse_pattern(text: str) -> SpikingPattern:
    body = text.strip().strip("{}").strip()
    if not body:
        return DORMANT
    return make_pattern(int(tok) for tok in body.split(","))
