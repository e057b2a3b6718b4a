"""Pattern census and the dominant-ratio statistic.

``prob_all_observed`` answers: drawing ``n0`` of the ``N`` encoded samples
uniformly without replacement, how likely is it that every observed pattern
shows up at least once?
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import EmptyInputError, InvalidInputError
from .spectrum import SpectrumParams, SpikingPattern, format_pattern, make_pattern, patterns_of

EXACT_MAX_PATTERNS = 20


@dataclass(frozen=True)
class PatternCensus:
    """Counts per observed pattern, most frequent first (ties by pattern order)."""

    counts: tuple[tuple[SpikingPattern, int], ...]

    def __post_init__(self):
        if any(n <= 0 for _, n in self.counts):
            raise InvalidInputError("census counts must be positive")

    @classmethod
    def from_counts(cls, mapping) -> "PatternCensus":
        items = [(make_pattern(p), int(n)) for p, n in dict(mapping).items()]
        items.sort(key=lambda t: (-t[1], len(t[0]), t[0]))
        return cls(tuple(items))

    @property
    def N(self) -> int:
        return sum(n for _, n in self.counts)

    @property
    def M(self) -> int:
        return len(self.counts)

    @property
    def patterns(self) -> list[SpikingPattern]:
        return [p for p, _ in self.counts]

    @property
    def sizes(self) -> list[int]:
        return [n for _, n in self.counts]

    def as_dict(self) -> dict[SpikingPattern, int]:
        return dict(self.counts)

    def to_dict(self) -> dict:
        return {"N": self.N, "M": self.M,
                "counts": [{"pattern": list(p), "count": n} for p, n in self.counts]}

    def rows(self) -> list[tuple[str, int, float]]:
        N = self.N
        return [(format_pattern(p), n, n / N) for p, n in self.counts]


def census_of_patterns(patterns: Iterable[Sequence[int]]) -> PatternCensus:
    c = Counter(make_pattern(p) for p in patterns)
    if not c:
        raise EmptyInputError("census needs at least one spectrum")
    return PatternCensus.from_counts(c)


def census(spectra, p: SpectrumParams) -> PatternCensus:
    """Exact pattern counts over a list/array of spectra."""
    Z = np.asarray(spectra, dtype=np.float64)
    if Z.size == 0:
        raise EmptyInputError("census needs at least one spectrum")
    return census_of_patterns(patterns_of(Z, p))


def _sizes(c) -> list[int]:
    return c.sizes if isinstance(c, PatternCensus) else [int(n) for n in c]


def _avoid_ratios(N: int, n0: int) -> np.ndarray:
    """r[s] = C(N - s, n0) / C(N, n0) for s = 0..N, in log space."""
    r = np.zeros(N + 1)
    m = N - n0  # r[s] = 0 once s > N - n0
    i = np.arange(m)
    r[0] = 1.0
    if m > 0:
        r[1:m + 1] = np.exp(np.cumsum(np.log1p(-n0 / (N - i))))
    return r


def _inclusion_exclusion(sizes: list[int], n0: int) -> float:
    N = sum(sizes)
    # integer coefficients of prod_m (1 - x^{N_m}); groups subsets by their summed size
    coef = np.zeros(N + 1, dtype=object)
    coef[0] = 1
    top = 0
    for n in sizes:
        nxt = coef.copy()
        nxt[n:top + n + 1] -= coef[:top + 1]
        coef, top = nxt, top + n
    r = _avoid_ratios(N, n0)
    nz = [s for s in range(N + 1) if coef[s] != 0 and r[s] != 0.0]
    return math.fsum(float(coef[s]) * r[s] for s in nz)


def _log_comb(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _hypergeom_pmf(j, pop, n, t):
    """P(j successes in t draws from pop items, n of them successes); 0 off-support."""
    j, t = np.broadcast_arrays(j, t)
    ok = (j <= n) & (t - j >= 0) & (t - j <= pop - n) & (t <= pop)
    out = np.zeros(j.shape)
    jj, tt = j[ok].astype(float), t[ok].astype(float)
    out[ok] = np.exp(_log_comb(n, jj) + _log_comb(pop - n, tt - jj) - _log_comb(pop, tt))
    return out


def _hypergeom_dp(sizes: list[int], n0: int) -> float:
    """Positive-term recursion: add patterns one at a time, tracking how many
    of the drawn items came from the patterns so far, each hit at least once."""
    f = np.zeros(n0 + 1)
    f[0] = 1.0
    pop = 0
    t = np.arange(n0 + 1)
    for n in sizes:
        pop += n
        j = np.arange(1, min(n, n0) + 1)
        # pmf[t, j]: j of the t draws land in the new pattern
        pmf = _hypergeom_pmf(j[None, :], pop, n, t[:, None])
        lag = t[:, None] - j[None, :]
        prev = np.where(lag >= 0, f[np.maximum(lag, 0)], 0.0)
        f = np.sum(prev * pmf, axis=1)
    return float(f[n0])


def prob_all_observed(c, n0: int, method: str = "auto") -> float:
    """Probability that a size-``n0`` draw without replacement hits every pattern.

    ``c`` is a :class:`PatternCensus` or a sequence of pattern counts.
    Inclusion-exclusion is used up to 20 patterns, a positive-term
    hypergeometric recursion beyond that (or on request).
    """
    sizes = _sizes(c)
    if not sizes or any(n <= 0 for n in sizes):
        raise InvalidInputError("need at least one positive pattern count")
    N = sum(sizes)
    if int(n0) != n0 or not 1 <= n0 <= N:
        raise InvalidInputError(f"n0 must be an integer in [1, {N}], got {n0}")
    n0 = int(n0)
    M = len(sizes)
    if M == 1:
        return 1.0
    if n0 < M:
        return 0.0
    if method == "auto":
        method = "exact" if M <= EXACT_MAX_PATTERNS else "dp"
    if method == "exact":
        val = _inclusion_exclusion(sizes, n0)
    elif method == "dp":
        val = _hypergeom_dp(sizes, n0)
    else:
        raise InvalidInputError(f"unknown method {method!r}")
    return min(1.0, max(0.0, val))


@dataclass(frozen=True)
class DominantRatioReport:
    P0: float
    N: int
    N0: int
    delta: Fraction
    probability_at_N0: float
    probability_at_N0_minus_1: float

    def to_dict(self) -> dict:
        return {
            "P0": self.P0, "N": self.N, "N0": self.N0,
            "delta": f"{self.delta.numerator}/{self.delta.denominator}",
            "delta_float": float(self.delta),
            "probability_at_N0": self.probability_at_N0,
            "probability_at_N0_minus_1": self.probability_at_N0_minus_1,
        }


def dominant_ratio(c, P0: float) -> DominantRatioReport:
    """Smallest ``N0`` whose random draw sees every pattern with probability >= P0."""
    if not 0 < P0 < 1:
        raise InvalidInputError(f"P0 must lie in (0, 1), got {P0}")
    sizes = _sizes(c)
    N = sum(sizes)
    lo, hi = 1, N  # prob(hi) = 1 >= P0
    while lo < hi:
        mid = (lo + hi) // 2
        if prob_all_observed(sizes, mid) >= P0:
            hi = mid
        else:
            lo = mid + 1
    below = prob_all_observed(sizes, lo - 1) if lo > 1 else 0.0
    return DominantRatioReport(P0, N, lo, Fraction(N, lo), prob_all_observed(sizes, lo), below)
