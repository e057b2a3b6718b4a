"""Compatibility checks, achieved description length, the sub-quantization
check and model selection over a finite candidate list."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, EmptyInputError, InvalidInputError, NotCertifiedError
from .net import SpectrumVae, reconstruction_error
from .patterns import DominantRatioReport, PatternCensus, census, dominant_ratio
from .robustness import INFINITE, CertBudget, PatternCertification, certify_pattern, quantize_values
from .spectrum import SpectrumParams, SpikingPattern, embed, format_pattern, pattern_index, patterns_of


@dataclass(frozen=True)
class CompatibilityParams:
    U: float
    Gamma1: float
    Gamma2: float
    P0: float

    def __post_init__(self):
        for name in ("U", "Gamma1", "Gamma2"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {v}")
        if not 0 < self.P0 < 1:
            raise ConfigError(f"P0 must lie in (0, 1), got {self.P0}")


def _as_samples(samples) -> np.ndarray:
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.size == 0:
        raise EmptyInputError("need at least one sample")
    return X


@dataclass
class CompatibilityReport:
    params: CompatibilityParams
    n_samples: int
    max_recon_error: float
    errors: np.ndarray = field(repr=False)
    census: PatternCensus
    dominant: DominantRatioReport
    condition_i: bool
    condition_ii: bool

    @property
    def compatible(self) -> bool:
        return self.condition_i and self.condition_ii

    @staticmethod
    def conditions(params: CompatibilityParams, n_samples: int, max_err: float, delta: Fraction):
        cond_i = n_samples >= params.Gamma1 and max_err <= params.U
        cond_ii = delta >= Fraction(params.Gamma2)
        return cond_i, cond_ii

    def to_dict(self, with_errors: bool = False) -> dict:
        d = {
            "U": self.params.U, "Gamma1": self.params.Gamma1, "Gamma2": self.params.Gamma2,
            "P0": self.params.P0, "n_samples": self.n_samples,
            "max_recon_error": self.max_recon_error,
            "census": self.census.to_dict(), "dominant": self.dominant.to_dict(),
            "condition_i": self.condition_i, "condition_ii": self.condition_ii,
            "compatible": self.compatible,
        }
        if with_errors:
            d["errors"] = self.errors.tolist()
        return d


def check_compatibility(model: SpectrumVae, samples, params: CompatibilityParams) -> CompatibilityReport:
    """Sample-count plus bounded-error condition, and the dominant-ratio condition."""
    X = _as_samples(samples)
    Z = model.encode(X)
    errs = reconstruction_error(X, model.decode(Z))
    c = census(Z, model.params)
    dom = dominant_ratio(c, params.P0)
    max_err = float(errs.max())
    cond_i, cond_ii = CompatibilityReport.conditions(params, X.shape[0], max_err, dom.delta)
    return CompatibilityReport(params, X.shape[0], max_err, errs, c, dom, cond_i, cond_ii)


@dataclass
class DescriptionLengthReport:
    """Achieved description length at bound ``U`` (complexities certified at U/2)."""

    U: float
    params: SpectrumParams
    census: PatternCensus
    entries: list[PatternCertification]

    @property
    def regular(self) -> bool:
        return all(e.certified for e in self.entries)

    @property
    def total_sum(self) -> int | float:
        return sum(e.complexity for e in self.entries) if self.regular else INFINITE

    @property
    def bits(self) -> float:
        return math.log2(self.total_sum) if self.regular else INFINITE

    def entry(self, pattern: SpikingPattern) -> PatternCertification | None:
        for e in self.entries:
            if e.pattern == pattern:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "U": self.U, "certified_at": self.U / 2,
            "a": self.params.a, "b": self.params.b, "K": self.params.K,
            "patterns": [e.to_dict() for e in self.entries],
            "total_sum": self.total_sum if self.regular else "inf",
            "bits": self.bits if self.regular else "inf",
            "regular": self.regular,
            "label": "achieved description length; complexities are certified upper bounds",
        }


def description_length(model: SpectrumVae, samples, U: float,
                       budget: CertBudget = CertBudget(), rel_tol: float = 1e-3) -> DescriptionLengthReport:
    """Census the samples, certify each observed pattern at U/2 and sum the complexities."""
    if not U > 0:
        raise InvalidInputError(f"U must be positive, got {U}")
    X = _as_samples(samples)
    c = census(model.encode(X), model.params)
    entries = [certify_pattern(model, P, U / 2, model.params, budget, rel_tol) for P in c.patterns]
    return DescriptionLengthReport(U, model.params, c, entries)


@dataclass
class SubQuantReport:
    """Per-sample record of the quantized reconstruction check.

    ``err_plain`` is the un-quantized error, ``displacement`` the decoder
    output shift caused by quantizing, ``err_quant`` the error after
    quantizing.  ``err_quant <= err_plain + displacement`` always holds.
    """

    U: float
    patterns: list[SpikingPattern]
    seen: np.ndarray
    err_plain: np.ndarray
    displacement: np.ndarray
    err_quant: np.ndarray

    @property
    def success(self) -> np.ndarray:
        return self.seen & (self.err_quant <= self.U)

    @property
    def fraction(self) -> float:
        return float(self.success.mean())

    @property
    def fraction_plain_half(self) -> float:
        """Fraction of samples whose un-quantized error is at most U/2."""
        return float(np.mean(self.err_plain <= self.U / 2))

    @property
    def unseen_count(self) -> int:
        return int(np.count_nonzero(~self.seen))

    @property
    def transfer_violations(self) -> int:
        """Samples with plain error <= U/2 and a certified pattern that still fail."""
        eligible = self.seen & (self.err_plain <= self.U / 2)
        return int(np.count_nonzero(eligible & (self.err_quant > self.U)))

    def to_dict(self) -> dict:
        return {
            "U": self.U, "n": len(self.patterns), "fraction": self.fraction,
            "fraction_plain_half": self.fraction_plain_half,
            "unseen": self.unseen_count, "transfer_violations": self.transfer_violations,
            "max_err_quant": float(self.err_quant.max()),
        }

    def rows(self):
        for i, P in enumerate(self.patterns):
            yield (i, format_pattern(P), bool(self.seen[i]), float(self.err_plain[i]),
                   float(self.displacement[i]), float(self.err_quant[i]), bool(self.success[i]))


def quantize_codes(Z: np.ndarray, patterns: list[SpikingPattern], dl: DescriptionLengthReport):
    """Quantize each row within its pattern's certified grid.

    Returns (quantized spectra, seen mask, per-row grid index tuples).
    Rows whose pattern has no certified grid keep their code and are marked unseen.
    """
    Zq = Z.copy()
    seen = np.zeros(Z.shape[0], dtype=bool)
    keys: list[tuple | None] = [None] * Z.shape[0]
    by_pattern: dict[SpikingPattern, list[int]] = {}
    for i, P in enumerate(patterns):
        by_pattern.setdefault(P, []).append(i)
    for P, rows in by_pattern.items():
        e = dl.entry(P)
        if e is None or e.grid is None:
            continue
        rows = np.asarray(rows)
        seen[rows] = True
        if not P:
            for r in rows:
                keys[r] = ()
            continue
        idx, vals = quantize_values(Z[np.ix_(rows, pattern_index(P))], e.grid)
        Zq[rows] = embed(vals, P, dl.params)
        for r, k in zip(rows, map(tuple, idx.tolist())):
            keys[r] = k
    return Zq, seen, keys


def sub_quantization_check(model: SpectrumVae, holdout, dl: DescriptionLengthReport) -> SubQuantReport:
    """Encode, quantize in the certified grid, decode; success means error <= U.

    Holdout samples with a pattern that was never certified fail closed.
    """
    if not dl.regular:
        raise NotCertifiedError("description length has uncertified patterns")
    X = _as_samples(holdout)
    Z = model.encode(X)
    patterns = patterns_of(Z, model.params)
    Zq, seen, _ = quantize_codes(Z, patterns, dl)
    Xr = model.decode(Z)
    Xq = model.decode(Zq)
    return SubQuantReport(
        dl.U, patterns, seen,
        reconstruction_error(X, Xr), reconstruction_error(Xr, Xq), reconstruction_error(X, Xq),
    )


def select_best(candidates) -> int | None:
    """Index of the compatible candidate with the fewest bits, or ``None``.

    Ties go to the smaller total sum, then the lower max reconstruction
    error.  All candidates must share (a, b, K).
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyInputError("no candidates")
    shapes = {(dl.params.a, dl.params.b, dl.params.K) for _, dl in candidates}
    if len(shapes) > 1:
        raise ConfigError(f"candidates mix (a, b, K) settings: {sorted(shapes)}")
    ok = [i for i, (cr, _) in enumerate(candidates) if cr.compatible]
    if not ok:
        return None

    def key(i):
        cr, dl = candidates[i]
        return (dl.bits, dl.total_sum, cr.max_recon_error, i)

    return min(ok, key=key)
