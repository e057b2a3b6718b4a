"""Spectrum autoencoder with description-length, robustness-certification and
covering-number accounting."""

__version__ = "0.1.0"

from .spectrum import DORMANT, SpectrumParams, pattern_of, patterns_of, truncate  # noqa: E402
from .net import SpectrumVae, TrainConfig, gradient_check, load_model, save_model, train  # noqa: E402
from .robustness import CertBudget, PerturbBox, build_grid, certify, complexity, quantize  # noqa: E402
from .patterns import census, dominant_ratio, prob_all_observed  # noqa: E402
from .mdl import CompatibilityParams, check_compatibility, description_length, select_best  # noqa: E402
from .essence import essence_bounds, on_boundary_pairs, theorem1_check, theorem2_score, used_codes  # noqa: E402
from .info import discrete_entropy, mutual_information  # noqa: E402

__all__ = [
    "DORMANT", "SpectrumParams", "pattern_of", "patterns_of", "truncate",
    "SpectrumVae", "TrainConfig", "gradient_check", "load_model", "save_model", "train",
    "CertBudget", "PerturbBox", "build_grid", "certify", "complexity", "quantize",
    "census", "dominant_ratio", "prob_all_observed",
    "CompatibilityParams", "check_compatibility", "description_length", "select_best",
    "essence_bounds", "on_boundary_pairs", "theorem1_check", "theorem2_score", "used_codes",
    "discrete_entropy", "mutual_information",
]
