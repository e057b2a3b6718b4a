"""End-to-end run: data, training, certification, accounting and reports."""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import get_support, write_points
from .errors import ConfigError, StageError
from .essence import essence_bounds, on_boundary_pairs, theorem1_check, theorem2_score, used_codes
from .info import DEFAULT_BINS, mutual_information, permutation_null
from .mdl import CompatibilityParams, check_compatibility, description_length, sub_quantization_check
from .net import SpectrumVae, TrainConfig, save_model, train
from .patterns import census
from .plots import census_bars, scatter_codes
from .robustness import INFINITE, CertBudget, RepresentationSet
from .spectrum import format_pattern, patterns_of

OUT_ENV = "SPECTRUM_MDL_OUT"
DEFAULT_OUT_ROOT = "spectrum_mdl_runs"
MANIFEST_FORMAT = "spectrum-mdl-manifest"
CSV_VERSION = 1
PLOT_CODE_LIMIT = 20000

EXIT_OK = 0
EXIT_INCOMPATIBLE = 2
EXIT_CERT_FAILED = 3
EXIT_CONFIG = 4


@dataclass
class DatasetSpec:
    name: str = "two-circles"
    n_train: int = 2000
    n_holdout: int = 1000
    points_file: str | None = None


@dataclass
class ModelSpec:
    K: int = 8
    a: float = 0.2
    b: float = 1.0
    encoder_hidden: list[int] = field(default_factory=lambda: [32, 32])
    decoder_hidden: list[int] = field(default_factory=lambda: [32, 32])


@dataclass
class BudgetSpec:
    base_points: int = 256
    perturbs_per_point: int = 8
    lattice_max: int = 10**6
    rel_tol: float = 1e-3


@dataclass
class EssenceSpec:
    grid_res: float | None = None
    restarts: int = 8


@dataclass
class InfoSpec:
    bins: int = DEFAULT_BINS
    n_perm: int = 100


def _train_defaults() -> TrainConfig:
    return TrainConfig(epochs=300, learning_rate=0.05, pattern_penalty_weight=0.03)


@dataclass
class RunConfig:
    """Everything a run needs.  ``seed`` drives data, initialisation,
    batching and certification streams."""

    seed: int = 0
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=_train_defaults)
    U: float = 0.7
    Gamma1: float = 1000
    Gamma2: float = 50
    P0: float = 0.99
    budget: BudgetSpec = field(default_factory=BudgetSpec)
    essence: EssenceSpec = field(default_factory=EssenceSpec)
    info: InfoSpec = field(default_factory=InfoSpec)
    out_dir: str | None = None

    _NESTED = {"dataset": DatasetSpec, "model": ModelSpec, "train": TrainConfig,
               "budget": BudgetSpec, "essence": EssenceSpec, "info": InfoSpec}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            sub = cls._NESTED.get(k)
            if sub is not None:
                if not isinstance(v, dict):
                    raise ConfigError(f"'{k}' must be an object")
                sub_known = {f.name for f in dataclasses.fields(sub)}
                bad = set(v) - sub_known
                if bad:
                    raise ConfigError(f"unknown keys in '{k}': {sorted(bad)}")
                base = _train_defaults() if sub is TrainConfig else sub()
                kw[k] = dataclasses.replace(base, **v)
            else:
                kw[k] = v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "RunConfig":
        try:
            CompatibilityParams(self.U, self.Gamma1, self.Gamma2, self.P0)
            m = self.model
            from .spectrum import SpectrumParams
            p = SpectrumParams(float(m.a), float(m.b), int(m.K))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        self.train.validate(p)
        if self.dataset.n_train < 1 or self.dataset.n_holdout < 1:
            raise ConfigError("n_train and n_holdout must be >= 1")
        if self.budget.base_points < 0 or self.budget.perturbs_per_point < 0:
            raise ConfigError("certification budget must be nonnegative")
        if self.info.bins < 2:
            raise ConfigError("info.bins must be >= 2")
        if self.essence.grid_res is not None and self.essence.grid_res > self.U / 4:
            raise ConfigError("essence.grid_res must be at most U/4")
        return self

    def cert_budget(self) -> CertBudget:
        b = self.budget
        return CertBudget(base_points=b.base_points, perturbs_per_point=b.perturbs_per_point,
                          seed=self.seed, lattice_max=b.lattice_max)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return RunConfig.from_dict(d)


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT_ROOT))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"# csv_version={CSV_VERSION}"])
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return path


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.bool_):
        return bool(x)
    return x


@dataclass
class RunManifest:
    config: dict
    version: str
    reports: dict
    timings: dict
    files: dict
    exit_code: int

    def to_dict(self, with_timings: bool = True) -> dict:
        d = {"format": MANIFEST_FORMAT, "version": self.version, "config": self.config,
             "reports": self.reports, "files": self.files, "exit_code": self.exit_code}
        if with_timings:
            d["timings"] = self.timings
        return _jsonable(d)

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path


class _Stages:
    def __init__(self):
        self.timings: dict[str, float] = {}

    @contextlib.contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        except StageError:
            raise
        except Exception as e:
            raise StageError(name, e) from e
        finally:
            self.timings[name] = time.perf_counter() - t0


def exit_code_for(compatible: bool, regular: bool) -> int:
    if not compatible:
        return EXIT_INCOMPATIBLE
    if not regular:
        return EXIT_CERT_FAILED
    return EXIT_OK


def run_pipeline(config: RunConfig, out_dir=None) -> RunManifest:
    """Run every stage and write the manifest, CSV tables and SVG figures."""
    config.validate()
    out = Path(out_dir or config.out_dir or default_out_root() / f"run-seed{config.seed}")
    out.mkdir(parents=True, exist_ok=True)
    stage = _Stages()
    reports: dict = {}
    files: list[Path] = []
    U = config.U
    seed = config.seed

    with stage("data"):
        support = get_support(config.dataset.name, config.dataset.points_file)
        X = support.sample(config.dataset.n_train, seed)
        H = support.sample(config.dataset.n_holdout, seed + 1)
        files += [write_points(X, out / "train.csv"), write_points(H, out / "holdout.csv")]

    with stage("train"):
        m = config.model
        model0 = SpectrumVae.create(support.D, int(m.K), float(m.a), float(m.b), tuple(m.encoder_hidden),
                                    tuple(m.decoder_hidden), seed=seed, normalize_with=X)
        history: list = []
        model = train(model0, X, config.train_config(), history)
        files.append(save_model(model, out / "model.json"))
        err0 = float(np.mean(np.linalg.norm(X - model0.reconstruct(X), axis=1)))
        err1 = float(np.mean(np.linalg.norm(X - model.reconstruct(X), axis=1)))
        reports["train"] = {"initial_mean_error": err0, "final_mean_error": err1,
                            "final_loss": history[-1] if history else None}

    with stage("census"):
        c = census(model.encode(X), model.params)
        reports["census"] = c.to_dict()
        files.append(write_csv(out / "census.csv", ["pattern", "count", "fraction"], c.rows()))

    with stage("compatibility"):
        cp = CompatibilityParams(U / 2, config.Gamma1, config.Gamma2, config.P0)
        comp_train = check_compatibility(model, X, cp)
        comp = check_compatibility(model, H, cp)
        reports["dominant_ratio"] = comp_train.dominant.to_dict()
        reports["compatibility_train"] = comp_train.to_dict()
        reports["compatibility"] = comp.to_dict()
        hp = patterns_of(model.encode(H), model.params)
        files.append(write_csv(out / "holdout_errors.csv", ["index", "pattern", "error"],
                               ((i, format_pattern(P), float(e)) for i, (P, e) in enumerate(zip(hp, comp.errors)))))

    with stage("description_length"):
        dl = description_length(model, X, U, config.cert_budget(), config.budget.rel_tol)
        reports["description_length"] = dl.to_dict()
        files.append(write_csv(
            out / "certificates.csv",
            ["pattern", "alphas", "counts", "complexity", "base_points", "perturbations_per_point",
             "violations", "max_deviation", "sampling"],
            (_cert_row(e) for e in dl.entries)))

    if dl.regular:
        with stage("sub_quantization"):
            sq = sub_quantization_check(model, H, dl)
            reports["sub_quantization"] = sq.to_dict()
            files.append(write_csv(out / "sub_quantization.csv",
                                   ["index", "pattern", "seen", "err_plain", "displacement", "err_quant", "success"],
                                   sq.rows()))

    with stage("essence"):
        eb = essence_bounds(support, U, config.essence.grid_res, seed, config.essence.restarts)
        reports["essence"] = eb.to_dict()
        files.append(write_csv(out / "cover_points.csv", [f"x{d + 1}" for d in range(support.D)],
                               (list(map(float, p)) for p in eb.cover_points)))

    if dl.regular:
        with stage("usage"):
            ua = used_codes(model, X, dl, eb)
            t1 = theorem1_check(dl, eb)
            reports["usage"] = ua.to_dict()
            reports["theorem1"] = {**t1.to_dict(), "holdout_compatible": comp.compatible}
            reports["theorem2"] = {"score_vs_lower": theorem2_score(ua, "lower"),
                                   "score_vs_upper": theorem2_score(ua, "upper")}

    with stage("boundary"):
        br = on_boundary_pairs(model, eb, U)
        reports["boundary"] = br.to_dict()
        D = support.D
        files.append(write_csv(out / "boundary_pairs.csv",
                               [*(f"p{d + 1}" for d in range(D)), *(f"q{d + 1}" for d in range(D)),
                                "pattern_p", "pattern_q", "distance"], br.rows()))

    with stage("info"):
        R = model.reconstruct(H)
        ir = mutual_information(H, R, support.bounds, config.info.bins)
        null_mean, null_std = permutation_null(H, R, support.bounds, config.info.bins, config.info.n_perm, seed)
        reports["info"] = {**ir.to_dict(), "null_mean": null_mean, "null_std": null_std}
        files.append(write_csv(out / "info.csv", ["dim", "entropy_orig", "entropy_recon", "mi"], ir.rows()))

    with stage("plots"):
        codes = {}
        for e in dl.entries:
            if e.grid is not None and e.complexity <= PLOT_CODE_LIMIT:
                codes[e.pattern] = model.decode(RepresentationSet(e.grid).to_array(PLOT_CODE_LIMIT))
        files.append(scatter_codes(out / "codes.svg", X, patterns_of(model.encode(X), model.params), codes,
                                   eb.cover_points, title=f"decoded grid codes, U={U}"))
        files.append(census_bars(out / "census.svg", c, title="pattern census"))

    code = exit_code_for(comp.compatible, dl.regular)
    manifest = RunManifest(
        config=config.to_dict(), version=__version__, reports=reports, timings=stage.timings,
        files={p.name: sha256_file(p) for p in files}, exit_code=code,
    )
    manifest.write(out / "manifest.json")
    return manifest


def _cert_row(e):
    cert = e.box.certificate if e.box is not None else None
    return (
        format_pattern(e.pattern),
        " ".join(repr(a) for a in e.box.alphas) if e.box else "",
        " ".join(str(q) for q in e.grid.counts) if e.grid else "",
        "inf" if e.complexity == INFINITE else int(e.complexity),
        cert.base_points_tested if cert else "",
        cert.perturbations_per_point if cert else "",
        cert.violations if cert else "",
        cert.max_observed_deviation if cert else "",
        cert.sampling if cert else "",
    )
