"""Command-line entry point: ``spectrum-mdl <subcommand> [options]``.

Exit codes: 0 success, 2 no compatible model, 3 certification failed,
4 configuration error.  ``--out`` names an output directory; it defaults to
``$SPECTRUM_MDL_OUT`` or ``./spectrum_mdl_runs``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .datasets import get_support, read_points, write_points
from .errors import ConfigError, SpectrumMDLError, StageError
from .essence import essence_bounds, on_boundary_pairs
from .info import mutual_information, permutation_null
from .mdl import CompatibilityParams, check_compatibility, description_length, select_best
from .net import SpectrumVae, load_model, save_model, train
from .patterns import census, dominant_ratio
from .pipeline import (
    EXIT_CERT_FAILED,
    EXIT_CONFIG,
    EXIT_INCOMPATIBLE,
    EXIT_OK,
    RunConfig,
    _cert_row,
    _jsonable,
    default_out_root,
    load_config,
    run_pipeline,
    write_csv,
)
from .robustness import certify_pattern
from .spectrum import parse_pattern, patterns_of


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="spectrum-mdl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="sample points from a support")
    s.add_argument("--dataset", help="two-circles, ring or custom")
    s.add_argument("--points-file", help="point CSV for the custom dataset")
    s.add_argument("--n", type=int, help="number of points")

    s = sub.add_parser("train", parents=[common], help="train a model on a point CSV")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int)

    s = sub.add_parser("census", parents=[common], help="pattern census and dominant ratio")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--P0", type=float)

    s = sub.add_parser("certify", parents=[common], help="certify patterns at U/2")
    s.add_argument("--model", required=True)
    s.add_argument("--data", help="certify every pattern observed on these points")
    s.add_argument("--pattern", action="append", default=[], help="pattern such as {3,8}; repeatable")
    s.add_argument("--U", type=float)

    s = sub.add_parser("mdl", parents=[common], help="compatibility, description length and selection")
    s.add_argument("--model", action="append", required=True, help="repeatable")
    s.add_argument("--data", required=True)
    s.add_argument("--holdout", help="points for the compatibility check (default: --data)")
    s.add_argument("--U", type=float)

    for name, helptext in (("essence", "covering/packing bounds of the support"),
                           ("boundary", "on-boundary cover-point pairs")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--dataset")
        s.add_argument("--points-file")
        s.add_argument("--U", type=float)
        s.add_argument("--grid-res", type=float)
        if name == "boundary":
            s.add_argument("--model", required=True)

    s = sub.add_parser("info", parents=[common], help="entropy and mutual information of reconstructions")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--bins", type=int)

    sub.add_parser("run", parents=[common], help="full pipeline")
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "U", None) is not None:
        cfg.U = args.U
    cfg.validate()
    return cfg


def _out(args) -> Path:
    out = Path(args.out) if args.out else default_out_root()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj, path: Path | None = None):
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True)
    if path is not None:
        path.write_text(text + "\n")
    print(text)


def _support(args, cfg):
    return get_support(args.dataset or cfg.dataset.name, args.points_file or cfg.dataset.points_file)


def cmd_gen_data(args, cfg):
    support = get_support(args.dataset or cfg.dataset.name, args.points_file or cfg.dataset.points_file)
    n = args.n if args.n is not None else cfg.dataset.n_train
    if n < 1:
        raise ConfigError("--n must be >= 1")
    path = write_points(support.sample(n, cfg.seed), _out(args) / "points.csv")
    print(path)
    return EXIT_OK


def cmd_train(args, cfg):
    X = read_points(args.data)
    m = cfg.model
    model0 = SpectrumVae.create(X.shape[1], int(m.K), float(m.a), float(m.b), tuple(m.encoder_hidden),
                                tuple(m.decoder_hidden), seed=cfg.seed, normalize_with=X)
    tc = cfg.train_config()
    if args.epochs is not None:
        tc = dataclasses.replace(tc, epochs=args.epochs)
    model = train(model0, X, tc)
    print(save_model(model, _out(args) / "model.json"))
    return EXIT_OK


def cmd_census(args, cfg):
    model = load_model(args.model)
    c = census(model.encode(read_points(args.data)), model.params)
    out = _out(args)
    write_csv(out / "census.csv", ["pattern", "count", "fraction"], c.rows())
    dom = dominant_ratio(c, args.P0 if args.P0 is not None else cfg.P0)
    _emit({"census": c.to_dict(), "dominant_ratio": dom.to_dict()}, out / "census.json")
    return EXIT_OK


def cmd_certify(args, cfg):
    model = load_model(args.model)
    pats = [parse_pattern(t) for t in args.pattern]
    if args.data:
        pats += census(model.encode(read_points(args.data)), model.params).patterns
    if not pats:
        raise ConfigError("give --pattern or --data")
    seen, ordered = set(), []
    for P in pats:
        if P not in seen:
            seen.add(P)
            ordered.append(P)
    entries = [certify_pattern(model, P, cfg.U / 2, model.params, cfg.cert_budget(), cfg.budget.rel_tol)
               for P in ordered]
    out = _out(args)
    write_csv(out / "certificates.csv",
              ["pattern", "alphas", "counts", "complexity", "base_points", "perturbations_per_point",
               "violations", "max_deviation", "sampling"], (_cert_row(e) for e in entries))
    _emit({"U": cfg.U, "certified_at": cfg.U / 2, "patterns": [e.to_dict() for e in entries]},
          out / "certificates.json")
    return EXIT_OK if all(e.certified for e in entries) else EXIT_CERT_FAILED


def cmd_mdl(args, cfg):
    X = read_points(args.data)
    H = read_points(args.holdout) if args.holdout else X
    cp = CompatibilityParams(cfg.U / 2, cfg.Gamma1, cfg.Gamma2, cfg.P0)
    cands, rows = [], []
    for path in args.model:
        model = load_model(path)
        cr = check_compatibility(model, H, cp)
        dl = description_length(model, X, cfg.U, cfg.cert_budget(), cfg.budget.rel_tol)
        cands.append((cr, dl))
        rows.append({"model": path, "compatibility": cr.to_dict(), "description_length": dl.to_dict()})
    best = select_best(cands)
    _emit({"candidates": rows, "best": best, "best_model": None if best is None else args.model[best]},
          _out(args) / "mdl.json")
    if best is None:
        print("no compatible candidate", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    return EXIT_OK if cands[best][1].regular else EXIT_CERT_FAILED


def cmd_essence(args, cfg):
    support = _support(args, cfg)
    eb = essence_bounds(support, cfg.U, args.grid_res or cfg.essence.grid_res, cfg.seed, cfg.essence.restarts)
    out = _out(args)
    write_csv(out / "cover_points.csv", [f"x{d + 1}" for d in range(support.D)],
              (list(map(float, p)) for p in eb.cover_points))
    _emit(eb.to_dict(), out / "essence.json")
    return EXIT_OK


def cmd_boundary(args, cfg):
    support = _support(args, cfg)
    model = load_model(args.model)
    eb = essence_bounds(support, cfg.U, args.grid_res or cfg.essence.grid_res, cfg.seed, cfg.essence.restarts)
    br = on_boundary_pairs(model, eb, cfg.U)
    D = support.D
    out = _out(args)
    write_csv(out / "boundary_pairs.csv",
              [*(f"p{d + 1}" for d in range(D)), *(f"q{d + 1}" for d in range(D)),
               "pattern_p", "pattern_q", "distance"], br.rows())
    _emit(br.to_dict(), out / "boundary.json")
    return EXIT_OK


def cmd_info(args, cfg):
    X = read_points(args.data)
    model = load_model(args.model)
    R = model.reconstruct(X)
    bounds = get_support(cfg.dataset.name, cfg.dataset.points_file).bounds
    if len(bounds) != X.shape[1]:
        bounds = list(zip(X.min(axis=0).tolist(), X.max(axis=0).tolist()))
    B = args.bins or cfg.info.bins
    ir = mutual_information(X, R, bounds, B)
    mean, std = permutation_null(X, R, bounds, B, cfg.info.n_perm, cfg.seed)
    out = _out(args)
    write_csv(out / "info.csv", ["dim", "entropy_orig", "entropy_recon", "mi"], ir.rows())
    _emit({**ir.to_dict(), "null_mean": mean, "null_std": std}, out / "info.json")
    return EXIT_OK


def cmd_run(args, cfg):
    out = Path(args.out) if args.out else None
    manifest = run_pipeline(cfg, out)
    rep = manifest.reports
    summary = {
        "exit_code": manifest.exit_code,
        "compatible": rep["compatibility"]["compatible"],
        "bits": rep["description_length"]["bits"],
        "essence": [rep["essence"]["lower"], rep["essence"]["upper"]],
    }
    if "theorem1" in rep:
        summary["theorem1_holds"] = rep["theorem1"]["holds"]
    _emit(summary)
    return manifest.exit_code


COMMANDS = {
    "gen-data": cmd_gen_data, "train": cmd_train, "census": cmd_census, "certify": cmd_certify,
    "mdl": cmd_mdl, "essence": cmd_essence, "boundary": cmd_boundary, "info": cmd_info, "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(e.cause, ConfigError) else 1
    except (OSError, SpectrumMDLError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG if isinstance(e, OSError) else 1


if __name__ == "__main__":
    sys.exit(main())
