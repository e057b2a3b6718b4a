import csv
import json
import time

import numpy as np
import pytest

from spectrum_mdl.cli import main
from spectrum_mdl.errors import ConfigError
from spectrum_mdl.pipeline import (
    EXIT_CERT_FAILED,
    EXIT_CONFIG,
    EXIT_INCOMPATIBLE,
    EXIT_OK,
    RunConfig,
    exit_code_for,
    load_config,
    run_pipeline,
)

SMOKE = {
    "seed": 3,
    "dataset": {"n_train": 200, "n_holdout": 200},
    "model": {"K": 4},
    "train": {"epochs": 5},
    "Gamma1": 100,
    "Gamma2": 5,
}


def read_json(path):
    return json.loads(path.read_text())


def csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    cfg_path = root / "smoke.json"
    cfg_path.write_text(json.dumps(SMOKE))
    t0 = time.perf_counter()
    code = main(["run", "--config", str(cfg_path), "--out", str(root / "run")])
    elapsed = time.perf_counter() - t0
    return root, cfg_path, code, elapsed


class TestRunConfig:
    def test_defaults_validate(self):
        RunConfig().validate()

    def test_round_trip(self, tmp_path):
        cfg = RunConfig.from_dict(SMOKE)
        (tmp_path / "c.json").write_text(json.dumps(cfg.to_dict()))
        assert load_config(tmp_path / "c.json").to_dict() == cfg.to_dict()

    @pytest.mark.parametrize("bad", [{"nope": 1}, {"model": {"depth": 3}}, {"U": -1.0}, {"P0": 1.5},
                                     {"model": {"a": 0.0}}, {"essence": {"grid_res": 1.0}}, {"train": 3}])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            RunConfig.from_dict(bad)

    @pytest.mark.parametrize("compatible,regular,code", [(True, True, 0), (False, True, 2), (True, False, 3),
                                                         (False, False, 2)])
    def test_exit_codes(self, compatible, regular, code):
        assert exit_code_for(compatible, regular) == code


class TestSmokeRun:
    def test_completes_quickly(self, smoke):
        root, _, code, elapsed = smoke
        assert code in (EXIT_OK, EXIT_INCOMPATIBLE, EXIT_CERT_FAILED)
        assert elapsed < 60
        assert (root / "run" / "manifest.json").exists()

    def test_outputs(self, smoke):
        out = smoke[0] / "run"
        m = read_json(out / "manifest.json")
        for name in ("codes.svg", "census.svg", "census.csv", "certificates.csv", "cover_points.csv",
                     "holdout_errors.csv", "info.csv", "boundary_pairs.csv", "train.csv", "holdout.csv"):
            assert name in m["files"] and (out / name).stat().st_size > 0
        assert (out / "codes.svg").read_text().lstrip().startswith("<?xml")
        assert csv_rows(out / "census.csv")[0] == ["# csv_version=1"]

    def test_holdout_errors_csv_matches_manifest(self, smoke):
        out = smoke[0] / "run"
        m = read_json(out / "manifest.json")
        errs = [float(r[2]) for r in csv_rows(out / "holdout_errors.csv")[2:]]
        assert max(errs) == m["reports"]["compatibility"]["max_recon_error"]
        assert (max(errs) <= m["reports"]["compatibility"]["U"]) == m["reports"]["compatibility"]["condition_i"]

    def test_gamma1_above_n(self, tmp_path):
        cfg = RunConfig.from_dict({**SMOKE, "Gamma1": 201})
        m = run_pipeline(cfg, tmp_path)
        assert not m.reports["compatibility"]["condition_i"]
        assert m.exit_code == EXIT_INCOMPATIBLE
        assert (tmp_path / "manifest.json").exists()

    def test_rerun_identical(self, smoke, tmp_path):
        root, cfg_path, _, _ = smoke
        main(["run", "--config", str(cfg_path), "--out", str(tmp_path)])
        a, b = read_json(root / "run" / "manifest.json"), read_json(tmp_path / "manifest.json")
        a.pop("timings"), b.pop("timings")
        a["config"].pop("out_dir"), b["config"].pop("out_dir")
        assert a == b


@pytest.fixture(scope="module")
def parts(smoke, tmp_path_factory):
    root, cfg_path, _, _ = smoke
    d = tmp_path_factory.mktemp("parts")
    c = ["--config", str(cfg_path), "--out", str(d)]
    codes = {
        "gen": main(["gen-data", *c, "--n", "200"]),
        "train": main(["train", *c, "--data", str(d / "points.csv")]),
    }
    model, run = str(d / "model.json"), root / "run"
    codes["census"] = main(["census", *c, "--model", model, "--data", str(d / "points.csv")])
    codes["certify"] = main(["certify", *c, "--model", model, "--data", str(d / "points.csv")])
    codes["mdl"] = main(["mdl", *c, "--model", model, "--data", str(d / "points.csv"),
                         "--holdout", str(run / "holdout.csv")])
    codes["essence"] = main(["essence", *c])
    codes["boundary"] = main(["boundary", *c, "--model", model])
    codes["info"] = main(["info", *c, "--model", model, "--data", str(run / "holdout.csv")])
    return d, run, read_json(run / "manifest.json"), codes


class TestSubcommandsCompose:
    """Each subcommand reproduces the corresponding number from the smoke run."""

    def test_data_and_model(self, parts):
        d, run, _, codes = parts
        assert codes["gen"] == codes["train"] == EXIT_OK
        assert (d / "points.csv").read_bytes() == (run / "train.csv").read_bytes()
        assert read_json(d / "model.json") == read_json(run / "model.json")

    def test_census(self, parts):
        d, _, m, _ = parts
        got = read_json(d / "census.json")
        assert got["census"] == m["reports"]["census"]
        assert got["dominant_ratio"] == m["reports"]["dominant_ratio"]

    def test_certify(self, parts):
        d, run, _, codes = parts
        assert csv_rows(d / "certificates.csv") == csv_rows(run / "certificates.csv")
        assert codes["certify"] == EXIT_OK

    def test_mdl(self, parts):
        d, _, m, codes = parts
        got = read_json(d / "mdl.json")["candidates"][0]
        assert got["compatibility"] == m["reports"]["compatibility"]
        assert got["description_length"] == m["reports"]["description_length"]
        assert codes["mdl"] == m["exit_code"]

    def test_essence_boundary_info(self, parts):
        d, run, m, _ = parts
        assert read_json(d / "essence.json") == m["reports"]["essence"]
        assert csv_rows(d / "cover_points.csv") == csv_rows(run / "cover_points.csv")
        assert read_json(d / "boundary.json") == m["reports"]["boundary"]
        assert read_json(d / "info.json") == m["reports"]["info"]


class TestExitCodes:
    def test_unknown_config_key(self, tmp_path):
        (tmp_path / "c.json").write_text('{"bogus": 1}')
        assert main(["run", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_unreadable_config(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG

    def test_negative_u(self, tmp_path):
        assert main(["essence", "--U", "-1", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_data_file(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_certification_failure(self, smoke, tmp_path):
        model = smoke[0] / "run" / "model.json"
        code = main(["certify", "--model", str(model), "--pattern", "{1}", "--U", "1e-9", "--out", str(tmp_path)])
        assert code == EXIT_CERT_FAILED
        assert read_json(tmp_path / "certificates.json")["patterns"][0]["complexity"] == "inf"

    def test_mdl_none_compatible(self, smoke, tmp_path):
        run = smoke[0] / "run"
        (tmp_path / "c.json").write_text(json.dumps({**SMOKE, "Gamma1": 10**6}))
        code = main(["mdl", "--config", str(tmp_path / "c.json"), "--model", str(run / "model.json"),
                     "--data", str(run / "train.csv"), "--out", str(tmp_path)])
        assert code == EXIT_INCOMPATIBLE
        assert read_json(tmp_path / "mdl.json")["best"] is None

    def test_env_out_root(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPECTRUM_MDL_OUT", str(tmp_path / "root"))
        assert main(["gen-data", "--n", "3"]) == EXIT_OK
        assert np.loadtxt(tmp_path / "root" / "points.csv", delimiter=",", skiprows=1).shape == (3, 2)
