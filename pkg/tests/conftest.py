import numpy as np
import pytest

from helpers import ACCEPTANCE

from spectrum_mdl.net import load_model
from spectrum_mdl.pipeline import RunConfig, run_pipeline
from spectrum_mdl.spectrum import SpectrumParams


@pytest.fixture
def p():
    return SpectrumParams(0.2, 1.0, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pipeline_run(tmp_path_factory):
    """One full two-circle run with the default configuration."""
    out = tmp_path_factory.mktemp("run")
    manifest = run_pipeline(RunConfig(), out)
    return manifest, out


@pytest.fixture(scope="session")
def trained_model(pipeline_run):
    return load_model(pipeline_run[1] / "model.json")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
