import numpy as np
import pytest
from hypothesis import settings

from hybridpend.closedloop import SimSetup
from hybridpend.config import Config
from hybridpend.lqg import synthesize
from hybridpend.plant import PlantParams, SensorModel

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return Config()


@pytest.fixture(scope="session")
def params():
    return PlantParams()


@pytest.fixture(scope="session")
def sensors():
    return SensorModel()


@pytest.fixture(scope="session")
def design(cfg):
    return synthesize(cfg.plant, cfg.sensors, cfg.lqg, cfg.sim.ts)


@pytest.fixture(scope="session")
def setup(cfg, design):
    return SimSetup(cfg.plant, cfg.sensors, design, cfg.sim.ts, cfg.sim.substeps)


@pytest.fixture
def gen():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def trained(cfg, setup):
    """One full-budget training run (default GA settings), shared by every test that needs it."""
    from hybridpend import pipeline

    return pipeline.train(cfg, setup)


# --- acceptance summary: one line per criterion, from tests named test_criterion_NN_*

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        name = report.nodeid.split("::test_criterion_", 1)[1]
        num = int(name.split("_", 1)[0])
        detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
        _CRITERIA[num] = (name.split("_", 1)[1], "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d} {verdict}  {title}: {detail}")
