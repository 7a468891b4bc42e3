import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from gpzkf.harness import ExperimentConfig, build_context  # noqa: E402
from gpzkf.harness.config import GPSettings  # noqa: E402
from gpzkf.pendulum import ShiftScenario  # noqa: E402


def small_config(**kw) -> ExperimentConfig:
    """Two starts, two reps: enough to exercise the harness quickly."""
    base = ExperimentConfig(
        scenario=ShiftScenario(variant="none", starts=2, reps=2),
        gp=GPSettings(optimize=True, n_restarts=1),
        lipschitz_samples=150,
    )
    return base.with_overrides(**kw)


@pytest.fixture(scope="session")
def small_cfg():
    return small_config()


@pytest.fixture(scope="session")
def small_ctx(small_cfg):
    return build_context(small_cfg, 0)


@pytest.fixture(scope="session")
def default_ctx():
    """Context of the default (all bounds as derived) Shift-None config."""
    return build_context(ExperimentConfig(), 0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
