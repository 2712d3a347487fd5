from __future__ import annotations

import pytest

from slosim.costmodel import ItlParams, PrefillParams
from slosim.predictor import Bucketing, LengthPredictor


@pytest.fixture
def itl_example() -> ItlParams:
    # 0.001/1/0.01/5 ms coefficients, exact estimator (epsilon 1)
    return ItlParams(alpha=1e-6, beta=1e-3, gamma=1e-5, delta=5e-3, epsilon=1.0)


@pytest.fixture
def prefill_example() -> PrefillParams:
    # 20 ms constant up to 128 tokens, then 0.1 ms/token + 7 ms
    return PrefillParams(phi=0.020, theta=128.0, alpha_p=1e-4, beta_p=7e-3)


@pytest.fixture
def oracle_predictor() -> LengthPredictor:
    return LengthPredictor(mode="oracle", bucketing=Bucketing.equal_width(10, 1000))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion at the end of the run."""
    rows: dict[str, str] = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and "::" in nodeid:
                rows[nodeid.split("::")[-1]] = outcome
    if not rows:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(rows):
        mark = "PASS" if rows[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark} {name}")
