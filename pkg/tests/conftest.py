import numpy as np
import pytest

from qtnet.signal import EcgSignal


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_signal(values, rate=250.0, lead="I"):
    return EcgSignal(np.asarray(values, dtype=np.float64), rate, lead)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(module.RESULTS):
        ok, detail = module.RESULTS[criterion]
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'} - {detail}")
