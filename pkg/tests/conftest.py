import numpy as np
import pytest

from cohere import matcore as mc


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def psi(M):
    return mc.maximally_coherent(M).projector()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, note = RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {note}")
