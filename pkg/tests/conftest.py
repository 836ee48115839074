import numpy as np
import pytest

from relaxkit.relax import Integrands


@pytest.fixture(scope="session")
def ex3():
    """Example integrands on an interval: f1 = 2 - exp(-u^2), f2 = |.|, W = sqrt(1 + |.|^2)."""
    return Integrands.from_presets("example3_f1", "abs", "area")


@pytest.fixture(scope="session")
def ex3_2d():
    return Integrands.from_presets("example3_f1", "abs", "area", n=2)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        print(line)
        _VERDICTS.append((number, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
