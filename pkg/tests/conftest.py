import numpy as np
import pytest

from ringsht._backend import BACKEND


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def max_rel(a, b):
    """Largest elementwise |a - b| relative to max |b|."""
    a, b = np.asarray(a), np.asarray(b)
    scale = np.max(np.abs(b))
    return float(np.max(np.abs(a - b)) / scale) if scale else float(np.max(np.abs(a - b)))


requires_compiled = pytest.mark.skipif(BACKEND != "compiled", reason="compiled kernels not built")


# acceptance verdicts, printed once at the end of the run
VERDICTS: dict[int, str] = {}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    VERDICTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[k])
