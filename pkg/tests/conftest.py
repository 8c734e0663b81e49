import numpy as np
import pytest

from ratreg.linop import DenseOperator, DiagonalOperator


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_diagonal(rng, m, low=1e-3):
    s = np.sort(rng.uniform(low, 1.0, m))[::-1]
    return DiagonalOperator(s)


def random_dense(rng, m, p):
    return DenseOperator(rng.standard_normal((m, p)))


# one line per acceptance criterion, filled in by test_acceptance
ACCEPTANCE_LINES: dict[str, str] = {}


def record(key: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.split()[0].split(".")[0]), k)):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
