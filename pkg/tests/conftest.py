import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def literal_pc(y, h, t):
    """Textbook Priestley-Chao sum over all m design points, no vectorization."""
    m = len(y)
    total = 0.0
    for i in range(1, m + 1):
        u = (t - i / m) / h
        k = 0.75 * (1.0 - u * u) if abs(u) <= 1.0 else 0.0
        total += k * y[i - 1]
    return total / (m * h)


# Acceptance results, printed as one line per criterion after the run.
ACCEPTANCE: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE, key=lambda r: int(r[0].split()[0][1:])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
