import numpy as np
import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {label:<4} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=_order):
            terminalreporter.write_line(line)


def _order(line: str):
    label = line.split()[1]
    digits = "".join(c for c in label if c.isdigit())
    return int(digits), label
