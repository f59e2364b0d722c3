import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from elmv.data import ObservationTable, load_iris

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def iris():
    return load_iris()


def make_table(values, labels=None, ids=None, names=None):
    values = np.asarray(values, dtype=float)
    n, m = values.shape
    return ObservationTable(
        ids or [f"r{i}" for i in range(n)],
        names or [f"f{j}" for j in range(m)],
        values,
        None if labels is None else np.asarray(labels),
    )


_ACCEPTANCE = []


@pytest.fixture
def verdict(capsys):
    """Record one acceptance line: ``verdict(n, ok, detail)``."""
    def report(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
