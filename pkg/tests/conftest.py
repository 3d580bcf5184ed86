import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hteffects.data import CONTINUOUS, Column, Dataset

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_dataset(y, t, x, names=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    names = names or [f"x{j + 1}" for j in range(x.shape[1])]
    return Dataset(np.asarray(y, float), np.asarray(t, float), x,
                   [Column(n, CONTINUOUS) for n in names])


@pytest.fixture
def linear_ds():
    """y = 1 + 2 x1 - x2 + 1.5 t + small noise, randomized t."""
    rng = np.random.default_rng(11)
    n = 400
    x = rng.normal(size=(n, 3))
    t = (rng.random(n) < 0.5).astype(float)
    y = 1 + 2 * x[:, 0] - x[:, 1] + 1.5 * t + 0.1 * rng.normal(size=n)
    return make_dataset(y, t, x)


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
