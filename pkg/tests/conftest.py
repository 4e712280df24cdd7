import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from credsynth.simdata import SimConfig, generate
from credsynth.tabular import ColumnSchema, Dataset, label_column

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_sim():
    """A 3 000-borrower portfolio, enough for pipeline plumbing tests."""
    return generate(SimConfig(n_borrowers=3000, seed=11))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mixed_dataset(n, rng, label=True):
    """Two correlated numerics, one three-level categorical, optional label."""
    x1 = rng.normal(size=n)
    x2 = 0.8 * x1 + 0.6 * rng.normal(size=n)
    cat = rng.integers(0, 3, n)
    schema = [ColumnSchema("x1", "numeric", "Fin"), ColumnSchema("x2", "numeric", "Fin"),
              ColumnSchema("c", "categorical", "Fin", ("A", "B", "C"))]
    cols = {"x1": x1, "x2": x2, "c": cat}
    if label:
        schema.append(label_column("y"))
        cols["y"] = (rng.random(n) < 1 / (1 + np.exp(-(x1 - 1)))).astype(np.int64)
    return Dataset(tuple(schema), cols, "real:test")


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
