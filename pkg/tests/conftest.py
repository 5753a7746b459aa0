"""Shared fixtures."""
from __future__ import annotations

import numpy as np
import pytest

from zoibmed import _backend
from zoibmed.checks import synthetic_problem

BACKEND_NAMES = sorted(_backend.BACKENDS)


@pytest.fixture(params=BACKEND_NAMES)
def backend(request):
    """Every available quantile-kernel backend in turn."""
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic():
    """Small synthetic dataset and the coefficients that generated it."""
    return synthetic_problem(seed=7, N=400, p=2)


@pytest.fixture(scope="session")
def synthetic_data(synthetic):
    return synthetic[0]


@pytest.fixture(scope="session")
def true_models(synthetic):
    return synthetic[1]


@pytest.fixture(scope="session")
def fitted(synthetic_data):
    from zoibmed.fit import fit_all
    from zoibmed.model import ModelSpec

    return fit_all(synthetic_data, ModelSpec())


@pytest.fixture(scope="session")
def tiny(synthetic):
    """Three synthetic covariate rows (both arms present) with the true models."""
    from zoibmed.model import Dataset

    ds, models = synthetic
    return Dataset(ds.covariates[:3], [0, 1, 0], [0.2, 0.3, 0.4], [0.1, 0.5, 0.9]), models


@pytest.fixture(scope="session")
def study_frame():
    """Study-schema table: 1-5 outcome and mediator, coded treatment, mixed covariates."""
    import pandas as pd

    from zoibmed import simharness

    frame = simharness.load_covariate_pool().iloc[:300].copy()
    ds, _ = synthetic_problem(seed=11, N=300, p=2)
    frame.insert(0, "depress2", 1 + 4 * ds.outcome)
    frame.insert(1, "job_seek", 1 + 4 * ds.mediator)
    frame.insert(2, "treat", np.where(ds.treatment == 1, "exp", "control"))
    return pd.DataFrame(frame)


@pytest.fixture
def study_csv(study_frame, tmp_path):
    path = tmp_path / "study.csv"
    study_frame.to_csv(path, index=False)
    return path


# ── acceptance report ────────────────────────────────────────────────────────

ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record ``(criterion, passed, detail)``; printed in the terminal summary.

    ``passed=None`` marks a criterion that was not run (SKIP).
    """
    store = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, passed, detail):
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        store[number] = f"{status} criterion {number}: {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(ACCEPTANCE_KEY, {})
    if store:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
