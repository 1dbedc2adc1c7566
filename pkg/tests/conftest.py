import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from robustcd.models import (
    ExponentialAUC,
    LinearRegression,
    NormalAUC,
    TwoSampleNormal,
)


@pytest.fixture(scope="session")
def two_sample_data():
    rng = np.random.default_rng(101)
    return (rng.normal(2.0, 1.0, 40), rng.normal(0.0, 1.2, 60))


@pytest.fixture(scope="session")
def small_two_sample_data():
    rng = np.random.default_rng(57)
    return (rng.normal(2.0, 1.0, 10), rng.normal(0.0, 1.0, 20))


@pytest.fixture(scope="session")
def exp_auc_data():
    rng = np.random.default_rng(202)
    return (rng.exponential(1.0 / 3.7778, 20), rng.exponential(1.5, 40))


@pytest.fixture(scope="session")
def normal_auc_data():
    rng = np.random.default_rng(303)
    return (rng.normal(0.0, 1.0, 30), rng.normal(1.2, 1.4, 35))


@pytest.fixture(scope="session")
def regression_data():
    rng = np.random.default_rng(404)
    n = 60
    X = np.column_stack([np.ones(n), rng.standard_normal(n), rng.uniform(size=n)])
    beta = np.array([1.0, 0.8, -0.5])
    y = X @ beta + rng.normal(0.0, 1.0, n)
    return (y, X)


@pytest.fixture(scope="session")
def all_models(two_sample_data, exp_auc_data, normal_auc_data, regression_data):
    """(model, data, theta-ish start) triples used by generic property tests."""
    return [
        (TwoSampleNormal(), two_sample_data),
        (ExponentialAUC(), exp_auc_data),
        (NormalAUC(), normal_auc_data),
        (LinearRegression(interest_index=1), regression_data),
    ]
