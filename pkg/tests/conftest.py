import numpy as np
import pandas as pd
import pytest

from svybayes.data import load_example
from svybayes.design import SurveyDesign
from svybayes.models import ParameterSpace, TransformBlock


class GaussianTarget:
    """Test-only family: multivariate normal with known mean/covariance."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        self.prec = np.linalg.inv(self.cov)
        d = self.mean.size
        self.space = ParameterSpace(
            blocks=(TransformBlock("identity", tuple(f"z{i + 1}" for i in range(d))),)
        )

    @property
    def n_params(self):
        return self.mean.size

    def logp_and_grad(self, theta, weights=None):
        dev = np.asarray(theta, dtype=float) - self.mean
        return -0.5 * float(dev @ self.prec @ dev), -self.prec @ dev

    def log_density(self, theta, weights=None):
        return self.logp_and_grad(theta)[0]

    def grad(self, theta, weights=None):
        return self.logp_and_grad(theta)[1]

    def default_init(self):
        return np.zeros(self.n_params)


@pytest.fixture
def gaussian_target_factory():
    return GaussianTarget


@pytest.fixture(scope="session")
def apiclus1_frame():
    return load_example("apiclus1")


@pytest.fixture(scope="session")
def apiclus1_design(apiclus1_frame):
    return SurveyDesign.from_frame(
        apiclus1_frame, weight="pw", psu="dnum", fpc="fpc"
    ).normalized()


@pytest.fixture(scope="session")
def apistrat_frame():
    return load_example("apistrat")


@pytest.fixture
def toy_two_strata_design():
    """2 strata x 2 PSUs x 2 units, hand-checkable."""
    frame = pd.DataFrame({
        "y": [1.0, 3.0, 2.0, 4.0, 10.0, 12.0, 9.0, 15.0],
        "w": [1.0, 1.0, 2.0, 2.0, 1.5, 1.5, 1.0, 1.0],
        "stratum": ["a"] * 4 + ["b"] * 4,
        "psu": ["p1", "p1", "p2", "p2", "p3", "p3", "p4", "p4"],
    })
    return SurveyDesign.from_frame(frame, weight="w", psu="psu", stratum="stratum")


def finite_difference_gradient(f, theta, rel_step=1e-6):
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for j in range(theta.size):
        h = rel_step * max(1.0, abs(theta[j]))
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (f(up) - f(dn)) / (2.0 * h)
    return grad


@pytest.fixture
def fd_gradient():
    return finite_difference_gradient
