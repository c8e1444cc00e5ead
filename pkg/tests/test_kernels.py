import numpy as np
import pytest

from svybayes import _kernels
from svybayes._kernels import _ref


def _random_inputs(rng, n=200, p=4):
    X = np.ascontiguousarray(rng.normal(size=(n, p)))
    y = (rng.uniform(size=n) < 0.5).astype(float)
    w = rng.uniform(0.1, 5.0, n)
    beta = rng.normal(size=p)
    return X, y, w, beta


class TestReferenceKernels:
    def test_logit_against_direct_formula(self):
        rng = np.random.default_rng(0)
        X, y, w, beta = _random_inputs(rng)
        ll, grad = _ref.logit_loglik_grad(X, y, w, beta)
        mu = X @ beta
        p = 1 / (1 + np.exp(-mu))
        assert ll == pytest.approx(float(w @ (y * np.log(p) + (1 - y) * np.log1p(-p))))
        np.testing.assert_allclose(grad, X.T @ (w * (y - p)), rtol=1e-12)

    def test_normal_against_scipy(self):
        from scipy.stats import norm

        rng = np.random.default_rng(1)
        X, _, w, beta = _random_inputs(rng)
        y = X @ beta + rng.normal(size=X.shape[0])
        sigma = 1.7
        ll, grad = _ref.normal_loglik_grad(X, y, w, beta, sigma)
        assert ll == pytest.approx(float(w @ norm.logpdf(y, X @ beta, sigma)))

    def test_logit_extreme_mu_stable(self):
        X = np.array([[1.0], [1.0]])
        y = np.array([1.0, 0.0])
        w = np.ones(2)
        for beta0 in (-800.0, 800.0):
            ll, grad = _ref.logit_loglik_grad(X, y, w, np.array([beta0]))
            assert np.isfinite(grad).all()
            assert not np.isnan(ll)


@pytest.mark.skipif(_kernels.BACKEND != "compiled",
                    reason="compiled kernels not built")
class TestCompiledMatchesReference:
    @pytest.mark.parametrize("trial", range(5))
    def test_logit(self, trial):
        rng = np.random.default_rng(100 + trial)
        X, y, w, beta = _random_inputs(rng, n=rng.integers(5, 300), p=rng.integers(1, 6))
        ll_c, g_c = _kernels.logit_loglik_grad(X, y, w, beta)
        ll_r, g_r = _ref.logit_loglik_grad(X, y, w, beta)
        assert ll_c == pytest.approx(ll_r, rel=1e-12)
        np.testing.assert_allclose(g_c, g_r, rtol=1e-11, atol=1e-12)

    @pytest.mark.parametrize("trial", range(5))
    def test_normal(self, trial):
        rng = np.random.default_rng(200 + trial)
        X, _, w, beta = _random_inputs(rng, n=rng.integers(5, 300), p=rng.integers(1, 6))
        y = X @ beta + rng.normal(size=X.shape[0])
        sigma = float(rng.uniform(0.2, 4.0))
        ll_c, g_c = _kernels.normal_loglik_grad(X, y, w, beta, sigma)
        ll_r, g_r = _ref.normal_loglik_grad(X, y, w, beta, sigma)
        assert ll_c == pytest.approx(ll_r, rel=1e-12)
        np.testing.assert_allclose(g_c, g_r, rtol=1e-11, atol=1e-12)


class TestBackendSelection:
    def test_backend_reported(self):
        assert _kernels.BACKEND in ("compiled", "python")
        assert _kernels.BACKEND in _kernels.backend_info()

    def test_pure_python_env_override(self):
        import subprocess
        import sys

        out = subprocess.run(
            [sys.executable, "-c",
             "from svybayes import _kernels; print(_kernels.BACKEND)"],
            env={"PATH": "/usr/bin:/bin", "SVYBAYES_PURE_PYTHON": "1"},
            capture_output=True, text=True,
        )
        assert out.stdout.strip() == "python"
