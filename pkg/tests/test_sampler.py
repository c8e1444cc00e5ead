import numpy as np
import pytest

from svybayes.errors import (
    InitializationError,
    InsufficientDrawsError,
    InvalidArgumentError,
)
from svybayes.models import BernoulliLogit
from svybayes.sampler import (
    DrawsMatrix,
    SamplerControl,
    mcmc_diagnostics,
    sample_pseudo_posterior,
)


class TestSamplerControl:
    def test_defaults_match_documented_values(self):
        ctrl = SamplerControl()
        assert (ctrl.chains, ctrl.iter, ctrl.warmup, ctrl.thin) == (1, 2000, 1000, 1)
        assert ctrl.draws_per_chain == 1000

    def test_warmup_must_be_less_than_iter(self):
        with pytest.raises(InvalidArgumentError):
            SamplerControl(iter=100, warmup=100)

    def test_seed_required(self, gaussian_target_factory):
        family = gaussian_target_factory([0.0], np.eye(1))
        with pytest.raises(InvalidArgumentError):
            sample_pseudo_posterior(family, SamplerControl())


class TestHmc:
    def test_standard_normal_moments(self, gaussian_target_factory):
        family = gaussian_target_factory([0.0], np.eye(1))
        ctrl = SamplerControl(iter=5000, warmup=1000, seed=42)
        draws = sample_pseudo_posterior(family, ctrl)
        assert draws.n_draws == 4000
        assert abs(draws.values.mean()) < 0.05
        assert abs(draws.values.std() - 1.0) < 0.05

    def test_gaussian_covariance_recovery(self, gaussian_target_factory):
        cov = np.array([[4.0, 1.0, 0.5], [1.0, 2.0, 0.3], [0.5, 0.3, 1.0]])
        family = gaussian_target_factory([1.0, -2.0, 0.5], cov)
        ctrl = SamplerControl(chains=2, iter=6000, warmup=1000, seed=7)
        draws = sample_pseudo_posterior(family, ctrl)
        assert draws.n_draws == 10000
        sample_cov = np.cov(draws.values.T)
        rel = np.linalg.norm(sample_cov - cov) / np.linalg.norm(cov)
        assert rel < 0.10

    def test_bit_reproducible(self, gaussian_target_factory):
        family = gaussian_target_factory([0.0, 1.0], np.diag([1.0, 3.0]))
        ctrl = SamplerControl(chains=2, iter=500, warmup=200, seed=11)
        a = sample_pseudo_posterior(family, ctrl)
        b = sample_pseudo_posterior(family, ctrl)
        assert np.array_equal(a.values, b.values)
        assert np.array_equal(a.chain_id, b.chain_id)

    def test_weighted_bernoulli_intercept_recovers_weighted_proportion(self):
        rng = np.random.default_rng(5)
        n = 400
        y = (rng.uniform(size=n) < 0.35).astype(float)
        w = rng.uniform(0.2, 4.0, n)
        family = BernoulliLogit(np.ones((n, 1)), y, w)
        ctrl = SamplerControl(iter=4000, warmup=1000, seed=3)
        draws = sample_pseudo_posterior(family, ctrl)
        p_draws = 1.0 / (1.0 + np.exp(-draws.values[:, 0]))
        p_hat = float(w @ y / w.sum())
        assert abs(p_draws.mean() - p_hat) < 0.01

    def test_defaults_produce_1000_draws(self, gaussian_target_factory):
        family = gaussian_target_factory([0.0], np.eye(1))
        draws = sample_pseudo_posterior(family, SamplerControl(seed=1))
        assert draws.n_draws == 1000
        assert len(draws.stats["chains"]) == 1

    def test_all_draws_have_finite_density(self, gaussian_target_factory):
        family = gaussian_target_factory([0.0, 0.0], np.eye(2))
        draws = sample_pseudo_posterior(
            family, SamplerControl(iter=500, warmup=100, seed=2)
        )
        logps = [family.log_density(t) for t in draws.values]
        assert np.all(np.isfinite(logps))

    def test_thinning(self, gaussian_target_factory):
        family = gaussian_target_factory([0.0], np.eye(1))
        draws = sample_pseudo_posterior(
            family, SamplerControl(iter=1000, warmup=500, thin=5, seed=8)
        )
        assert draws.n_draws == 100

    def test_initialization_failure(self):
        class Hopeless:
            n_params = 1

            from svybayes.models import ParameterSpace, TransformBlock
            space = ParameterSpace(blocks=(TransformBlock("identity", ("x",)),))

            def logp_and_grad(self, theta, weights=None):
                return -np.inf, np.zeros(1)

            def default_init(self):
                return np.zeros(1)

        with pytest.raises(InitializationError):
            sample_pseudo_posterior(Hopeless(), SamplerControl(seed=1))


class TestRwmFallback:
    def test_gaussian_moments(self, gaussian_target_factory):
        family = gaussian_target_factory([2.0], np.array([[0.5]]))
        ctrl = SamplerControl(iter=20000, warmup=4000, seed=13, algorithm="rwm")
        draws = sample_pseudo_posterior(family, ctrl)
        assert abs(draws.values.mean() - 2.0) < 0.05
        assert abs(draws.values.std() - np.sqrt(0.5)) < 0.05


class TestDiagnostics:
    def test_iid_normal_rhat_near_one(self):
        rng = np.random.default_rng(21)
        draws = DrawsMatrix(
            values=rng.normal(size=(4000, 1)),
            names=("x",),
            chain_id=np.zeros(4000, dtype=int),
        )
        table = mcmc_diagnostics(draws)
        assert 0.99 <= table.loc["x", "rhat"] <= 1.01
        assert table.loc["x", "ess"] > 2000
        assert not table.loc["x", "degenerate"]

    def test_constant_chain_flagged_degenerate(self):
        draws = DrawsMatrix(
            values=np.full((100, 1), 3.0),
            names=("x",),
            chain_id=np.zeros(100, dtype=int),
        )
        table = mcmc_diagnostics(draws)
        assert bool(table.loc["x", "degenerate"])

    def test_disjoint_chains_rhat_large(self):
        rng = np.random.default_rng(22)
        chain0 = rng.uniform(0.0, 0.01, size=(200, 1))
        chain1 = rng.uniform(1.0, 1.01, size=(200, 1))
        draws = DrawsMatrix(
            values=np.vstack([chain0, chain1]),
            names=("x",),
            chain_id=np.repeat([0, 1], 200),
        )
        table = mcmc_diagnostics(draws)
        assert table.loc["x", "rhat"] > 1.1

    def test_too_few_draws(self):
        draws = DrawsMatrix(
            values=np.zeros((3, 1)), names=("x",), chain_id=np.zeros(3, dtype=int)
        )
        with pytest.raises(InsufficientDrawsError):
            mcmc_diagnostics(draws)


class TestDrawsMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(Exception):
            DrawsMatrix(values=np.array([[np.nan]]), names=("x",),
                        chain_id=np.zeros(1, dtype=int))

    def test_to_frame(self):
        draws = DrawsMatrix(values=np.arange(6, dtype=float).reshape(3, 2),
                            names=("a", "b"), chain_id=np.zeros(3, dtype=int))
        frame = draws.to_frame()
        assert list(frame.columns) == ["chain", "a", "b"]
        assert frame.shape == (3, 3)
