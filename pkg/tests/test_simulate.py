import numpy as np
import pandas as pd
import pytest

from svybayes.errors import InvalidScenarioError, SchemeError
from svybayes.sampler import SamplerControl
from svybayes.simulate import (
    SimScenario,
    coverage_study,
    draw_sample,
    generate_population,
)


def _logit_scenario(**overrides):
    base = dict(
        family="bernoulli_logit",
        theta0=(-0.7, 0.5),
        population_size=10_000,
        scheme="srs",
        sample_size=500,
        replications=10,
        nominal=0.90,
        seed=314,
        sampler=SamplerControl(iter=600, warmup=300),
    )
    base.update(overrides)
    return SimScenario(**base)


class TestGeneratePopulation:
    def test_bernoulli_intercept_only_mean_near_half(self):
        scenario = _logit_scenario(theta0=(0.0,), n_covariates=0)
        pop = generate_population(scenario, seed=1)
        assert len(pop) == 10_000
        assert 0.49 <= pop["y"].mean() <= 0.51

    def test_same_seed_identical(self):
        scenario = _logit_scenario()
        a = generate_population(scenario, seed=2)
        b = generate_population(scenario, seed=2)
        pd.testing.assert_frame_equal(a, b)

    def test_zero_population_invalid(self):
        with pytest.raises(InvalidScenarioError):
            generate_population(_logit_scenario(population_size=0), seed=1)

    def test_normal_family_columns(self):
        scenario = _logit_scenario(family="normal_linear", theta0=(1.0, -0.5, 2.0))
        pop = generate_population(scenario, seed=3)
        assert {"y", "x1", "z"} <= set(pop.columns)

    def test_multinomial_simplex_required(self):
        scenario = _logit_scenario(family="multinomial_gamma", theta0=(0.5, 0.2))
        with pytest.raises(InvalidScenarioError, match="simplex"):
            generate_population(scenario, seed=1)


class TestDrawSample:
    def test_srs_weights(self):
        scenario = _logit_scenario(sample_size=250)
        pop = generate_population(scenario, seed=4)
        design = draw_sample(pop, scenario, seed=5)
        assert design.n == 250
        np.testing.assert_allclose(design.base_weight, 10_000 / 250)

    def test_pps_inclusion_probabilities_sum_to_n(self):
        scenario = _logit_scenario(scheme="pps_systematic", size_formula="exp(y)")
        pop = generate_population(scenario, seed=6)
        size = np.exp(pop["y"].to_numpy(dtype=float))
        pi = scenario.sample_size * size / size.sum()
        assert abs(pi.sum() - scenario.sample_size) < 1e-9
        design = draw_sample(pop, scenario, seed=7)
        assert design.n == scenario.sample_size
        # sampled weights are exactly 1/pi of the sampled units
        assert np.all(design.base_weight > 0)

    def test_pps_population_total_recovered(self):
        scenario = _logit_scenario(scheme="pps_systematic",
                                   size_formula="exp(0.5*y + 0.2*z)")
        pop = generate_population(scenario, seed=8)
        design = draw_sample(pop, scenario, seed=9)
        assert design.base_weight.sum() == pytest.approx(len(pop), rel=0.02)

    def test_srs_population_total_exact(self):
        scenario = _logit_scenario()
        pop = generate_population(scenario, seed=10)
        design = draw_sample(pop, scenario, seed=11)
        assert design.base_weight.sum() == pytest.approx(len(pop), rel=1e-12)

    def test_one_stage_cluster_arithmetic(self):
        scenario = _logit_scenario(population_size=200, sample_size=80,
                                   scheme="one_stage_cluster",
                                   n_clusters=10, select_clusters=4)
        pop = generate_population(scenario, seed=12)
        design = draw_sample(pop, scenario, seed=13)
        assert design.n == 80
        np.testing.assert_allclose(design.base_weight, 10 / 4)
        assert design.strata_psu_counts() == {"_all": 4}

    def test_stratified_srs(self):
        scenario = _logit_scenario(scheme="stratified_srs", n_strata=4,
                                   strata_by="x1", sample_size=400)
        pop = generate_population(scenario, seed=14)
        design = draw_sample(pop, scenario, seed=15)
        assert len(design.strata()) == 4
        assert design.base_weight.sum() == pytest.approx(len(pop), rel=0.02)

    def test_nonpositive_size_rejected(self):
        scenario = _logit_scenario(scheme="pps_systematic", size_formula="y - 1")
        pop = generate_population(scenario, seed=16)
        with pytest.raises(SchemeError):
            draw_sample(pop, scenario, seed=17)


class TestCoverageStudy:
    def test_zero_replications_invalid(self):
        with pytest.raises(InvalidScenarioError):
            coverage_study(_logit_scenario(replications=0))

    def test_srs_smoke(self):
        result = coverage_study(_logit_scenario(replications=8, sample_size=300))
        assert result.failures == 0
        assert set(result.coverage["series"]) == {"adjusted", "unadjusted"}
        assert ((result.coverage["coverage"] >= 0)
                & (result.coverage["coverage"] <= 1)).all()
        assert 0.5 < result.mean_deff < 2.0
        # records CSV schema
        assert {"replication", "parameter", "covered_adjusted",
                "covered_unadjusted", "deff"} <= set(result.records.columns)

    def test_deterministic_given_master_seed(self):
        a = coverage_study(_logit_scenario(replications=4, sample_size=200))
        b = coverage_study(_logit_scenario(replications=4, sample_size=200))
        pd.testing.assert_frame_equal(a.records, b.records)

    @pytest.mark.slow
    def test_informative_pps_direction(self):
        # strongly variable informative weights: deff > 1 dominates and
        # unadjusted intervals undercover while adjusted ones do not
        scenario = _logit_scenario(
            scheme="pps_systematic",
            size_formula="exp(0.8*y + 0.8*minimum(z, 2.2))",
            replications=100, sample_size=500,
            sampler=SamplerControl(iter=1000, warmup=500),
        )
        result = coverage_study(scenario)
        assert result.mean_deff > 1.3
        cov = result.coverage.set_index(["parameter", "series"])["coverage"]
        for name in ("b1", "b2"):
            assert cov[(name, "unadjusted")] < 0.85
            assert cov[(name, "unadjusted")] < cov[(name, "adjusted")]
