"""
Unit tests for the Gibbs driver, Monte Carlo paths, posterior samples and diagnostics
"""

import numpy as np
import pytest

from packages.engine.core.distributions import RandomSource, polya_gamma_mean
from packages.engine.core.mcmc import (
    PosteriorSamples,
    conjugate_linear_draws,
    default_mi_draws,
    fit,
    fit_true_exposure,
    geweke_diagnostic,
    geweke_z,
    parameter_names,
    read_samples,
    run_gibbs,
    run_mi,
    run_monte_carlo_gaussian,
    sidecar_path,
    update_dispersion_r,
    update_regression,
    update_sigma2,
    write_samples,
)
from packages.engine.core.model import (
    ChainState,
    ExposureEnsemble,
    HealthDataset,
    MethodSpec,
    PriorSpec,
    SamplerConfig,
    augmentation_quantities,
)
from packages.shared.exceptions import FactorizationError, InvalidParameterError
from tests.helpers import assert_proportion, assert_within_mcse

SHORT = SamplerConfig(iterations_total=600, burn_in=100, thin=5)


def negbin_counts(seed, n, theta, r=10, intercept=0.5):
    """Counts with mean r exp(intercept + theta z) and the exposures behind them"""
    gen = np.random.default_rng(seed)
    z = gen.normal(size=n)
    psi = intercept + theta * z
    Y = gen.negative_binomial(r, 1.0 / (1.0 + np.exp(psi)))
    return HealthDataset.with_intercept(Y.astype(float), family="negbin_logit"), z


@pytest.fixture
def regression_problem():
    gen = np.random.default_rng(10)
    n = 60
    x = gen.normal(size=n)
    z = gen.normal(size=n)
    Y = 0.3 + 0.8 * x + 1.5 * z + gen.normal(scale=0.7, size=n)
    data = HealthDataset.with_intercept(Y, covariates=x)
    state = ChainState.initial(data, z)
    state.sigma2_eps = 0.49
    return data, state


@pytest.mark.unit
class TestRegressionUpdate:
    """Test the (beta, theta) full conditional"""

    def test_mean_matches_weighted_least_squares(self, regression_problem, rng):
        data, state = regression_problem
        omega = np.full(data.n, 1.0 / state.sigma2_eps)
        prior = PriorSpec()
        W = np.column_stack([data.X, state.z])
        precision = (W.T * omega) @ W + np.eye(3) * prior.coef_precision
        exact = np.linalg.solve(precision, W.T @ (omega * data.Y))
        draws = np.array(
            [np.append(*update_regression(state, data, omega, data.Y, prior, rng)) for _ in range(20_000)]
        )
        for k in range(3):
            assert_within_mcse(draws[:, k], exact[k])
        np.testing.assert_allclose(np.cov(draws.T), np.linalg.inv(precision), rtol=0.05, atol=4e-4)

    def test_flat_prior_is_ols(self, regression_problem, rng):
        data, state = regression_problem
        omega = np.ones(data.n)
        W = np.column_stack([data.X, state.z])
        ols = np.linalg.lstsq(W, data.Y, rcond=None)[0]
        draws = np.array(
            [update_regression(state, data, omega, data.Y, PriorSpec(coef_prior="flat"), rng)[1] for _ in range(10_000)]
        )
        assert_within_mcse(draws, ols[-1])

    def test_singular_system(self, rng):
        data = HealthDataset.with_intercept(np.arange(4.0))
        state = ChainState.initial(data, np.ones(4))
        with pytest.raises(FactorizationError):
            update_regression(state, data, np.ones(4), data.Y, PriorSpec(coef_prior="flat"), rng)


@pytest.mark.unit
class TestNuisanceUpdates:
    """Test sigma^2 and r full conditionals"""

    def test_sigma2_inverse_gamma_mean(self, regression_problem, rng):
        data, state = regression_problem
        state.beta, state.theta = np.array([0.3, 0.8]), 1.5
        resid = data.Y - state.linear_predictor(data)
        shape, rate = 0.01 + data.n / 2, 0.01 + 0.5 * resid @ resid
        draws = np.array([update_sigma2(state, data, rng) for _ in range(20_000)])
        assert_within_mcse(draws, rate / (shape - 1))

    def test_sigma2_wrong_family(self, rng):
        data = HealthDataset.with_intercept([0.0, 1.0], family="bernoulli_logit")
        with pytest.raises(InvalidParameterError):
            update_sigma2(ChainState.initial(data, np.zeros(2)), data, rng)

    def test_dispersion_geometric_weights(self, rng):
        # one zero count at psi = 0: P(Y=0 | r) = 2^-r
        data = HealthDataset.with_intercept([0.0], family="negbin_logit")
        state = ChainState.initial(data, np.zeros(1))
        draws = np.array([update_dispersion_r(state, data, rng) for _ in range(20_000)])
        assert np.mean(draws == 1) == pytest.approx(0.5, abs=0.015)
        assert np.mean(draws == 2) == pytest.approx(0.25, abs=0.015)
        assert draws.min() >= 1 and draws.max() <= 100

    def test_dispersion_respects_r_max(self, rng):
        data = HealthDataset.with_intercept([5.0, 7.0, 6.0], family="negbin_logit")
        state = ChainState.initial(data, np.zeros(3))
        draws = [update_dispersion_r(state, data, rng, r_max=3) for _ in range(200)]
        assert set(draws) <= {1, 2, 3}

    @pytest.mark.slow
    def test_dispersion_recovery(self):
        hits = 0
        for seed in range(20):
            rng = RandomSource.for_stream(seed, "negbin-r")
            psi = np.full(2000, 0.5)
            counts = rng.generator.negative_binomial(10, 1.0 / (1.0 + np.exp(psi)))
            data = HealthDataset.with_intercept(counts.astype(float), family="negbin_logit")
            state = ChainState.initial(data, np.zeros(2000))
            state.beta = np.array([0.5])
            draws = np.array([update_dispersion_r(state, data, rng) for _ in range(200)])
            hits += 8 <= np.bincount(draws).argmax() <= 12
        assert hits >= 18


@pytest.mark.unit
class TestAugmentation:
    """Test the working precision and response per family"""

    def test_gaussian_fixed_precision(self, regression_problem, rng):
        data, state = regression_problem
        omega, Ytilde = augmentation_quantities(state, data, rng)
        np.testing.assert_allclose(omega, 1.0 / 0.49)
        np.testing.assert_array_equal(Ytilde, data.Y)

    def test_bernoulli_working_response(self, rng):
        data = HealthDataset.with_intercept([0.0, 1.0, 1.0, 0.0], family="bernoulli_logit")
        state = ChainState.initial(data, np.array([0.5, -1.0, 2.0, 0.0]))
        state.theta = 0.7
        omega, Ytilde = augmentation_quantities(state, data, rng)
        np.testing.assert_allclose(omega * Ytilde, data.Y - 0.5)

    def test_zero_counts_large_dispersion_finite(self, rng):
        data = HealthDataset.with_intercept(np.zeros(500), family="negbin_logit")
        state = ChainState.initial(data, np.zeros(500))
        state.r = 100
        for intercept in (-30.0, 0.0, 30.0):
            state.beta = np.array([intercept])
            omega, Ytilde = augmentation_quantities(state, data, rng)
            assert np.all(np.isfinite(Ytilde)) and np.all(omega > 0)
            np.testing.assert_allclose(omega * Ytilde, -50.0)
        assert_within_mcse(omega, float(polya_gamma_mean(100, 30.0)))

    def test_negbin_needs_dispersion(self, rng):
        data = HealthDataset.with_intercept([1.0, 0.0], family="negbin_logit")
        state = ChainState.initial(data, np.zeros(2))
        state.r = None
        with pytest.raises(InvalidParameterError):
            augmentation_quantities(state, data, rng)


@pytest.mark.unit
class TestMonteCarlo:
    """Test exact draws for fixed-exposure gaussian fits"""

    def test_conjugate_draws_centered_on_ols(self, rng):
        gen = np.random.default_rng(11)
        D = np.column_stack([np.ones(500), gen.normal(size=500)])
        y = D @ np.array([1.0, -2.0]) + gen.normal(size=500)
        coef, sigma2 = conjugate_linear_draws(D, y, 5_000, rng)
        ols = np.linalg.lstsq(D, y, rcond=None)[0]
        assert coef.shape == (5_000, 2) and sigma2.shape == (5_000,)
        assert_within_mcse(coef[:, 1], ols[1])
        assert sigma2.mean() == pytest.approx(1.0, abs=0.15)

    def test_rank_deficient(self, rng):
        D = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.raises(FactorizationError):
            conjugate_linear_draws(D, np.arange(5.0), 10, rng)

    def test_requires_flat_gaussian(self, small_problem, rng):
        data, ensemble, _ = small_problem
        with pytest.raises(InvalidParameterError):
            run_monte_carlo_gaussian(data, ensemble.zhat, PriorSpec(), 10, rng)

    def test_default_mi_draws(self):
        assert default_mi_draws(1000, 500) == 2
        assert default_mi_draws(10, 500) == 1


@pytest.mark.unit
class TestMultipleImputation:
    """Test pooling over ensemble columns"""

    def test_tags_and_sizes(self, small_problem, rng):
        data, ensemble, _ = small_problem
        samples = run_mi(data, ensemble, PriorSpec(coef_prior="flat"), 4, rng, threads=1)
        assert samples.n_draws == 4 * ensemble.m
        np.testing.assert_array_equal(np.bincount(samples.source_column), np.full(ensemble.m, 4))
        assert samples.method == "MI"

    def test_identical_columns_match_single_fit(self, small_problem, rng):
        data, _, z = small_problem
        ensemble = ExposureEnsemble(np.tile(z[:, None], (1, 5)))
        prior = PriorSpec(coef_prior="flat")
        pooled = run_mi(data, ensemble, prior, 2_000, rng.spawn("pooled"), threads=1)
        single = run_monte_carlo_gaussian(data, z, prior, 10_000, rng.spawn("single"))
        assert pooled.theta.mean() == pytest.approx(single.theta.mean(), abs=0.01)
        assert pooled.theta.std() == pytest.approx(single.theta.std(), rel=0.05)

    def test_nongaussian_uses_short_chains(self, rng):
        gen = np.random.default_rng(12)
        Z = gen.normal(size=(40, 3))
        Y = (gen.random(40) < 0.5).astype(float)
        data = HealthDataset.with_intercept(Y, family="bernoulli_logit")
        samples = run_mi(data, ExposureEnsemble(Z), PriorSpec(), 5, rng, threads=1)
        assert samples.n_draws == 15
        assert samples.names == ["beta_0", "theta"]


@pytest.mark.unit
class TestGibbsDriver:
    """Test chains, determinism and dispatch"""

    def test_parameter_names(self):
        gaussian = HealthDataset.with_intercept([1.0, 2.0, 0.5], covariates=[0.1, 0.2, 0.0])
        negbin = HealthDataset.with_intercept([1.0, 2.0], family="negbin_logit")
        assert parameter_names(gaussian) == ["beta_0", "beta_1", "theta", "sigma2_eps"]
        assert parameter_names(negbin) == ["beta_0", "theta", "r"]

    @pytest.mark.parametrize("method", ["MIA", "DU", "MVN", "UKDE", "MKDE"])
    def test_same_seed_same_draws(self, small_problem, method):
        data, ensemble, _ = small_problem
        spec = MethodSpec(method=method)
        runs = [
            fit(data, ensemble, spec, PriorSpec(), SHORT, RandomSource.for_stream(3, "det"), threads=1)
            for _ in range(2)
        ]
        np.testing.assert_array_equal(runs[0].draws, runs[1].draws)
        assert runs[0].n_draws == SHORT.retained

    def test_chains_labelled(self, small_problem, rng):
        data, ensemble, _ = small_problem
        config = SamplerConfig(iterations_total=300, burn_in=100, thin=2, chains=3)
        samples = run_gibbs(data, ensemble, MethodSpec(method="MIA"), PriorSpec(), config, rng, threads=1)
        assert samples.chains == [0, 1, 2]
        assert samples.n_draws == 300
        assert not np.array_equal(samples.chain_draws(0).draws, samples.chain_draws(1).draws)

    def test_ukde_recovers_effect(self, small_problem, rng):
        data, ensemble, _ = small_problem
        config = SamplerConfig(iterations_total=2_200, burn_in=200, thin=4)
        samples = fit(data, ensemble, MethodSpec(method="UKDE"), PriorSpec(), config, rng, threads=1)
        summary = samples.theta_summary()
        assert summary["lower"] < 1.0 < summary["upper"]
        assert samples.metadata["family"] == "gaussian_identity"

    def test_plugin_flat_uses_monte_carlo(self, small_problem, rng):
        data, ensemble, _ = small_problem
        samples = fit(data, ensemble, MethodSpec(method="PlugIn"), PriorSpec(coef_prior="flat"), SHORT, rng)
        assert samples.chain is None
        assert samples.n_draws == SHORT.retained

    def test_plugin_mcmc_path(self, small_problem, rng):
        data, ensemble, _ = small_problem
        spec = MethodSpec(method="PlugIn", plugin_mcmc=True)
        samples = fit(data, ensemble, spec, PriorSpec(), SHORT, rng, threads=1)
        np.testing.assert_array_equal(samples.chain, 0)

    def test_bernoulli_chain(self, rng):
        gen = np.random.default_rng(13)
        z = gen.normal(size=200)
        Y = (gen.random(200) < 1.0 / (1.0 + np.exp(-(0.2 + 1.0 * z)))).astype(float)
        data = HealthDataset.with_intercept(Y, family="bernoulli_logit")
        ensemble = ExposureEnsemble(z[:, None] + 0.1 * gen.normal(size=(200, 20)))
        config = SamplerConfig(iterations_total=1_100, burn_in=100, thin=5)
        samples = fit(data, ensemble, MethodSpec(method="MVN"), PriorSpec(), config, rng, threads=1)
        assert samples.names == ["beta_0", "theta"]
        assert 0.3 < samples.theta.mean() < 2.0
        assert samples.relative_risk()["mean"] > 1.0

    def test_monte_carlo_matches_gibbs(self, small_problem):
        data, ensemble, _ = small_problem
        prior = PriorSpec(coef_prior="flat")
        config = SamplerConfig(iterations_total=6_000, burn_in=1_000, thin=1)
        exact = fit(data, ensemble, MethodSpec(method="PlugIn"), prior, config, RandomSource.for_stream(4, "exact"))
        spec = MethodSpec(method="PlugIn", plugin_mcmc=True)
        chain = fit(data, ensemble, spec, prior, config, RandomSource.for_stream(4, "chain"), threads=1)
        assert exact.chain is None and chain.n_draws == exact.n_draws
        sd = exact.theta.std()
        assert chain.theta.mean() == pytest.approx(exact.theta.mean(), abs=0.1 * sd)
        assert chain.theta.std() == pytest.approx(sd, rel=0.08)
        assert chain.column("sigma2_eps").mean() == pytest.approx(exact.column("sigma2_eps").mean(), rel=0.05)

    def test_negbin_chain(self, rng):
        data, z = negbin_counts(21, 300, theta=0.5)
        ensemble = ExposureEnsemble(z[:, None] + 0.1 * np.random.default_rng(22).normal(size=(300, 30)))
        config = SamplerConfig(iterations_total=1_500, burn_in=300, thin=3)
        spec = MethodSpec(method="UKDE", ukde_bandwidth="silverman")
        samples = fit(data, ensemble, spec, PriorSpec(), config, rng, threads=1)
        assert samples.names == ["beta_0", "theta", "r"]
        assert 0.3 < samples.theta.mean() < 0.7
        r = samples.column("r")
        np.testing.assert_array_equal(r, np.round(r))
        assert 1 <= r.min() and r.max() <= 100
        assert 4 <= np.median(r) <= 25

    def test_flat_prior_rejected_for_counts(self, rng):
        data = HealthDataset.with_intercept([1.0, 2.0, 0.0], family="negbin_logit")
        ensemble = ExposureEnsemble(np.random.default_rng(0).normal(size=(3, 4)))
        with pytest.raises(InvalidParameterError):
            fit(data, ensemble, MethodSpec(method="DU"), PriorSpec(coef_prior="flat"), SHORT, rng)

    def test_row_mismatch(self, small_problem, rng):
        data, ensemble, _ = small_problem
        with pytest.raises(InvalidParameterError):
            fit(data, ensemble.lagged(1), MethodSpec(method="DU"), PriorSpec(), SHORT, rng)

    def test_true_exposure_label(self, small_problem, rng):
        data, _, z = small_problem
        samples = fit_true_exposure(data, z, PriorSpec(coef_prior="flat"), SHORT, rng)
        assert samples.method == "True"
        assert samples.theta.mean() == pytest.approx(1.0, abs=0.35)


@pytest.mark.unit
class TestPosteriorSamples:
    """Test summaries, concatenation and file format"""

    @pytest.fixture
    def samples(self):
        gen = np.random.default_rng(14)
        return PosteriorSamples(
            draws=np.column_stack([gen.normal(size=400), gen.normal(1.0, 0.1, size=400)]),
            names=["beta_0", "theta"],
            method="UKDE",
            seed={"seed": 1, "stream_id": 2},
            chain=np.repeat([0, 1], 200),
        )

    def test_summary_levels(self, samples):
        narrow = samples.summary(0.5).loc["theta"]
        wide = samples.summary(0.99).loc["theta"]
        assert wide["lower"] < narrow["lower"] < narrow["upper"] < wide["upper"]
        assert samples.theta_summary()["mean"] == pytest.approx(samples.theta.mean())

    def test_invalid_level(self, samples):
        with pytest.raises(InvalidParameterError):
            samples.summary(1.0)

    def test_relative_risk(self, samples):
        rr = samples.relative_risk()
        assert rr["median"] == pytest.approx(np.exp(np.median(samples.theta)), rel=1e-6)

    def test_concat(self, samples):
        both = PosteriorSamples.concat([samples, samples])
        assert both.n_draws == 800
        np.testing.assert_array_equal(both.chain[:400], samples.chain)

    def test_names_must_match_draws(self):
        with pytest.raises(InvalidParameterError):
            PosteriorSamples(draws=np.zeros((3, 2)), names=["theta"], method="MI")

    def test_file_round_trip(self, samples, temp_dir):
        path = write_samples(temp_dir / "post.csv", samples, {"seed": 1})
        assert sidecar_path(path).exists()
        back = read_samples(path)
        np.testing.assert_array_equal(back.draws, samples.draws)
        np.testing.assert_array_equal(back.chain, samples.chain)
        assert back.method == "UKDE" and back.names == samples.names


@pytest.mark.unit
class TestGeweke:
    """Test the convergence diagnostic"""

    def test_iid_calibration(self):
        gen = np.random.default_rng(15)
        inside = sum(abs(geweke_z(gen.normal(size=10_000))) < 1.96 for _ in range(500))
        assert 0.92 <= inside / 500 <= 0.98

    def test_trend_flagged(self):
        chain = np.linspace(0.0, 5.0, 1_000) + np.random.default_rng(16).normal(scale=0.1, size=1_000)
        assert abs(geweke_z(chain)) > 1.96

    def test_constant_is_undefined(self):
        assert np.isnan(geweke_z(np.ones(200)))

    def test_too_short(self):
        with pytest.raises(InvalidParameterError):
            geweke_z(np.zeros(50))

    def test_report_per_chain(self):
        gen = np.random.default_rng(17)
        samples = PosteriorSamples(
            draws=np.column_stack([gen.normal(size=600), np.full(600, 3.0)]),
            names=["theta", "r"],
            method="UKDE",
            chain=np.repeat([0, 1], 300),
        )
        report = geweke_diagnostic(samples)
        assert len(report.z_scores["theta"]) == 2
        assert report.undefined == ["r"]
        assert report.to_dict()["z_scores"]["r"] == [None, None]
        assert "r" not in report.flagged()


@pytest.mark.unit
@pytest.mark.slow
class TestCalibration:
    """Test interval coverage over seeded synthetic datasets"""

    def test_true_exposure_reference(self):
        config = SamplerConfig(iterations_total=1_100, burn_in=100, thin=1)
        estimates, covered = [], 0
        for seed in range(400):
            gen = np.random.default_rng(seed)
            z = gen.normal(size=50)
            data = HealthDataset.with_intercept(0.5 + z + gen.normal(size=50))
            samples = fit_true_exposure(
                data, z, PriorSpec(coef_prior="flat"), config, RandomSource.for_stream(seed, "reference")
            )
            summary = samples.theta_summary()
            estimates.append(summary["mean"])
            covered += summary["lower"] <= 1.0 <= summary["upper"]
        estimates = np.array(estimates)
        assert 0.92 <= covered / 400 <= 0.98
        assert abs(estimates.mean() - 1.0) <= 3 * estimates.std(ddof=1) / np.sqrt(400)

    def test_plugin_type_one_error(self):
        config = SamplerConfig(iterations_total=1_100, burn_in=100, thin=1)
        rejections = 0
        for seed in range(400):
            gen = np.random.default_rng(seed)
            z = gen.normal(size=60)
            ensemble = ExposureEnsemble(z[:, None] + 0.3 * gen.normal(size=(60, 20)))
            data = HealthDataset.with_intercept(0.5 + gen.normal(size=60))
            samples = fit(
                data, ensemble, MethodSpec(method="PlugIn"), PriorSpec(coef_prior="flat"), config,
                RandomSource.for_stream(seed, "null"),
            )
            summary = samples.theta_summary()
            rejections += summary["lower"] > 0.0 or summary["upper"] < 0.0
        assert_proportion(rejections, 400, 0.05)

    def test_bernoulli_coverage(self):
        config = SamplerConfig(iterations_total=1_500, burn_in=300, thin=2)
        covered = 0
        for seed in range(20):
            gen = np.random.default_rng(100 + seed)
            z = gen.normal(size=300)
            Y = (gen.random(300) < 1.0 / (1.0 + np.exp(-(0.2 + z)))).astype(float)
            data = HealthDataset.with_intercept(Y, family="bernoulli_logit")
            samples = fit_true_exposure(data, z, PriorSpec(), config, RandomSource.for_stream(seed, "bern"), threads=1)
            summary = samples.theta_summary()
            covered += summary["lower"] <= 1.0 <= summary["upper"]
        assert covered >= 17

    def test_negbin_coverage_and_dispersion(self):
        config = SamplerConfig(iterations_total=1_500, burn_in=500, thin=2)
        covered, dispersion_hits = 0, 0
        for seed in range(20):
            data, z = negbin_counts(200 + seed, 1_500, theta=0.5)
            samples = fit_true_exposure(data, z, PriorSpec(), config, RandomSource.for_stream(seed, "nb"), threads=1)
            summary = samples.theta_summary()
            covered += summary["lower"] <= 0.5 <= summary["upper"]
            mode = np.bincount(samples.column("r").astype(int)).argmax()
            dispersion_hits += abs(mode - 10) <= 2
        assert covered >= 17
        assert dispersion_hits >= 18
