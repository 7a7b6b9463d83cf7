"""
Unit tests for the simulation generator, runner and metrics
"""

import numpy as np
import pandas as pd
import pytest

from packages.engine.core.model import MethodName, MethodSpec, SamplerConfig
from packages.simulation.reporting import MetricsReport, replicate_metrics, write_report
from packages.simulation.simgen import (
    gen_covariance,
    gen_exposure_ensemble,
    gen_health_outcomes,
    gen_locations,
)
from packages.simulation.study import ScenarioConfig, factorial_grid, run_grid, run_replicate, run_scenario

TINY_SAMPLER = SamplerConfig(iterations_total=300, burn_in=100, thin=2)


def tiny_scenario(**overrides):
    settings = dict(
        n=20,
        m=12,
        replicates=2,
        seed=5,
        methods=[MethodSpec(method="PlugIn"), MethodSpec(method="UKDE", ukde_bandwidth="silverman")],
        sampler=TINY_SAMPLER,
    )
    settings.update(overrides)
    return ScenarioConfig(**settings)


@pytest.mark.unit
class TestSimGen:
    """Test synthetic exposures and outcomes"""

    def test_locations_in_unit_square(self, rng):
        locs = gen_locations(100, rng)
        assert locs.shape == (100, 2)
        assert np.all((locs >= 0) & (locs < 1))

    def test_covariance_decay(self):
        locs = np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.0]])
        sigma = gen_covariance(locs, correlated=True)
        assert sigma[0, 1] == pytest.approx(0.05)
        assert sigma[0, 2] == pytest.approx(1.0)

    def test_uncorrelated_identity(self, rng):
        np.testing.assert_array_equal(gen_covariance(gen_locations(4, rng), correlated=False), np.eye(4))

    @pytest.mark.parametrize("correlated,skewed", [(False, False), (True, True)])
    def test_ensemble_standardized_with_truth(self, rng, correlated, skewed):
        config = tiny_scenario(correlated=correlated, skewed=skewed, n=30, m=40)
        sigma = gen_covariance(gen_locations(config.n, rng), correlated)
        simulated = gen_exposure_ensemble(config, sigma, rng)
        Z = simulated.ensemble.Z_star
        assert Z.shape == (30, 40) and simulated.truth.shape == (30,)
        assert Z.mean() == pytest.approx(0.0, abs=1e-12)
        assert Z.std() == pytest.approx(1.0)
        raw_truth = simulated.transform.invert(simulated.truth)
        if skewed:
            assert np.all(raw_truth > 0)

    def test_outcomes(self, rng):
        z = np.linspace(-1, 1, 5000)
        Y = gen_health_outcomes(z, 2.0, rng)
        assert np.std(Y - 2.0 * z) == pytest.approx(1.0, abs=0.05)


@pytest.mark.unit
class TestScenarioConfig:
    """Test cell configuration"""

    def test_defaults(self):
        config = ScenarioConfig()
        assert (config.n, config.m, config.replicates) == (250, 500, 50)
        assert [spec.method for spec in config.methods] == list(MethodName)

    def test_priors_per_method(self):
        config = ScenarioConfig()
        assert config.prior_for(MethodSpec(method="PlugIn")).coef_prior == "flat"
        assert config.prior_for(MethodSpec(method="MI")).coef_prior == "flat"
        assert config.prior_for(MethodSpec(method="UKDE")).coef_prior == "normal"

    def test_mkde_budget(self):
        config = ScenarioConfig()
        assert config.sampler_for(MethodSpec(method="MKDE")).iterations_total == 5500
        assert config.sampler_for(MethodSpec(method="MVN")).iterations_total == 11000

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError):
            ScenarioConfig(methods=[MethodSpec(method="DU"), MethodSpec(method="DU")])

    def test_factorial_grid(self):
        grid = factorial_grid()
        assert len(grid) == 16
        assert len({config.name for config in grid}) == 16
        assert [config.theta_true for config in grid[:8]] == [0.0] * 8
        full = factorial_grid(desk_scale=False)
        assert (full[0].m, full[0].replicates) == (1000, 500)

    def test_factorial_grid_overrides(self):
        grid = factorial_grid(replicates=3, n=50)
        assert all(config.replicates == 3 and config.n == 50 for config in grid)


@pytest.mark.unit
class TestMetrics:
    """Test metric arithmetic"""

    def test_hand_computed(self):
        rows = pd.DataFrame({"theta_hat": [0.9, 1.3], "lower": [0.5, 1.1], "upper": [1.3, 1.6]})
        metrics = replicate_metrics(rows, 1.0).set_index("metric")
        assert metrics.loc["bias", "value"] == pytest.approx(0.1)
        assert metrics.loc["mse", "value"] == pytest.approx((0.01 + 0.09) / 2)
        assert metrics.loc["ec", "value"] == pytest.approx(0.5)
        assert metrics.loc["power", "value"] == pytest.approx(1.0)
        assert metrics.loc["width", "value"] == pytest.approx(0.65)
        assert metrics.loc["ec", "se"] == pytest.approx(np.sqrt(0.25 / 2))

    def test_table_layout(self):
        raw = pd.DataFrame(
            {
                "scenario": ["s"] * 4,
                "theta_true": [0.0] * 4,
                "correlated": [False] * 4,
                "skewed": [False] * 4,
                "tau2": [0.1] * 4,
                "replicate": [0, 0, 1, 1],
                "method": ["PlugIn", "UKDE"] * 2,
                "theta_hat": [0.1, 0.0, -0.1, 0.05],
                "lower": [-0.2, -0.3, -0.4, -0.2],
                "upper": [0.4, 0.3, 0.2, 0.3],
                "failed": [False] * 4,
                "error": [""] * 4,
            }
        )
        report = MetricsReport.from_raw(raw)
        table = report.to_table()
        assert list(table.columns) == ["Metric", "Theta", "Tau2", "Correlated", "Skewed", "PlugIn", "UKDE"]
        assert list(table["Metric"]) == [
            "Bias", "Bias SE range", "MSE", "MSE SE range", "EC", "EC SE range", "Type I", "Power SE range"
        ]
        assert report.value("s", "UKDE", "ec") == pytest.approx(100.0)
        assert report.value("s", "PlugIn", "bias", scaled=False) == pytest.approx(0.0)

    def test_factor_columns_follow_scenarios(self):
        cells = [tiny_scenario(theta_true=0.0, tau2=1.0, correlated=True), tiny_scenario(skewed=True)]
        raw = pd.DataFrame(
            [
                dict(cell.factors, replicate=r, method="PlugIn", theta_hat=0.1 * r, lower=-1.0, upper=1.5,
                     failed=False, error="")
                for cell in cells
                for r in range(2)
            ]
        )
        table = MetricsReport.from_raw(raw).to_table()
        bias = table[table["Metric"] == "Bias"].reset_index(drop=True)
        for row, cell in zip(bias.itertuples(), cells):
            assert (row.Theta, row.Tau2) == (cell.theta_true, cell.tau2)
            assert row.Correlated == ("Yes" if cell.correlated else "No")
            assert row.Skewed == ("Yes" if cell.skewed else "No")
        assert list(table.loc[table["Metric"].str.endswith("SE range"), "Theta"].unique()) == [""]
        assert list(table.loc[table["Metric"].isin(["Type I", "Power"]), "Metric"]) == ["Type I", "Power"]

    def test_failed_rows_excluded(self):
        raw = pd.DataFrame(
            {
                "scenario": ["s", "s"],
                "theta_true": [1.0, 1.0],
                "correlated": [False, False],
                "skewed": [False, False],
                "tau2": [0.1, 0.1],
                "replicate": [0, 1],
                "method": ["DU", "DU"],
                "theta_hat": [1.2, np.nan],
                "lower": [0.9, np.nan],
                "upper": [1.5, np.nan],
                "failed": [False, True],
                "error": ["", "boom"],
            }
        )
        metrics = MetricsReport.from_raw(raw).metrics
        assert set(metrics["replicates"]) == {1}


@pytest.mark.unit
class TestRunner:
    """Test replicate runs, checkpoints and collation"""

    def test_replicate_rows(self):
        config = tiny_scenario()
        rows = run_replicate(config, 0)
        assert [row["method"] for row in rows] == ["True", "PlugIn", "UKDE"]
        assert not any(row["failed"] for row in rows)

    def test_replicate_deterministic(self):
        config = tiny_scenario()
        assert run_replicate(config, 1) == run_replicate(config, 1)

    def test_scenario_report(self, temp_dir):
        report = run_scenario(tiny_scenario(), threads=1, checkpoint_dir=temp_dir)
        assert report.methods == ["True", "PlugIn", "UKDE"]
        assert len(report.raw_frame()) == 6
        paths = write_report(report, temp_dir / "out")
        assert [path.name for path in paths] == ["metrics_table.csv", "metrics_long.csv", "replicates.json"]
        table = pd.read_csv(paths[0])
        assert len(table) == 8

    def test_resume_matches_uninterrupted(self, temp_dir):
        config = tiny_scenario(replicates=3)
        full = run_scenario(config, threads=1, checkpoint_dir=temp_dir / "a")
        run_scenario(config.model_copy(update={"replicates": 1}), threads=1, checkpoint_dir=temp_dir / "b")
        resumed = run_scenario(config, threads=1, checkpoint_dir=temp_dir / "b")
        pd.testing.assert_frame_equal(full.metrics, resumed.metrics)
        pd.testing.assert_frame_equal(full.raw_frame(), resumed.raw_frame())

    def test_checkpoint_key_tracks_settings(self):
        small, large = tiny_scenario(n=20), tiny_scenario(n=40)
        assert small.name == large.name
        assert small.checkpoint_key != large.checkpoint_key
        assert small.checkpoint_key == tiny_scenario(n=20, replicates=7).checkpoint_key

    def test_changed_settings_ignore_old_checkpoints(self, temp_dir):
        first = run_scenario(tiny_scenario(n=20), threads=1, checkpoint_dir=temp_dir / "shared")
        second = run_scenario(tiny_scenario(n=40), threads=1, checkpoint_dir=temp_dir / "shared")
        fresh = run_scenario(tiny_scenario(n=40), threads=1, checkpoint_dir=temp_dir / "fresh")
        pd.testing.assert_frame_equal(second.raw_frame(), fresh.raw_frame())
        assert not np.allclose(first.raw_frame()["theta_hat"], second.raw_frame()["theta_hat"])
        assert len(list((temp_dir / "shared").iterdir())) == 2

    def test_grid_order(self):
        configs = [tiny_scenario(theta_true=0.0, replicates=1), tiny_scenario(theta_true=1.0, replicates=1)]
        report = run_grid(configs, threads=1)
        assert report.scenarios == [config.name for config in configs]

    @pytest.mark.slow
    def test_reduced_bias_ordering(self):
        methods = [MethodSpec(method=name) for name in ("PlugIn", "MI", "DU", "MVN", "UKDE")]
        sampler = SamplerConfig(iterations_total=3_000, burn_in=1_000, thin=2)
        config = ScenarioConfig(
            theta_true=1.0, tau2=0.1, replicates=30, n=150, m=300, seed=11, methods=methods, sampler=sampler
        )
        report = run_scenario(config, threads=None)
        bias = {method: report.value(config.name, method, "bias") for method in report.methods}
        assert abs(bias["UKDE"]) < abs(bias["MVN"]) < abs(bias["DU"]) < abs(bias["MI"])
        assert -97.0 <= bias["MI"] <= -80.0
        assert -10.0 <= bias["UKDE"] <= 20.0
        assert -10.0 <= bias["PlugIn"] <= 10.0
        assert report.value(config.name, "MI", "ec") <= 5.0

    @pytest.mark.slow
    def test_skewed_cell_direction(self):
        methods = [MethodSpec(method="PlugIn"), MethodSpec(method="UKDE")]
        sampler = SamplerConfig(iterations_total=3_000, burn_in=1_000, thin=2)
        config = ScenarioConfig(
            theta_true=1.0, tau2=0.1, skewed=True, replicates=30, n=150, m=300, seed=12,
            methods=methods, sampler=sampler,
        )
        report = run_scenario(config, threads=None)
        plugin, ukde = report.value(config.name, "PlugIn", "bias"), report.value(config.name, "UKDE", "bias")
        assert plugin > 30.0
        assert -15.0 <= ukde <= 25.0

    @pytest.mark.slow
    def test_type_one_error_at_null(self):
        methods = [MethodSpec(method=name) for name in ("PlugIn", "MI", "DU", "MVN", "UKDE")]
        sampler = SamplerConfig(iterations_total=2_000, burn_in=500, thin=2)
        config = ScenarioConfig(
            theta_true=0.0, tau2=0.1, skewed=True, replicates=100, n=100, m=100, seed=13,
            methods=methods, sampler=sampler,
        )
        report = run_scenario(config, threads=None)
        for method in report.methods:
            assert report.value(config.name, method, "power") <= 12.0, method

    @pytest.mark.slow
    def test_mi_and_mia_agree(self):
        methods = [MethodSpec(method="MI"), MethodSpec(method="MIA")]
        sampler = SamplerConfig(iterations_total=3_000, burn_in=500, thin=1)
        config = ScenarioConfig(
            theta_true=1.0, tau2=0.1, replicates=10, n=100, m=100, seed=14, methods=methods, sampler=sampler,
            include_true=False,
        )
        report = run_scenario(config, threads=None)
        estimates = report.raw_frame().groupby("method")["theta_hat"].mean()
        assert abs(estimates["MI"] - estimates["MIA"]) * 100.0 < 2.0
