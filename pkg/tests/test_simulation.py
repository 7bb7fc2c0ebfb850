import numpy as np
import pytest

from cate_fusion.exceptions import ReplicationError, SimulationError
from cate_fusion.models import ReplicationResult, ScenarioConfig
from cate_fusion.nuisance import fit_linear
from cate_fusion.settings import Settings
from cate_fusion.simulation import (
    aggregate_metrics,
    evaluation_grid,
    generate_dataset,
    per_replication_frame,
    replication_seeds,
    risk_curves_frame,
    run_replication,
    run_simulation,
    transform_covariates,
)

SMALL = ScenarioConfig(n=1000, n_valid=2000, replications=2, seed=3, integrated_grid_size=5)


def fake_result(rep_index, estimates, half_width=1.0, k=2):
    estimates = np.broadcast_to(np.asarray(estimates, dtype=float), (3, k)).copy()
    ci = np.stack([estimates - half_width, estimates + half_width], axis=-1)
    return ReplicationResult(
        rep_index=rep_index,
        estimates=estimates,
        ci_plain=ci,
        ci_conservative=ci,
        eta=np.zeros(k),
        selected_lambda=1.0,
        all_eta_zero=True,
        n0=80,
        n1=920,
    )


class TestGenerateDataset:
    def test_shapes_and_latent_covariates(self):
        data = generate_dataset(500, "correct", seed=1)
        assert data.n == 500 and data.p == 4
        np.testing.assert_array_equal(data.x, data.latent_x)

    def test_misspecified_transform(self):
        data = generate_dataset(200, "misspecified", seed=1)
        np.testing.assert_allclose(data.x, transform_covariates(data.latent_x))
        np.testing.assert_allclose(transform_covariates(np.zeros((1, 4))), [[1.0, 10.0, 0.216, 400.0]])

    def test_deterministic(self):
        a = generate_dataset(300, "correct", seed=9)
        b = generate_dataset(300, "correct", seed=9)
        for field in ("z", "t", "y", "x"):
            np.testing.assert_array_equal(getattr(a, field), getattr(b, field))

    def test_study_shares(self):
        data = generate_dataset(20000, "correct", seed=2)
        assert abs(data.n1 / data.n - 0.92) < 0.02
        assert abs(data.t[data.z == 0].mean() - 0.5) < 0.05

    def test_outcome_model(self):
        data = generate_dataset(20000, "correct", seed=4)
        model = fit_linear(data.y, data.latent_x)
        assert model.intercept + sum(model.slopes) == pytest.approx(278.5, abs=0.1)


class TestSeeds:
    def test_streams_are_reproducible_and_distinct(self):
        train, valid = replication_seeds(5, 0)
        again, _ = replication_seeds(5, 0)
        other, _ = replication_seeds(5, 1)

        def draw(seq):
            return np.random.default_rng(seq).random(3)

        np.testing.assert_array_equal(draw(train), draw(again))
        assert not np.array_equal(draw(train), draw(valid))
        assert not np.array_equal(draw(train), draw(other))

    def test_evaluation_grid_order(self):
        grid = evaluation_grid(SMALL)
        assert len(grid) == 10
        np.testing.assert_allclose(grid.points[:5, 0], SMALL.eval_percentiles)
        np.testing.assert_allclose(grid.points[5:, 0], [0.1, 0.3, 0.5, 0.7, 0.9])


class TestAggregate:
    CONFIG = ScenarioConfig(eval_percentiles=(0.5,), integrated_grid_size=1)

    def test_exact_zero(self):
        report = aggregate_metrics([fake_result(0, 0.0), fake_result(1, 0.0)], self.CONFIG)
        for row in report.rows:
            assert (row.bias, row.rmse, row.coverage_plain) == (0.0, 0.0, 1.0)

    def test_symmetric_errors(self):
        report = aggregate_metrics([fake_result(0, 1.0, 0.5), fake_result(1, -1.0, 0.5)], self.CONFIG)
        row = report.row("adaptive", 0.5)
        assert row.bias == 0.0 and row.rmse == 1.0 and row.coverage_plain == 0.0
        assert report.row("trial", None).rmse == 1.0

    def test_frame(self):
        frame = aggregate_metrics([fake_result(0, 0.0)], self.CONFIG).to_frame()
        assert len(frame) == 6
        assert set(frame["percentile"]) == {"0.5", "integrated"}

    def test_no_results(self):
        with pytest.raises(SimulationError):
            aggregate_metrics([], self.CONFIG)


class TestReplication:
    @pytest.fixture(scope="class")
    def result(self):
        return run_replication(0, SMALL, Settings(threads=1))

    def test_shapes(self, result):
        assert result.estimates.shape == (3, 10)
        assert result.ci_plain.shape == (3, 10, 2)
        assert np.all(result.ci_conservative[..., 0] <= result.ci_plain[..., 0] + 1e-12)
        assert result.risk_curve

    def test_reproducible(self, result):
        again = run_replication(0, SMALL, Settings(threads=1))
        np.testing.assert_array_equal(result.estimates, again.estimates)

    def test_frames(self, result):
        per_rep = per_replication_frame([result], SMALL)
        assert len(per_rep) == 3 * 10
        assert list(risk_curves_frame([result]).columns) == ["rep", "lambda", "risk"]

    def test_run_simulation(self):
        report, results, failures = run_simulation(SMALL, Settings(threads=1), n_jobs=1, progress=False)
        assert report.replications == 2 and not failures
        assert [r.rep_index for r in results] == [0, 1]

    def test_numerical_failures_are_wrapped(self, monkeypatch):
        def singular(self, *args, **kwargs):
            raise np.linalg.LinAlgError("singular matrix")

        monkeypatch.setattr("cate_fusion.simulation.AdaptiveCateEstimator.fit_split", singular)
        with pytest.raises(ReplicationError) as err:
            run_replication(4, SMALL, Settings(threads=1))
        assert err.value.rep_index == 4
        assert isinstance(err.value.cause, np.linalg.LinAlgError)

    def test_too_many_failures(self, monkeypatch):
        def failing(rep_index, config, settings=None):
            raise ReplicationError(rep_index, RuntimeError("boom"))

        monkeypatch.setattr("cate_fusion.simulation.run_replication", failing)
        with pytest.raises(SimulationError, match="2 of 2 replications failed"):
            run_simulation(SMALL, n_jobs=1, progress=False)


def _simulate(scenario, n, replications):
    config = ScenarioConfig(n=n, scenario=scenario, replications=replications, seed=1)
    return run_simulation(config, progress=False)


@pytest.fixture(scope="module")
def correct_small():
    return _simulate("correct", 1000, 200)


@pytest.fixture(scope="module")
def correct_large():
    return _simulate("correct", 10000, 200)


@pytest.fixture(scope="module")
def misspecified_small():
    return _simulate("misspecified", 1000, 200)


@pytest.fixture(scope="module")
def misspecified_large():
    return _simulate("misspecified", 10000, 200)


@pytest.mark.slow
class TestMonteCarlo:
    PERCENTILES = (0.05, 0.25, 0.5, 0.75, 0.95)

    def test_correct_scenario_integrated_rmse(self, correct_small):
        report = correct_small[0]
        assert 0.2275 <= report.row("trial", None).rmse <= 0.4725
        assert 0.091 <= report.row("os", None).rmse <= 0.189
        assert 0.09 <= report.row("adaptive", None).rmse <= 0.16
        for estimator in ("trial", "os", "adaptive"):
            assert abs(report.row(estimator, None).bias) <= 0.03

    def test_misspecified_bias_ordering(self, misspecified_small, misspecified_large):
        report = misspecified_small[0]
        assert abs(report.row("adaptive", None).bias) < abs(report.row("os", None).bias)
        assert report.row("adaptive", 0.95).rmse < report.row("os", 0.95).rmse
        assert report.row("trial", 0.95).rmse < report.row("os", 0.95).rmse
        assert abs(misspecified_large[0].row("adaptive", None).bias) <= 0.5

    def test_misspecified_large_n_coverage(self, misspecified_large):
        report = misspecified_large[0]
        for q in (0.25, 0.5, 0.75):
            assert report.row("os", q).coverage_plain <= 0.05
            assert report.row("adaptive", q).coverage_plain >= 0.88
            assert 0.93 <= report.row("trial", q).coverage_plain <= 0.99

    def test_correct_large_n_coverage(self, correct_large):
        report = correct_large[0]
        for estimator in ("trial", "os", "adaptive"):
            for q in self.PERCENTILES:
                assert 0.92 <= report.row(estimator, q).coverage_plain <= 0.98

    def test_correct_scenario_selects_smallest_lambda(self, correct_small):
        results = correct_small[1]
        smallest = [r.selected_lambda == min(lam for lam, _ in r.risk_curve) for r in results]
        assert np.mean(smallest) >= 0.8

    def test_misspecified_weights_vanish(self, misspecified_large):
        assert misspecified_large[0].all_zero_fraction >= 0.6
