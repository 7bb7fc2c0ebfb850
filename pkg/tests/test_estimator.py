import numpy as np
import pytest

from cate_fusion import AdaptiveCateEstimator, Settings
from cate_fusion.data import split_train_validation
from cate_fusion.exceptions import ConfigurationError, InsufficientDataError
from cate_fusion.models import EvaluationGrid, StudyDataset


@pytest.fixture(scope="module")
def lasso_result(correct_data):
    return AdaptiveCateEstimator(eval_points=20, threads=1).fit(correct_data)


class TestFit:
    def test_shapes(self, lasso_result):
        assert len(lasso_result.adaptive) == 20
        assert len(lasso_result.trial) == len(lasso_result.observational) == 20
        assert lasso_result.reduction.kind == "percentile"
        assert lasso_result.n_train == lasso_result.n0 + lasso_result.n1

    def test_tuning_ran(self, lasso_result):
        tuning = lasso_result.tuning
        assert tuning is not None and lasso_result.lambda_grid is not None
        assert lasso_result.selected_lambda in lasso_result.lambda_grid.values
        assert len(tuning.risk_curve) == len(lasso_result.lambda_grid.values)
        assert tuning.dropped_points <= 0.1 * (tuning.evaluated_points + tuning.dropped_points)

    def test_fixed_estimators(self, lasso_result):
        for trial, obs, ada in zip(lasso_result.trial, lasso_result.observational, lasso_result.adaptive):
            assert trial.tau == ada.tau_r
            assert obs.tau == pytest.approx(ada.tau_o)
            assert trial.eta == 0.0 and obs.eta == 1.0

    def test_adaptive_centred_on_zero_effect(self, lasso_result):
        covered = [abs(est.tau) <= 3 * est.se_plain for est in lasso_result.adaptive]
        assert np.mean(covered) >= 0.9

    def test_frames(self, lasso_result):
        estimates = lasso_result.estimates_frame()
        assert {"v", "trial_tau", "os_tau", "tau_r", "tau_o", "eta", "tau", "ci_low", "ci_high"} <= set(estimates)
        assert list(lasso_result.weights_frame().columns) == ["v", "eta"]

    @pytest.mark.parametrize("method", ["ridge", "unpenalized"])
    def test_other_methods_skip_tuning(self, correct_data, method):
        result = AdaptiveCateEstimator(method=method, eval_points=5, threads=1).fit(correct_data)
        assert result.tuning is None and result.lambda_grid is None
        assert result.selected_lambda == 0.0
        assert all(np.isfinite(est.tau) for est in result.adaptive)

    def test_unpenalized_matches_unpenalized_weight(self, correct_data):
        result = AdaptiveCateEstimator(method="unpenalized", eval_points=5, threads=1).fit(correct_data)
        for est in result.adaptive:
            assert est.eta == pytest.approx(est.eta_unpenalized)

    def test_refit_full(self, correct_data):
        result = AdaptiveCateEstimator(refit_full=True, eval_points=5, threads=1).fit(correct_data)
        assert result.refit_full and result.n_train == correct_data.n

    def test_deterministic(self, correct_data):
        first = AdaptiveCateEstimator(eval_points=5, threads=1).fit(correct_data)
        second = AdaptiveCateEstimator(eval_points=5, threads=1).fit(correct_data)
        assert [e.tau for e in first.adaptive] == [e.tau for e in second.adaptive]
        assert first.selected_lambda == second.selected_lambda

    def test_stage_fit(self, correct_data):
        estimator = AdaptiveCateEstimator(threads=1)
        train, valid = split_train_validation(correct_data, 0.2, seed=0)
        stage = estimator.fit_stage(train, estimator.prepare_reduction(valid))
        assert stage.panel.n == train.n and len(stage.bandwidth) == 1
        assert stage.nuisances.participation.name == "participation"
        with pytest.raises(ValueError):
            stage.bandwidth = (1.0,)

    def test_target_trial_population(self, correct_data):
        result = AdaptiveCateEstimator(target_z=0, eval_points=5, threads=1).fit(correct_data)
        assert result.target_z == 0 and len(result.adaptive) == 5


class TestReductionsAndGrids:
    def test_column_reduction_grid_spans_reference(self, correct_data):
        estimator = AdaptiveCateEstimator(reduction="col:1", eval_points=4, threads=1)
        train, valid = split_train_validation(correct_data, 0.2, seed=0)
        reduction = estimator.prepare_reduction(valid)
        grid = estimator.default_grid(reduction, valid)
        low, high = valid.x[:, 1].min(), valid.x[:, 1].max()
        assert low < grid.points.min() and grid.points.max() < high

    def test_explicit_grid(self, correct_data):
        grid = EvaluationGrid(points=[0.25, 0.5, 0.75])
        result = AdaptiveCateEstimator(threads=1).fit(correct_data, grid)
        assert [est.v for est in result.adaptive] == [(0.25,), (0.5,), (0.75,)]

    def test_grid_dimension_mismatch(self, correct_data):
        grid = EvaluationGrid(points=[[0.2, 0.3]])
        with pytest.raises(ConfigurationError):
            AdaptiveCateEstimator(threads=1).fit(correct_data, grid)

    def test_column_out_of_range(self, correct_data):
        with pytest.raises(ConfigurationError):
            AdaptiveCateEstimator(reduction="col:9", threads=1).fit(correct_data)

    def test_single_study_rejected(self, correct_data):
        trial_only = correct_data.subset(np.flatnonzero(correct_data.z == 0))
        with pytest.raises(InsufficientDataError):
            AdaptiveCateEstimator(threads=1).fit(trial_only)


class TestConfiguration:
    def test_overrides_win(self):
        estimator = AdaptiveCateEstimator(Settings(method="ridge", grid_size=9), method="unpenalized")
        assert estimator.settings.method == "unpenalized" and estimator.settings.grid_size == 9

    def test_invalid_override(self):
        with pytest.raises(ConfigurationError):
            AdaptiveCateEstimator(train_frac=1.5)

    def test_fixed_bandwidth_is_used(self, correct_data):
        result = AdaptiveCateEstimator(bandwidth=0.2, eval_points=5, threads=1).fit(correct_data)
        assert result.bandwidth == (0.2,)

    def test_describe(self):
        described = AdaptiveCateEstimator(method="ridge").describe()
        assert described["method"] == "ridge" and described["bandwidth"] is None

    def test_dataset_fixture_has_both_studies(self, correct_data):
        assert isinstance(correct_data, StudyDataset)
        assert correct_data.n0 > 100 and correct_data.n1 > 100
