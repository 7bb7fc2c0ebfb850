import numpy as np
import pytest
from scipy.special import expit

from cate_fusion.exceptions import (
    ConfigurationError,
    ConvergenceError,
    DataFormatError,
    InsufficientDataError,
    NuisanceFitError,
    RankDeficiencyError,
)
from cate_fusion.models import CoefficientVector, OutcomeModel, StudyDataset
from cate_fusion.nuisance import (
    fit_all_nuisances,
    fit_linear,
    fit_logistic,
    odds_weight,
    predict_mean,
    predict_probability,
)
from cate_fusion.simulation import generate_dataset


def logistic_se(model: CoefficientVector, x: np.ndarray) -> np.ndarray:
    X = np.column_stack([np.ones(x.shape[0]), x])
    p = expit(X @ np.r_[model.intercept, model.slopes])
    return np.sqrt(np.diag(np.linalg.inv((X.T * (p * (1 - p))) @ X)))


class TestFitLogistic:
    def test_intercept_only_balanced(self):
        model = fit_logistic([0, 1, 0, 1, 1, 0], np.empty((6, 0)))
        assert model.intercept == pytest.approx(0.0, abs=1e-12)
        assert model.slopes == ()

    def test_intercept_only_matches_log_odds(self):
        y = np.array([1, 1, 1, 0, 0, 1, 1, 0])
        model = fit_logistic(y, np.empty((8, 0)))
        assert model.intercept == pytest.approx(np.log(5 / 3), abs=1e-10)

    def test_no_effect(self, rng):
        x = rng.normal(size=(20000, 1))
        y = (rng.random(20000) < 0.5).astype(int)
        model = fit_logistic(y, x)
        assert abs(model.intercept) < 0.05
        assert abs(model.slopes[0]) < 0.05

    def test_recovers_participation_coefficients(self, rng):
        n = 50000
        x = rng.normal(size=(n, 4))
        truth = np.array([2.5, 0.1, 0.1, 0.1, 0.1])
        y = (rng.random(n) < expit(truth[0] + x @ truth[1:])).astype(int)
        model = fit_logistic(y, x, name="participation")
        estimate = np.r_[model.intercept, model.slopes]
        assert np.all(np.abs(estimate - truth) < 4 * logistic_se(model, x))
        assert model.warning is None

    def test_score_vanishes_at_convergence(self, rng):
        x = rng.normal(size=(500, 2))
        y = (rng.random(500) < expit(0.3 + x @ [1.0, -0.5])).astype(int)
        model = fit_logistic(y, x)
        X = np.column_stack([np.ones(500), x])
        score = X.T @ (y - expit(X @ np.r_[model.intercept, model.slopes]))
        assert np.linalg.norm(score) < 1e-8 * 500

    def test_shift_invariance(self, rng):
        x = rng.normal(size=(400, 2))
        y = (rng.random(400) < expit(-0.2 + x @ [0.8, 0.4])).astype(int)
        base = fit_logistic(y, x)
        shifted_x = x + np.array([3.0, 0.0])
        shifted = fit_logistic(y, shifted_x)
        assert shifted.intercept == pytest.approx(base.intercept - 3.0 * base.slopes[0], abs=1e-8)
        np.testing.assert_allclose(
            predict_probability(shifted, shifted_x), predict_probability(base, x), atol=1e-8
        )

    def test_singular_hessian_is_a_convergence_error(self, rng, monkeypatch):
        def singular(*args, **kwargs):
            raise np.linalg.LinAlgError("matrix is not positive definite")

        monkeypatch.setattr("cate_fusion.nuisance.linalg.solve", singular)
        with pytest.raises(ConvergenceError, match="singular"):
            fit_logistic(rng.integers(0, 2, 50), rng.normal(size=(50, 2)))

    def test_separation_falls_back_to_ridge(self):
        x = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        model = fit_logistic([0, 0, 1, 1], x, name="separated")
        assert model.warning is not None
        assert np.isfinite(model.slopes[0]) and model.slopes[0] > 0
        p = predict_probability(model, x)
        assert np.all(np.diff(p) > 0)

    def test_single_class(self):
        with pytest.raises(InsufficientDataError):
            fit_logistic([1, 1, 1], np.zeros((3, 1)))

    def test_non_binary_response(self):
        with pytest.raises(DataFormatError):
            fit_logistic([0, 2, 1], np.zeros((3, 1)))


class TestFitLinear:
    def test_exact_recovery(self, rng):
        x = rng.normal(size=(30, 4))
        coef = np.array([210, 27.4, 13.7, 13.7, 13.7])
        model = fit_linear(coef[0] + x @ coef[1:], x)
        np.testing.assert_allclose(np.r_[model.intercept, model.slopes], coef, atol=1e-8)

    def test_constant_response(self, rng):
        x = rng.normal(size=(10, 2))
        model = fit_linear(np.full(10, 4.2), x)
        assert model.intercept == pytest.approx(4.2)
        np.testing.assert_allclose(model.slopes, 0.0, atol=1e-10)

    def test_three_points_on_a_line(self):
        model = fit_linear([1.0, 3.0, 5.0], np.array([[0.0], [1.0], [2.0]]))
        assert model.intercept == pytest.approx(1.0)
        assert model.slopes[0] == pytest.approx(2.0)

    def test_residuals_orthogonal(self, rng):
        x = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        model = fit_linear(y, x)
        X = np.column_stack([np.ones(50), x])
        np.testing.assert_allclose(X.T @ (y - model.linear_predictor(x)), 0.0, atol=1e-8)

    def test_rank_deficient(self, rng):
        x = rng.normal(size=(20, 1))
        with pytest.raises(RankDeficiencyError):
            fit_linear(rng.normal(size=20), np.column_stack([x, 2 * x]))

    def test_too_few_rows(self):
        with pytest.raises(RankDeficiencyError):
            fit_linear([1.0, 2.0], np.array([[1.0, 2.0], [3.0, 5.0]]))


class TestPredictions:
    def test_zero_predictor(self):
        model = CoefficientVector(link="logit", intercept=0.0, slopes=(1.0,))
        assert predict_probability(model, [0.0]) == pytest.approx(0.5)

    def test_participation_at_origin(self):
        model = CoefficientVector(link="logit", intercept=2.5, slopes=(0.1,) * 4)
        assert predict_probability(model, [0.0] * 4) == pytest.approx(0.924142, abs=1e-6)

    def test_clamp_floor(self):
        model = CoefficientVector(link="logit", intercept=-50.0)
        assert predict_probability(model, np.empty(0)) == 1e-12

    def test_vector_input_gives_array(self):
        model = CoefficientVector(link="logit", intercept=0.0, slopes=(1.0,))
        p = predict_probability(model, np.array([[0.0], [1.0]]))
        assert p.shape == (2,)
        assert p[1] == pytest.approx(expit(1.0))

    def test_dimension_mismatch(self):
        model = CoefficientVector(link="logit", intercept=0.0, slopes=(1.0, 2.0))
        with pytest.raises(DataFormatError):
            predict_probability(model, [1.0])

    def test_identity_link_rejected(self):
        with pytest.raises(ConfigurationError):
            predict_probability(CoefficientVector(link="identity", intercept=0.0), np.empty(0))

    def test_odds_weight_even(self):
        model = CoefficientVector(link="logit", intercept=0.0)
        assert odds_weight(model, np.empty(0)) == pytest.approx(1.0)

    def test_odds_weight_exponentiates(self):
        model = CoefficientVector(link="logit", intercept=2.5)
        assert odds_weight(model, np.empty(0)) == pytest.approx(12.182494, rel=1e-6)

    def test_odds_weight_at_clamp(self):
        model = CoefficientVector(link="logit", intercept=60.0)
        w = odds_weight(model, np.empty(0))
        assert np.isfinite(w) and w == pytest.approx(1e12, rel=1e-3)

    def test_odds_identity(self, rng):
        model = CoefficientVector(link="logit", intercept=0.3, slopes=(1.2, -0.4))
        x = rng.normal(size=(100, 2))
        rho = predict_probability(model, x)
        np.testing.assert_allclose(odds_weight(model, x) * (1 - rho), rho, atol=1e-12)

    def test_predict_mean_pooled(self):
        pooled = CoefficientVector(
            link="identity", intercept=1.0, slopes=(2.0, 0.5), design="main_effects_treatment"
        )
        model = OutcomeModel(pooled=pooled)
        assert predict_mean(model, [1.0], 1) == pytest.approx(3.5)
        np.testing.assert_allclose(predict_mean(model, np.array([[1.0], [0.0]]), [0, 1]), [3.0, 1.5])

    def test_predict_mean_per_arm(self):
        model = OutcomeModel(
            design="per_arm",
            treated=CoefficientVector(link="identity", intercept=5.0, slopes=(1.0,)),
            control=CoefficientVector(link="identity", intercept=1.0, slopes=(1.0,)),
        )
        np.testing.assert_allclose(predict_mean(model, np.array([[0.0], [2.0]]), np.array([1, 0])), [5.0, 3.0])


class TestFitAllNuisances:
    def test_fits_every_model(self):
        nuisances = fit_all_nuisances(generate_dataset(500, "correct", seed=1))
        for name in ("ps_trial", "ps_os", "participation"):
            model = getattr(nuisances, name)
            assert model.name == name and model.link == "logit"
        assert nuisances.outcome_os.pooled.name == "outcome_os"
        assert len(nuisances.outcome_trial.pooled.slopes) == 5

    def test_single_study(self, small_dataset):
        only_os = small_dataset.subset(np.flatnonzero(small_dataset.z == 1))
        with pytest.raises(InsufficientDataError, match="participation model needs both studies"):
            fit_all_nuisances(only_os)

    def test_failures_are_tagged(self):
        data = StudyDataset(
            z=[0, 0, 0, 1, 1, 1, 1],
            t=[1, 1, 1, 0, 1, 0, 1],
            y=[1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 4.0],
            x=[[0.1], [0.2], [0.3], [0.4], [0.5], [0.6], [0.7]],
        )
        with pytest.raises(NuisanceFitError) as err:
            fit_all_nuisances(data)
        assert err.value.model_name == "ps_trial"
        assert str(err.value).startswith("[nuisance_fit] ps_trial:")

    def test_randomized_trial_propensity(self):
        data = generate_dataset(50000, "correct", seed=5)
        nuisances = fit_all_nuisances(data)
        trial = data.z == 0
        p = predict_probability(nuisances.ps_trial, data.x[trial])
        assert np.all(np.abs(np.asarray(nuisances.ps_trial.slopes)) < 0.2)
        assert abs(p.mean() - 0.5) < 0.03

    def test_recovers_generating_models(self):
        data = generate_dataset(50000, "correct", seed=6)
        nuisances = fit_all_nuisances(data)
        os_x = data.x[data.z == 1]
        ps = nuisances.ps_os
        truth = np.array([0.0, -1.0, 0.5, -0.25, -0.1])
        assert np.all(np.abs(np.r_[ps.intercept, ps.slopes] - truth) < 4 * logistic_se(ps, os_x))
        outcome = nuisances.outcome_os.pooled
        np.testing.assert_allclose(outcome.slopes[:4], [27.4, 13.7, 13.7, 13.7], atol=0.05)
        assert outcome.slopes[4] == pytest.approx(0.0, abs=0.05)
        assert outcome.intercept == pytest.approx(210.0, abs=0.05)
        participation = nuisances.participation
        assert participation.intercept == pytest.approx(2.5, abs=0.15)

    def test_per_arm_design(self, correct_data):
        nuisances = fit_all_nuisances(correct_data, outcome_design="per_arm")
        assert nuisances.outcome_trial.design == "per_arm"
        assert nuisances.outcome_trial.treated.name == "outcome_trial_treated"
        exported = nuisances.to_json()
        assert set(exported) == {"ps_trial", "ps_os", "outcome_trial", "outcome_os", "participation"}
        assert set(exported["outcome_os"]) == {"treated", "control"}
