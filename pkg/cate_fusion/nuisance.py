"""
Parametric working models: propensity scores, mean outcomes and OS participation.
"""

import logging
from typing import Any, Dict, List, Literal, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import expit

from .exceptions import (
    CateFusionError,
    ConfigurationError,
    ConvergenceError,
    DataFormatError,
    InsufficientDataError,
    NuisanceFitError,
    RankDeficiencyError,
)
from .models import CoefficientVector, FittedNuisances, Link, OutcomeDesign, OutcomeModel, StudyDataset

logger = logging.getLogger(__name__)

MAX_ITERATIONS = 100
STEP_TOLERANCE = 1e-8
SCORE_TOLERANCE = 1e-10
JITTER = 1e-8
SEPARATION_BOUND = 30.0
SEPARATION_PENALTY = 1e-4
SEPARATION_RESIDUAL = 1e-6
PROBABILITY_FLOOR = 1e-12

Design = Literal["main_effects", "main_effects_treatment"]


def _with_intercept(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(-1, 1)
    return np.column_stack([np.ones(rows.shape[0]), rows])


def _irls(y: np.ndarray, X: np.ndarray, penalty: float) -> Tuple[np.ndarray, int, List[Dict[str, float]], bool]:
    """
    Newton-Raphson / IRLS for the (optionally ridge-penalised) Bernoulli likelihood.

    The intercept is never penalised. The jitter only regularises the step, not the
    score, so the fixed point is the exact (penalised) maximiser. Without a penalty,
    separation is flagged once a coefficient passes SEPARATION_BOUND or every record
    is fitted to within SEPARATION_RESIDUAL.

    Returns:
        (coefficients, iterations, trace, hit_separation_bound)
    """
    k = X.shape[1]
    beta = np.zeros(k)
    pen = np.full(k, penalty)
    pen[0] = 0.0
    trace: List[Dict[str, float]] = []
    for it in range(1, MAX_ITERATIONS + 1):
        p = expit(X @ beta)
        if penalty == 0.0 and it > 1 and np.max(np.abs(y - p)) < SEPARATION_RESIDUAL:
            return beta, it - 1, trace, True
        w = p * (1.0 - p)
        score = X.T @ (y - p) - pen * beta
        hessian = (X.T * w) @ X + np.diag(pen + JITTER)
        try:
            step = linalg.solve(hessian, score, assume_a="pos")
        except linalg.LinAlgError as e:
            raise ConvergenceError(f"IRLS Hessian is singular at iteration {it}: {e}", trace) from e
        beta = beta + step
        change = float(np.max(np.abs(step)))
        score_norm = float(np.linalg.norm(score))
        trace.append({"iteration": it, "max_change": change, "score_norm": score_norm})
        if not np.isfinite(beta).all():
            raise ConvergenceError("IRLS produced non-finite coefficients.", trace)
        if penalty == 0.0 and np.max(np.abs(beta)) > SEPARATION_BOUND:
            return beta, it, trace, True
        if change < STEP_TOLERANCE or score_norm < SCORE_TOLERANCE:
            return beta, it, trace, False
    raise ConvergenceError(f"IRLS did not converge in {MAX_ITERATIONS} iterations.", trace)


def fit_logistic(
    responses: Any, design: Any, name: str = "", design_kind: Design = "main_effects"
) -> CoefficientVector:
    """
    Fits a logistic regression by iteratively reweighted least squares.

    Args:
        responses: 0/1 vector.
        design: Design rows without intercept, shape (n, k); k may be 0.
        name: Model name used in messages and exports.
        design_kind: Recorded on the result so predictions expand x the same way.

    Returns:
        A CoefficientVector with logit link. `warning` is set when coefficients passed
        the separation bound and the model was refit with a small ridge penalty.

    Raises:
        InsufficientDataError: If either response class is absent.
        ConvergenceError: After MAX_ITERATIONS without convergence.
    """
    y = np.asarray(responses, dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataFormatError(f"{name or 'logistic model'}: responses must be 0/1.")
    if y.size == 0 or y.min() == y.max():
        raise InsufficientDataError(f"{name or 'logistic model'}: both response classes are required.")
    X = _with_intercept(design)
    if X.shape[0] != y.size:
        raise DataFormatError(f"{name or 'logistic model'}: {X.shape[0]} design rows for {y.size} responses.")

    beta, iterations, _, separated = _irls(y, X, 0.0)
    warning = None
    if separated:
        warning = f"separation detected; refit with ridge penalty {SEPARATION_PENALTY:g}"
        logger.warning("%s: %s", name or "logistic model", warning)
        beta, more, _, _ = _irls(y, X, SEPARATION_PENALTY)
        iterations += more
    logger.debug("%s: logistic fit converged in %d iterations", name or "logistic model", iterations)
    return CoefficientVector(
        name=name,
        link="logit",
        intercept=float(beta[0]),
        slopes=tuple(float(b) for b in beta[1:]),
        design=design_kind,
        iterations=iterations,
        warning=warning,
    )


def fit_linear(
    responses: Any, design: Any, name: str = "", design_kind: Design = "main_effects"
) -> CoefficientVector:
    """
    Ordinary least squares with an intercept.

    Raises:
        RankDeficiencyError: If there are fewer rows than columns or the design is
                             rank deficient.
    """
    y = np.asarray(responses, dtype=float)
    X = _with_intercept(design)
    if X.shape[0] != y.size:
        raise DataFormatError(f"{name or 'linear model'}: {X.shape[0]} design rows for {y.size} responses.")
    if X.shape[0] < X.shape[1]:
        raise RankDeficiencyError(f"{name or 'linear model'}: {X.shape[0]} rows for {X.shape[1]} coefficients.")
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise RankDeficiencyError(f"{name or 'linear model'}: design rank {rank} < {X.shape[1]} columns.")
    coef, *_ = linalg.lstsq(X, y)
    return CoefficientVector(
        name=name,
        link="identity",
        intercept=float(coef[0]),
        slopes=tuple(float(b) for b in coef[1:]),
        design=design_kind,
    )


def fit_response(
    responses: Any, design: Any, link: Link, name: str = "", design_kind: Design = "main_effects"
) -> CoefficientVector:
    """Dispatches to fit_logistic or fit_linear by link."""
    if link == "logit":
        return fit_logistic(responses, design, name=name, design_kind=design_kind)
    return fit_linear(responses, design, name=name, design_kind=design_kind)


def _unwrap(values: np.ndarray, x: Any) -> Union[float, np.ndarray]:
    if np.ndim(x) == 1:
        return float(values[0])
    return values


def predict_probability(model: CoefficientVector, x: Any, t: Any = None) -> Union[float, np.ndarray]:
    """
    expit of the linear predictor, clamped to [1e-12, 1 - 1e-12].

    A 1-D `x` is one covariate vector and gives a float; a 2-D `x` gives an array.
    """
    if model.link != "logit":
        raise ConfigurationError(f"{model.name or 'model'} does not have a logit link.")
    p = np.clip(expit(model.linear_predictor(x, t)), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
    return _unwrap(p, x)


def predict_response(model: CoefficientVector, x: Any, t: Any = None) -> Union[float, np.ndarray]:
    """Mean response on the natural scale for either link."""
    if model.link == "logit":
        return predict_probability(model, x, t)
    return _unwrap(model.linear_predictor(x, t), x)


def predict_mean(model: OutcomeModel, x: Any, t: Any) -> Union[float, np.ndarray]:
    """mu(x, t) under either outcome design."""
    if model.design == "pooled_arms":
        return predict_response(model.pooled, x, t)
    treated = np.asarray(predict_response(model.treated, x))
    control = np.asarray(predict_response(model.control, x))
    out = np.where(np.asarray(t) == 1, treated, control)
    return float(out) if out.ndim == 0 else out


def odds_weight(participation: CoefficientVector, x: Any) -> Union[float, np.ndarray]:
    """omega(x) = rho(x) / (1 - rho(x)) from the clamped participation probability."""
    rho = np.asarray(predict_probability(participation, x))
    out = rho / (1.0 - rho)
    return float(out) if out.ndim == 0 else out


def _fit_outcome(
    y: np.ndarray, x: np.ndarray, t: np.ndarray, link: Link, design: OutcomeDesign, name: str
) -> OutcomeModel:
    if design == "pooled_arms":
        pooled = fit_response(
            y, np.column_stack([x, t]), link, name=name, design_kind="main_effects_treatment"
        )
        return OutcomeModel(design=design, pooled=pooled)
    treated = t == 1
    if treated.all() or not treated.any():
        raise InsufficientDataError("per-arm outcome models need treated and untreated records.")
    return OutcomeModel(
        design=design,
        treated=fit_response(y[treated], x[treated], link, name=f"{name}_treated"),
        control=fit_response(y[~treated], x[~treated], link, name=f"{name}_control"),
    )


def _tagged(model_name: str, fit, *args, **kwargs):
    try:
        return fit(*args, **kwargs)
    except CateFusionError as e:
        raise NuisanceFitError(model_name, e) from e


def fit_all_nuisances(
    train: StudyDataset,
    outcome_link: Link = "identity",
    outcome_design: OutcomeDesign = "pooled_arms",
) -> FittedNuisances:
    """
    Fits every working model on its stratum.

    Propensity (T ~ X) and outcome models are fit per study; the participation model
    (Z ~ X) on the pooled data.

    Args:
        train: Pooled training data.
        outcome_link: identity for continuous outcomes, logit for binary ones.
        outcome_design: `pooled_arms` (Y ~ X + T) or `per_arm` (Y ~ X by arm).

    Raises:
        InsufficientDataError: If either study is empty.
        NuisanceFitError: Wrapping any sub-fit failure, tagged with the model name.
    """
    if train.n0 == 0 or train.n1 == 0:
        raise InsufficientDataError("participation model needs both studies")
    trial = train.z == 0
    fits = {}
    for label, mask in (("trial", trial), ("os", ~trial)):
        x, t, y = train.x[mask], train.t[mask], train.y[mask]
        fits[f"ps_{label}"] = _tagged(f"ps_{label}", fit_logistic, t, x, name=f"ps_{label}")
        fits[f"outcome_{label}"] = _tagged(
            f"outcome_{label}", _fit_outcome, y, x, t, outcome_link, outcome_design, f"outcome_{label}"
        )
    fits["participation"] = _tagged("participation", fit_logistic, train.z, train.x, name="participation")
    nuisances = FittedNuisances(**fits)
    logger.info(
        "Fitted nuisance models on n=%d (trial %d, OS %d)%s",
        train.n,
        train.n0,
        train.n1,
        "; " + "; ".join(nuisances.warnings) if nuisances.warnings else "",
    )
    return nuisances
