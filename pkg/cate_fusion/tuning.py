"""
Lambda grid construction and out-of-sample selection of the lasso penalty.
"""

import logging
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .combiner import point_weights
from .exceptions import ConfigurationError, InsufficientDataError
from .kernel import summarize_points
from .models import CombinerConfig, KernelConfig, LambdaGrid, PointSummaries, PseudoOutcomePanel, ThresholdRule, TuningResult

logger = logging.getLogger(__name__)

MAX_DROPPED_SHARE = 0.10


def build_lambda_grid(
    eta_unpenalized: Any,
    bias: Any,
    epsilon: float = 1e-3,
    grid_size: int = 25,
    cross: Optional[Any] = None,
    rule: ThresholdRule = "ratio",
) -> LambdaGrid:
    """
    Candidate lambdas shared by every evaluation point.

    Per point the ratio r_v is eta_unpenalized / bias^2 (`rule="ratio"`) or the exact
    zeroing threshold 2 |s| / bias^2 (`rule="exact"`, which needs `cross` = s).
    lambda_max = min_v r_v and lambda_max_plus = max_v r_v; the grid is `grid_size`
    log-spaced values over [epsilon * lambda_max, lambda_max] plus lambda_max_plus.

    Points with zero bias carry no penalty and are ignored. If no point has a
    non-zero bias the grid degenerates to {0}. Negative ratios are replaced by
    their absolute values with a warning.

    Args:
        eta_unpenalized: Unpenalized weights per point.
        bias: tau_o - tau_r per point.
        epsilon: Lower grid end as a fraction of lambda_max.
        grid_size: Number of log-spaced values.
        cross: s per point, required by the exact rule.
        rule: `ratio` or `exact`.
    """
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}.")
    if grid_size < 1:
        raise ConfigurationError("grid_size must be at least 1.")
    bias = np.atleast_1d(np.asarray(bias, dtype=float))
    if rule == "exact":
        if cross is None:
            raise ConfigurationError("The exact threshold rule needs the cross products s.")
        numerator = 2.0 * np.abs(np.atleast_1d(np.asarray(cross, dtype=float)))
    else:
        numerator = np.atleast_1d(np.asarray(eta_unpenalized, dtype=float))

    usable = np.isfinite(bias) & np.isfinite(numerator) & (bias != 0.0)
    if not usable.any():
        logger.info("All bias estimates are zero; lambda grid is {0}")
        return LambdaGrid(
            values=(0.0,), lambda_max=0.0, lambda_max_plus=0.0,
            epsilon=epsilon, grid_size=grid_size, rule=rule, degenerate=True,
        )
    ratios = numerator[usable] / bias[usable] ** 2
    if (ratios < 0).any():
        logger.warning("%d negative lambda ratio(s); using absolute values", int((ratios < 0).sum()))
        ratios = np.abs(ratios)
    ratios = ratios[ratios > 0]
    if ratios.size == 0:
        return LambdaGrid(
            values=(0.0,), lambda_max=0.0, lambda_max_plus=0.0,
            epsilon=epsilon, grid_size=grid_size, rule=rule, degenerate=True,
        )

    lambda_max = float(ratios.min())
    lambda_max_plus = float(ratios.max())
    if grid_size == 1:
        values = np.array([lambda_max])
    else:
        values = np.logspace(np.log10(epsilon * lambda_max), np.log10(lambda_max), grid_size)
        values[0], values[-1] = epsilon * lambda_max, lambda_max
    values = np.unique(np.append(values, lambda_max_plus))
    return LambdaGrid(
        values=tuple(float(x) for x in values),
        lambda_max=lambda_max,
        lambda_max_plus=lambda_max_plus,
        epsilon=epsilon,
        grid_size=grid_size,
        rule=rule,
    )


def grid_from_summaries(
    summaries: PointSummaries, epsilon: float = 1e-3, grid_size: int = 25, rule: ThresholdRule = "exact"
) -> LambdaGrid:
    """build_lambda_grid over the points of a training fit."""
    _, unpenalized, _ = point_weights(summaries, CombinerConfig(method="unpenalized"))
    return build_lambda_grid(
        unpenalized, summaries.bias_estimate, epsilon=epsilon, grid_size=grid_size,
        cross=summaries.cross, rule=rule,
    )


class ValidationProblem(BaseModel):
    """
    The training fit and the validation-data trial estimator, both evaluated at
    the V of every validation record, with unsupported points already removed.
    """
    train: PointSummaries
    valid_trial: np.ndarray
    dropped: int = 0
    base_config: CombinerConfig = CombinerConfig()

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @classmethod
    def from_fits(
        cls,
        train_panel: PseudoOutcomePanel,
        train_bandwidth: Tuple[float, ...],
        valid_panel: PseudoOutcomePanel,
        valid_bandwidth: Tuple[float, ...],
        target_z: int,
        kernel: Optional[KernelConfig] = None,
        base_config: Optional[CombinerConfig] = None,
        n_jobs: Optional[int] = 1,
    ) -> "ValidationProblem":
        """
        Evaluates both fits at the validation V values.

        Points where either fit falls below the density floor are dropped.

        Raises:
            InsufficientDataError: If more than 10% of the validation points are dropped.
        """
        kernel = kernel or KernelConfig(d=train_panel.d)
        points = valid_panel.v
        train = summarize_points(
            train_panel, target_z, points, kernel, bandwidth=train_bandwidth, strict=False, n_jobs=n_jobs
        )
        valid = summarize_points(
            valid_panel, target_z, points, kernel, bandwidth=valid_bandwidth, strict=False, n_jobs=n_jobs
        )
        keep = train.supported & valid.supported
        dropped = int((~keep).sum())
        if dropped:
            logger.warning("Dropped %d of %d validation points below the density floor", dropped, keep.size)
        if dropped > MAX_DROPPED_SHARE * keep.size:
            raise InsufficientDataError(
                f"{dropped} of {keep.size} validation points lack kernel support (limit 10%).", code="support"
            )
        train = train.model_copy(
            update={
                name: getattr(train, name)[keep]
                for name in ("points", "tau_r", "tau_o", "f_r", "f_o", "ss_r", "ss_o", "supported")
            }
        )
        return cls(
            train=train,
            valid_trial=valid.tau_r[keep],
            dropped=dropped,
            base_config=base_config or CombinerConfig(),
        )

    @property
    def size(self) -> int:
        return int(self.valid_trial.shape[0])


def validation_risk(lambda_: float, problem: ValidationProblem) -> float:
    """
    R(lambda) = sum_i {tau(V_i; lambda) - tau_r_valid(V_i)}^2 over validation records.

    tau(.; lambda) is the lasso combination of the training fit.
    """
    config = problem.base_config.model_copy(update={"method": "lasso", "lambda_": float(lambda_)})
    eta, _, _ = point_weights(problem.train, config)
    tau = problem.train.tau_r + eta * problem.train.bias_estimate
    return float(np.sum(np.square(tau - problem.valid_trial)))


def select_from_curve(values: Sequence[float], risks: Sequence[float], **extra: Any) -> TuningResult:
    """Argmin of a risk curve over increasing lambdas; ties go to the smallest lambda."""
    risks = np.asarray(risks, dtype=float)
    if risks.size == 0 or risks.size != len(values):
        raise ConfigurationError("A risk curve needs one risk per lambda.")
    index = int(np.argmin(risks))
    return TuningResult(
        selected_lambda=float(values[index]),
        selected_index=index,
        risk_curve=[(float(lam), float(r)) for lam, r in zip(values, risks)],
        **extra,
    )


def select_lambda(grid: LambdaGrid, problem: ValidationProblem) -> TuningResult:
    """Evaluates the validation risk at every grid value and returns the minimiser."""
    risks = [validation_risk(lam, problem) for lam in grid.values]
    result = select_from_curve(
        grid.values, risks, dropped_points=problem.dropped, evaluated_points=problem.size
    )
    logger.info(
        "Selected lambda %.6g (index %d of %d, risk %.6g)",
        result.selected_lambda, result.selected_index, len(grid.values), risks[result.selected_index],
    )
    return result
