"""
Combination weights and the combined CATE estimate.

With a = xi_r and b = xi_r - xi_o, every weight estimator is a scalar regression of
a on b: the unpenalized least squares slope s / B, a soft-thresholded slope under
the weighted l1 penalty, or a shrunken slope under the scaled l2 penalty.
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .models import (
    BaseEstimate,
    CombinedEstimate,
    CombinerConfig,
    PointSummaries,
    WeightEstimate,
    Z_975,
)

logger = logging.getLogger(__name__)

Bandwidth = Union[float, Sequence[float]]


def soft_threshold(s, threshold):
    """sign(s) * max(|s| - threshold, 0), elementwise."""
    return np.sign(s) * np.maximum(np.abs(s) - threshold, 0.0)


def _bandwidth_power(h: Bandwidth, d: int) -> float:
    """h^d for a scalar bandwidth, or the product of per-coordinate bandwidths."""
    if np.ndim(h) == 0:
        return float(h) ** d
    return float(np.prod(h))


def eta_unpenalized(base: BaseEstimate) -> WeightEstimate:
    """
    Least squares slope s / B of xi_r on (xi_r - xi_o).

    Returns 0 with `degenerate=True` when B = 0.
    """
    gram = base.gram
    if gram == 0.0:
        return WeightEstimate(eta=0.0, degenerate=True)
    return WeightEstimate(eta=base.cross / gram)


def eta_lasso(base: BaseEstimate, lambda_: float) -> WeightEstimate:
    """
    Minimiser of sum_i (a_i - eta b_i)^2 + lambda |eta| (tau_o - tau_r)^2.

    Closed form sign(s) max(|s| - lambda bias^2 / 2, 0) / B; at the boundary
    |s| = lambda bias^2 / 2 the weight is exactly 0.
    """
    gram = base.gram
    if gram == 0.0:
        return WeightEstimate(eta=0.0, degenerate=True)
    penalty = lambda_ * base.bias_estimate ** 2
    return WeightEstimate(eta=float(soft_threshold(base.cross, penalty / 2.0)) / gram)


def eta_ridge(
    base: BaseEstimate,
    n: Optional[int] = None,
    h: Optional[Bandwidth] = None,
    d: Optional[int] = None,
    beta_exponent: float = 0.25,
) -> WeightEstimate:
    """
    Minimiser of sum_i (a_i - eta b_i)^2 + n^(2(1-beta)) h^(2d) eta^2 (tau_o - tau_r)^2.

    `n`, `h` and `d` default to the fitting context stored on `base`.
    """
    n = base.n if n is None else n
    h = base.bandwidth if h is None else h
    d = len(base.bandwidth) if d is None else d
    hd = _bandwidth_power(h, d)
    denominator = base.gram + n ** (2.0 * (1.0 - beta_exponent)) * hd ** 2 * base.bias_estimate ** 2
    if denominator == 0.0:
        return WeightEstimate(eta=0.0, degenerate=True)
    return WeightEstimate(eta=base.cross / denominator)


def estimate_weight(base: BaseEstimate, config: CombinerConfig) -> WeightEstimate:
    if config.method == "lasso":
        return eta_lasso(base, config.lambda_)
    if config.method == "ridge":
        return eta_ridge(base, beta_exponent=config.beta_exponent)
    return eta_unpenalized(base)


def _standard_errors(sigma2: float, eta: float, bias: float, scale: float) -> Tuple[float, float]:
    sigma2_c = sigma2 + eta ** 2 * bias ** 2
    return float(np.sqrt(sigma2 / scale)), float(np.sqrt(sigma2_c / scale))


def combine(
    base: BaseEstimate,
    config: CombinerConfig,
    n: Optional[int] = None,
    h: Optional[Bandwidth] = None,
) -> CombinedEstimate:
    """
    Forms tau = tau_r + eta (tau_o - tau_r) with its standard errors and CI.

    sigma^2 = (n h^d)^-1 sum_i {eta xi_o_i + (1 - eta) xi_r_i}^2 and the plain SE is
    {sigma^2 / (n h^d)}^(1/2). The conservative variant adds eta^2 bias^2 to sigma^2
    before the same scaling. The CI uses the SE selected by `config.se_variant`.

    Args:
        base: Base estimates at one point.
        config: Weight method, lambda, ridge exponent and SE variant.
        n: Sample size; defaults to `base.n`.
        h: Bandwidth; defaults to `base.bandwidth`.
    """
    if n is not None or h is not None:
        base = base.model_copy(
            update={
                "n": base.n if n is None else n,
                "bandwidth": base.bandwidth if h is None else tuple(np.atleast_1d(h).astype(float).tolist()),
            }
        )
    weight = estimate_weight(base, config)
    return combine_with_weight(base, weight.eta, config.se_variant, degenerate=weight.degenerate)


def combine_with_weight(
    base: BaseEstimate, eta: float, se_variant: str = "plain", degenerate: bool = False
) -> CombinedEstimate:
    """The combination at a given weight; eta = 0 reproduces tau_r exactly."""
    unpenalized = eta_unpenalized(base)
    bias = base.bias_estimate
    tau = base.tau_r + eta * bias
    scale = base.scale
    sigma2 = float(np.sum(np.square(eta * base.xi_o + (1.0 - eta) * base.xi_r))) / scale
    se_plain, se_conservative = _standard_errors(sigma2, eta, bias, scale)
    se = se_plain if se_variant == "plain" else se_conservative
    return CombinedEstimate(
        v=base.v,
        tau_r=base.tau_r,
        tau_o=base.tau_o,
        eta=eta,
        tau=tau,
        se_plain=se_plain,
        se_conservative=se_conservative,
        ci_low=tau - Z_975 * se,
        ci_high=tau + Z_975 * se,
        eta_unpenalized=unpenalized.eta,
        bias_estimate=bias,
        degenerate=degenerate,
    )


# --- Vectorised over evaluation points ---

def point_weights(summaries: PointSummaries, config: CombinerConfig) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Weights at every point of `summaries`.

    Returns:
        (eta, eta_unpenalized, degenerate) arrays.
    """
    s = summaries.cross
    gram = summaries.gram
    bias = summaries.bias_estimate
    if config.method == "lasso":
        numerator = soft_threshold(s, config.lambda_ * bias ** 2 / 2.0)
        denominator = gram
    elif config.method == "ridge":
        hd = float(np.prod(summaries.bandwidth))
        numerator = s
        denominator = gram + summaries.n ** (2.0 * (1.0 - config.beta_exponent)) * hd ** 2 * bias ** 2
    else:
        numerator, denominator = s, gram
    with np.errstate(invalid="ignore", divide="ignore"):
        degenerate = denominator == 0.0
        eta = np.where(degenerate, 0.0, numerator / np.where(degenerate, 1.0, denominator))
        unpenalized = np.where(gram == 0.0, 0.0, s / np.where(gram == 0.0, 1.0, gram))
    return eta, unpenalized, degenerate


def _combine_with(
    summaries: PointSummaries,
    eta: np.ndarray,
    unpenalized: np.ndarray,
    degenerate: np.ndarray,
    se_variant: str,
) -> List[CombinedEstimate]:
    scale = summaries.scale
    bias = summaries.bias_estimate
    tau = summaries.tau_r + eta * bias
    sigma2 = (np.square(1.0 - eta) * summaries.ss_r + np.square(eta) * summaries.ss_o) / scale
    se_plain = np.sqrt(sigma2 / scale)
    se_conservative = np.sqrt((sigma2 + np.square(eta * bias)) / scale)
    se = se_plain if se_variant == "plain" else se_conservative
    return [
        CombinedEstimate(
            v=tuple(summaries.points[i].tolist()),
            tau_r=float(summaries.tau_r[i]),
            tau_o=float(summaries.tau_o[i]),
            eta=float(eta[i]),
            tau=float(tau[i]),
            se_plain=float(se_plain[i]),
            se_conservative=float(se_conservative[i]),
            ci_low=float(tau[i] - Z_975 * se[i]),
            ci_high=float(tau[i] + Z_975 * se[i]),
            eta_unpenalized=float(unpenalized[i]),
            bias_estimate=float(bias[i]),
            degenerate=bool(degenerate[i]),
        )
        for i in range(len(summaries))
    ]


def combine_points(summaries: PointSummaries, config: CombinerConfig) -> List[CombinedEstimate]:
    """`combine` at every point, using the sums of squares held by `summaries`."""
    eta, unpenalized, degenerate = point_weights(summaries, config)
    return _combine_with(summaries, eta, unpenalized, degenerate, config.se_variant)


def combine_fixed(summaries: PointSummaries, eta: float, se_variant: str = "plain") -> List[CombinedEstimate]:
    """
    The combination at a fixed weight: eta = 0 is the trial estimator and eta = 1
    the OS estimator.
    """
    _, unpenalized, _ = point_weights(summaries, CombinerConfig(method="unpenalized"))
    k = len(summaries)
    return _combine_with(summaries, np.full(k, float(eta)), unpenalized, np.zeros(k, dtype=bool), se_variant)
