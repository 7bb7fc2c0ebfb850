"""
Locally constant (Nadaraya-Watson) smoothing of the pseudo-outcomes over V.
"""

import logging
from pathlib import Path
from typing import Any, Optional, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.stats import norm

from .exceptions import ConfigurationError, DegenerateBandwidthError, InsufficientDataError, SupportError
from .models import BaseEstimate, KernelConfig, PointSummaries, PseudoOutcomePanel

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-10
ROT_CONSTANT = 1.06
# Kernel cells (points x records) handled per vectorised block.
BLOCK_CELLS = 2_000_000

_LOG_NORM = -0.5 * np.log(2.0 * np.pi)


def kernel_value(config: KernelConfig, u: Any) -> float:
    """Product Gaussian kernel K(u) = prod_j phi(u_j)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (config.d,):
        raise ConfigurationError(f"Kernel argument has shape {u.shape}, expected ({config.d},).")
    return float(np.prod(norm.pdf(u)))


def rule_of_thumb_bandwidth(v_values: Any, m: Optional[int] = None) -> Union[float, np.ndarray]:
    """
    Silverman's rule, h = 1.06 * sd(V) * m^(-1/5), applied per coordinate.

    Args:
        v_values: V values, shape (n,) or (n, d).
        m: Effective sample size; defaults to the number of values.

    Returns:
        A float for one-dimensional input, otherwise an array of d bandwidths.

    Raises:
        InsufficientDataError: If m < 2.
        DegenerateBandwidthError: If any coordinate is constant.
    """
    values = np.asarray(v_values, dtype=float)
    m = values.shape[0] if m is None else int(m)
    if m < 2 or values.shape[0] < 2:
        raise InsufficientDataError("The rule-of-thumb bandwidth needs at least two values.")
    if np.any(np.ptp(values, axis=0) == 0):
        raise DegenerateBandwidthError()
    sd = np.std(values, axis=0, ddof=1)
    h = ROT_CONSTANT * sd * m ** (-0.2)
    return float(h) if values.ndim == 1 else np.atleast_1d(h)


def resolve_bandwidth(config: KernelConfig, panel: PseudoOutcomePanel) -> Tuple[float, ...]:
    """
    One bandwidth per V coordinate, shared by the trial and OS arms.

    An explicit bandwidth in `config` wins; otherwise the rule of thumb is applied
    to the trial records' V with m = n0.
    """
    if config.d != panel.d:
        raise ConfigurationError(f"Kernel is {config.d}-dimensional but V is {panel.d}-dimensional.")
    if config.bandwidth is not None:
        if isinstance(config.bandwidth, tuple):
            if len(config.bandwidth) != panel.d:
                raise ConfigurationError(f"Need {panel.d} bandwidths, got {len(config.bandwidth)}.")
            return tuple(float(h) for h in config.bandwidth)
        return (float(config.bandwidth),) * panel.d
    trial_v = panel.v[panel.z == 0]
    h = rule_of_thumb_bandwidth(trial_v, m=trial_v.shape[0])
    return tuple(float(b) for b in np.atleast_1d(h))


def _arm_weights(panel: PseudoOutcomePanel, target_z: int) -> Tuple[np.ndarray, np.ndarray]:
    """Record weights I(Z=0) w^z and I(Z=1) w^(z-1)."""
    trial = panel.z == 0
    if target_z == 1:
        return np.where(trial, panel.omega, 0.0), np.where(trial, 0.0, 1.0)
    return np.where(trial, 1.0, 0.0), np.where(trial, 0.0, 1.0 / panel.omega)


def _require_both(panel: PseudoOutcomePanel) -> None:
    trial = panel.z == 0
    if not trial.any() or trial.all():
        raise InsufficientDataError("Kernel smoothing needs records from both studies.")


def base_estimates(
    panel: PseudoOutcomePanel,
    target_z: int,
    v: Any,
    config: KernelConfig,
    bandwidth: Optional[Tuple[float, ...]] = None,
) -> BaseEstimate:
    """
    Trial and OS base estimates at one point, with their influence function vectors.

    tau_r(v) = sum_j K_h(V_j - v) I(Z_j=0) w_j^z psi_j / sum_j K_h(V_j - v) I(Z_j=0) w_j^z,
    and tau_o(v) likewise with I(Z_j=1) w_j^(z-1). The influence values are
    K((V_i - v)/h) * weight_i * (psi_i - tau) / f(v), zero off the arm.

    Args:
        panel: Pseudo-outcome panel.
        target_z: Target population, 0 (trial) or 1 (OS).
        v: Evaluation point, scalar or d-vector.
        config: Kernel configuration.
        bandwidth: Pre-resolved bandwidth; resolved from `config` when omitted.

    Raises:
        SupportError: If either density estimate falls below DENSITY_FLOOR.
    """
    _require_both(panel)
    h = np.asarray(bandwidth if bandwidth is not None else resolve_bandwidth(config, panel), dtype=float)
    point = np.atleast_1d(np.asarray(v, dtype=float))
    if point.shape != (panel.d,):
        raise ConfigurationError(f"Evaluation point has shape {point.shape}, expected ({panel.d},).")

    n = panel.n
    scale = n * float(np.prod(h))
    k = np.prod(norm.pdf((panel.v - point) / h), axis=1)
    w_r, w_o = _arm_weights(panel, target_z)
    k_r, k_o = k * w_r, k * w_o
    f_r, f_o = k_r.sum() / scale, k_o.sum() / scale
    for f in (f_r, f_o):
        if not f > DENSITY_FLOOR:
            raise SupportError(tuple(point.tolist()), float(f))

    psi_r = np.nan_to_num(panel.psi_r, nan=0.0)
    psi_o = np.nan_to_num(panel.psi_o, nan=0.0)
    tau_r = float(k_r @ psi_r / k_r.sum())
    tau_o = float(k_o @ psi_o / k_o.sum())
    return BaseEstimate(
        v=tuple(point.tolist()),
        target_z=target_z,
        tau_r=tau_r,
        tau_o=tau_o,
        f_r=float(f_r),
        f_o=float(f_o),
        xi_r=k_r * (psi_r - tau_r) / f_r,
        xi_o=k_o * (psi_o - tau_o) / f_o,
        bandwidth=tuple(float(b) for b in h),
        n=n,
    )


def _summarize_block(
    points: np.ndarray,
    v: np.ndarray,
    h: np.ndarray,
    w_r: np.ndarray,
    w_o: np.ndarray,
    psi_r: np.ndarray,
    psi_o: np.ndarray,
) -> Tuple[np.ndarray, ...]:
    u = (points[:, None, :] - v[None, :, :]) / h
    k = np.exp(-0.5 * np.einsum("ijk,ijk->ij", u, u) + v.shape[1] * _LOG_NORM)
    scale = v.shape[0] * float(np.prod(h))
    out = []
    with np.errstate(invalid="ignore", divide="ignore"):
        for w, psi in ((w_r, psi_r), (w_o, psi_o)):
            kw = k * w
            total = kw.sum(axis=1)
            tau = kw @ psi / total
            f = total / scale
            ss = np.square(kw * (psi[None, :] - tau[:, None])).sum(axis=1) / np.square(f)
            out.extend([tau, f, ss])
    return tuple(out)


def summarize_points(
    panel: PseudoOutcomePanel,
    target_z: int,
    points: Any,
    config: KernelConfig,
    bandwidth: Optional[Tuple[float, ...]] = None,
    strict: bool = True,
    n_jobs: Optional[int] = 1,
) -> PointSummaries:
    """
    Vectorised base estimates over many points.

    Returns tau, f and the sums of squared influence values for both arms without
    keeping the per-record vectors. Blocks of points are evaluated in parallel
    threads when `n_jobs` is not 1.

    Args:
        strict: Raise SupportError at the first point below the density floor.
                When False, such points are kept with `supported=False`.
    """
    _require_both(panel)
    h = np.asarray(bandwidth if bandwidth is not None else resolve_bandwidth(config, panel), dtype=float)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if panel.d == 1 else pts.reshape(1, -1)
    if pts.shape[1] != panel.d:
        raise ConfigurationError(f"Evaluation points are {pts.shape[1]}-dimensional, V is {panel.d}-dimensional.")

    w_r, w_o = _arm_weights(panel, target_z)
    psi_r = np.nan_to_num(panel.psi_r, nan=0.0)
    psi_o = np.nan_to_num(panel.psi_o, nan=0.0)
    block = max(1, BLOCK_CELLS // max(panel.n, 1))
    starts = range(0, pts.shape[0], block)
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_summarize_block)(pts[s : s + block], panel.v, h, w_r, w_o, psi_r, psi_o) for s in starts
    )
    tau_r, f_r, ss_r, tau_o, f_o, ss_o = (np.concatenate(parts) for parts in zip(*blocks))

    supported = (f_r > DENSITY_FLOOR) & (f_o > DENSITY_FLOOR)
    if not supported.all():
        first = int(np.flatnonzero(~supported)[0])
        if strict:
            raise SupportError(tuple(pts[first].tolist()), float(min(f_r[first], f_o[first])))
        logger.debug("%d of %d points below the density floor", int((~supported).sum()), pts.shape[0])

    return PointSummaries(
        points=pts,
        target_z=target_z,
        tau_r=tau_r,
        tau_o=tau_o,
        f_r=f_r,
        f_o=f_o,
        ss_r=ss_r,
        ss_o=ss_o,
        supported=supported,
        bandwidth=tuple(float(b) for b in h),
        n=panel.n,
    )


def diagnostics_frame(summaries: PointSummaries) -> pd.DataFrame:
    """(v, tau_r, tau_o, f_r, f_o) per point."""
    d = summaries.points.shape[1]
    frame = pd.DataFrame(
        {"v" if d == 1 else f"v{j + 1}": summaries.points[:, j] for j in range(d)}
    )
    frame["tau_r"] = summaries.tau_r
    frame["tau_o"] = summaries.tau_o
    frame["f_r"] = summaries.f_r
    frame["f_o"] = summaries.f_o
    return frame


def write_diagnostics_csv(summaries: PointSummaries, path: Union[str, Path]) -> None:
    diagnostics_frame(summaries).to_csv(path, index=False)
