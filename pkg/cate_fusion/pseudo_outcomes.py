"""
Doubly-robust pseudo-outcomes for the trial and the observational study.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import apply_reduction
from .models import FittedNuisances, OutcomeModel, PseudoOutcomePanel, ReductionSpec, StudyDataset
from .nuisance import odds_weight, predict_mean, predict_probability

logger = logging.getLogger(__name__)


def dr_pseudo_outcome(t, y, p1, mu1, mu0):
    """
    (T - p1) / {p1 (1 - p1)} * (Y - mu_T) + mu1 - mu0.

    Works elementwise on scalars or arrays; the untreated propensity is 1 - p1.
    """
    t = np.asarray(t, dtype=float)
    mu_t = np.where(t == 1, mu1, mu0)
    return (t - p1) / (p1 * (1.0 - p1)) * (np.asarray(y, dtype=float) - mu_t) + mu1 - mu0


def _study_pseudo_outcomes(
    x: np.ndarray, t: np.ndarray, y: np.ndarray, ps, outcome: OutcomeModel
) -> np.ndarray:
    if x.shape[0] == 0:
        return np.empty(0)
    p1 = predict_probability(ps, x)
    mu1 = predict_mean(outcome, x, 1)
    mu0 = predict_mean(outcome, x, 0)
    return dr_pseudo_outcome(t, y, p1, mu1, mu0)


def compute_pseudo_outcomes(
    data: StudyDataset,
    nuisances: FittedNuisances,
    reduction: ReductionSpec,
    reference: Optional[StudyDataset] = None,
) -> PseudoOutcomePanel:
    """
    Builds the per-record pseudo-outcome panel.

    Trial records get psi_r from the trial propensity and outcome models, OS records
    get psi_o from the OS models; the other column is NaN. Every record gets the odds
    weight and its reduced covariate V.

    Args:
        data: Records to transform (training or validation part).
        nuisances: Working models fitted on the same part.
        reduction: Covariate reduction; percentile kinds use `reference` or the
                   reference values stored on the reduction.
        reference: Optional reference sample for percentile reductions.
    """
    trial = data.z == 0
    psi_r = np.full(data.n, np.nan)
    psi_o = np.full(data.n, np.nan)
    psi_r[trial] = _study_pseudo_outcomes(
        data.x[trial], data.t[trial], data.y[trial], nuisances.ps_trial, nuisances.outcome_trial
    )
    psi_o[~trial] = _study_pseudo_outcomes(
        data.x[~trial], data.t[~trial], data.y[~trial], nuisances.ps_os, nuisances.outcome_os
    )
    omega = np.asarray(odds_weight(nuisances.participation, data.x), dtype=float).reshape(-1)
    v = apply_reduction(reduction, data, reference)
    logger.debug("Pseudo-outcomes: %d trial, %d OS records", int(trial.sum()), int((~trial).sum()))
    return PseudoOutcomePanel(z=data.z.copy(), v=v, psi_r=psi_r, psi_o=psi_o, omega=omega)


def write_panel_csv(panel: PseudoOutcomePanel, path: Union[str, Path]) -> None:
    """Audit export with columns z, v (or v1..vd), psi_r, psi_o, omega."""
    panel.to_frame().to_csv(path, index=False)
