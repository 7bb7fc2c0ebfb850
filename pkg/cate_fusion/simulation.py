"""
Monte Carlo harness: synthetic parallel trial/OS data under a correctly specified
and a misspecified (transformed-covariate) scenario, replications, and metrics.

The true CATE is 0 everywhere in this design, so bias, RMSE and coverage are
computed against 0.
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import ValidationError
from scipy.special import expit
from tqdm.auto import tqdm

from .data import make_evaluation_grid
from .estimator import AdaptiveCateEstimator
from .exceptions import CateFusionError, ReplicationError, SimulationError
from .models import (
    EvaluationGrid,
    MetricsReport,
    MetricsRow,
    ReplicationFailure,
    ReplicationResult,
    ScenarioConfig,
    StudyDataset,
)
from .settings import Settings

logger = logging.getLogger(__name__)

PARTICIPATION_COEF = (2.5, 0.1, 0.1, 0.1, 0.1)
OS_TREATMENT_SLOPES = (-1.0, 0.5, -0.25, -0.1)
OUTCOME_COEF = (210.0, 27.4, 13.7, 13.7, 13.7)
N_COVARIATES = 4
ESTIMATORS = ("trial", "os", "adaptive")

SeedLike = Union[int, np.random.SeedSequence, None]


def transform_covariates(x: np.ndarray) -> np.ndarray:
    """The misspecification transform of the four latent covariates."""
    x1, x2, x3, x4 = (x[:, j] for j in range(N_COVARIATES))
    return np.column_stack(
        [
            np.exp(x1 / 2.0),
            x2 / (1.0 + np.exp(x1)) + 10.0,
            (x1 * x3 / 25.0 + 0.6) ** 3,
            (x2 + x4 + 20.0) ** 2,
        ]
    )


def generate_dataset(n: int, scenario: str = "correct", seed: SeedLike = None) -> StudyDataset:
    """
    Draws n records from the simulation design.

    X ~ N(0, I_4); OS membership Z ~ Bernoulli(expit(2.5 + 0.1 sum(X))); treatment is
    randomised 1:1 in the trial and T ~ Bernoulli(expit(X (-1, .5, -.25, -.1))) in the
    OS; Y = 210 + 27.4 X1 + 13.7 (X2 + X3 + X4) + N(0, 1) regardless of treatment.

    In the misspecified scenario the observed covariates are the transformed ones;
    `latent_x` always holds the untransformed draw.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, N_COVARIATES))
    z = rng.random(n) < expit(PARTICIPATION_COEF[0] + x @ np.asarray(PARTICIPATION_COEF[1:]))
    t = rng.random(n) < expit(z * (x @ np.asarray(OS_TREATMENT_SLOPES)))
    y = OUTCOME_COEF[0] + x @ np.asarray(OUTCOME_COEF[1:]) + rng.standard_normal(n)
    observed = transform_covariates(x) if scenario == "misspecified" else x
    return StudyDataset(z=z.astype(int), t=t.astype(int), y=y, x=observed, latent_x=x)


def replication_seeds(base_seed: int, rep_index: int) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent (train, validation) streams for one replication, derived from the base seed."""
    root = np.random.SeedSequence(entropy=base_seed, spawn_key=(rep_index,))
    train, valid = root.spawn(2)
    return train, valid


def evaluation_grid(config: ScenarioConfig) -> EvaluationGrid:
    """Reporting percentiles followed by the integrated midpoint grid."""
    integrated = make_evaluation_grid(config.integrated_grid_size).points[:, 0]
    return EvaluationGrid(points=np.concatenate([np.asarray(config.eval_percentiles), integrated]))


def run_replication(
    rep_index: int, config: ScenarioConfig, settings: Optional[Settings] = None
) -> ReplicationResult:
    """
    One replication: fresh training and validation draws, full fit and tuning.

    V is the validation-sample percentile of the first observed covariate.

    Raises:
        ReplicationError: Wrapping any estimation failure, with the replication index.
    """
    settings = (settings or Settings()).merged(reduction="pct:0", threads=1, refit_full=False)
    train_seed, valid_seed = replication_seeds(config.seed, rep_index)
    grid = evaluation_grid(config)
    try:
        train = generate_dataset(config.n, config.scenario, train_seed)
        valid = generate_dataset(config.n_valid, config.scenario, valid_seed)
        result = AdaptiveCateEstimator(settings).fit_split(train, valid, grid)
    except (CateFusionError, np.linalg.LinAlgError, ValidationError) as e:
        raise ReplicationError(rep_index, e) from e

    per_estimator = (result.trial, result.observational, result.adaptive)
    estimates = np.array([[est.tau for est in ests] for ests in per_estimator])
    ci_plain = np.array([[est.interval("plain") for est in ests] for ests in per_estimator])
    ci_conservative = np.array([[est.interval("conservative") for est in ests] for ests in per_estimator])
    return ReplicationResult(
        rep_index=rep_index,
        estimates=estimates,
        ci_plain=ci_plain,
        ci_conservative=ci_conservative,
        eta=np.array([est.eta for est in result.adaptive]),
        selected_lambda=result.selected_lambda,
        all_eta_zero=result.all_eta_zero,
        n0=result.n0,
        n1=result.n1,
        risk_curve=result.tuning.risk_curve if result.tuning else [],
    )


def _attempt(rep_index: int, config: ScenarioConfig, settings: Settings):
    try:
        return run_replication(rep_index, config, settings)
    except ReplicationError as e:
        return ReplicationFailure(rep_index=rep_index, error=str(e.cause))


def _covers(ci: np.ndarray, truth: float = 0.0) -> np.ndarray:
    return (ci[..., 0] <= truth) & (truth <= ci[..., 1])


def aggregate_metrics(
    results: Sequence[ReplicationResult],
    config: ScenarioConfig,
    failures: int = 0,
) -> MetricsReport:
    """
    Pointwise and integrated bias, RMSE and coverage against the true CATE of 0.

    Pointwise cells use the reporting percentiles; the integrated row averages
    errors and coverage over the integrated grid.

    Raises:
        SimulationError: If there are no successful replications.
    """
    if not results:
        raise SimulationError("No successful replications to aggregate.")
    estimates = np.stack([r.estimates for r in results])
    plain = _covers(np.stack([r.ci_plain for r in results]))
    conservative = _covers(np.stack([r.ci_conservative for r in results]))
    n_pct = len(config.eval_percentiles)

    rows = []
    for e, name in enumerate(ESTIMATORS):
        for j, pct in enumerate(config.eval_percentiles):
            err = estimates[:, e, j]
            rows.append(
                MetricsRow(
                    percentile=pct,
                    estimator=name,
                    bias=float(err.mean()),
                    rmse=float(np.sqrt(np.mean(err ** 2))),
                    coverage_plain=float(plain[:, e, j].mean()),
                    coverage_conservative=float(conservative[:, e, j].mean()),
                )
            )
        err = estimates[:, e, n_pct:]
        rows.append(
            MetricsRow(
                percentile=None,
                estimator=name,
                bias=float(err.mean()),
                rmse=float(np.sqrt(np.mean(err ** 2))),
                coverage_plain=float(plain[:, e, n_pct:].mean()),
                coverage_conservative=float(conservative[:, e, n_pct:].mean()),
            )
        )
    return MetricsReport(
        scenario=config.scenario,
        n=config.n,
        replications=len(results),
        failures=failures,
        rows=rows,
        mean_n0=float(np.mean([r.n0 for r in results])),
        mean_n1=float(np.mean([r.n1 for r in results])),
        mean_selected_lambda=float(np.mean([r.selected_lambda for r in results])),
        all_zero_fraction=float(np.mean([r.all_eta_zero for r in results])),
    )


def run_simulation(
    config: ScenarioConfig,
    settings: Optional[Settings] = None,
    n_jobs: Optional[int] = None,
    progress: bool = True,
) -> Tuple[MetricsReport, List[ReplicationResult], List[ReplicationFailure]]:
    """
    Runs every replication of `config` in parallel and aggregates the metrics.

    Args:
        config: Design cell (n, n_valid, scenario, replications, seed).
        settings: Estimation settings; the reduction is fixed to `pct:0`.
        n_jobs: joblib worker count; None uses every core.
        progress: Show a tqdm progress bar.

    Returns:
        (report, successful results, failures), results ordered by replication.

    Raises:
        SimulationError: If more than `max_failure_rate` of the replications fail.
    """
    settings = settings or Settings()
    reps = range(config.replications)
    outcomes = Parallel(n_jobs=-1 if n_jobs is None else n_jobs)(
        delayed(_attempt)(i, config, settings)
        for i in tqdm(reps, desc=f"{config.scenario} n={config.n}", disable=not progress)
    )
    results = [o for o in outcomes if isinstance(o, ReplicationResult)]
    failures = [o for o in outcomes if isinstance(o, ReplicationFailure)]
    for failure in failures:
        logger.warning("Replication %d failed: %s", failure.rep_index, failure.error)
    if len(failures) > config.max_failure_rate * config.replications:
        raise SimulationError(
            f"{len(failures)} of {config.replications} replications failed "
            f"(limit {config.max_failure_rate:.0%})."
        )
    report = aggregate_metrics(results, config, failures=len(failures))
    logger.info(
        "%s n=%d: %d replications, %d failures, eta = 0 everywhere in %.1f%%",
        config.scenario, config.n, report.replications, report.failures, 100 * report.all_zero_fraction,
    )
    return report, results, failures


def per_replication_frame(results: Sequence[ReplicationResult], config: ScenarioConfig) -> pd.DataFrame:
    """Long table: rep, point, estimator, estimate, plain and conservative CI, eta."""
    labels = [f"{p:g}" for p in config.eval_percentiles] + [
        f"grid:{v:.4f}" for v in make_evaluation_grid(config.integrated_grid_size).points[:, 0]
    ]
    rows = []
    for r in results:
        for e, name in enumerate(ESTIMATORS):
            for j, label in enumerate(labels):
                rows.append(
                    {
                        "rep": r.rep_index,
                        "point": label,
                        "estimator": name,
                        "estimate": r.estimates[e, j],
                        "ci_low": r.ci_plain[e, j, 0],
                        "ci_high": r.ci_plain[e, j, 1],
                        "ci_low_conservative": r.ci_conservative[e, j, 0],
                        "ci_high_conservative": r.ci_conservative[e, j, 1],
                        "eta": r.eta[j],
                    }
                )
    return pd.DataFrame(rows)


def risk_curves_frame(results: Sequence[ReplicationResult]) -> pd.DataFrame:
    """Every replication's validation risk curve: rep, lambda, risk."""
    rows = [
        {"rep": r.rep_index, "lambda": lam, "risk": risk}
        for r in results
        for lam, risk in r.risk_curve
    ]
    return pd.DataFrame(rows, columns=["rep", "lambda", "risk"])
