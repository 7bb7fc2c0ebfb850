"""
The composed entry point: split, working models, pseudo-outcomes, kernel smoothing,
lambda tuning and the final trial, OS and adaptive estimates.
"""

import logging
from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from .combiner import combine_fixed, combine_points
from .data import (
    apply_reduction,
    fit_reduction,
    fit_score_reduction,
    make_evaluation_grid,
    parse_reduction,
    split_train_validation,
)
from .exceptions import ConfigurationError
from .kernel import resolve_bandwidth, summarize_points
from .models import (
    EvaluationGrid,
    FittedNuisances,
    FusionResult,
    KernelConfig,
    LambdaGrid,
    PointSummaries,
    PseudoOutcomePanel,
    ReductionSpec,
    StudyDataset,
    TuningResult,
)
from .nuisance import fit_all_nuisances
from .pseudo_outcomes import compute_pseudo_outcomes
from .settings import Settings
from .tuning import ValidationProblem, grid_from_summaries, select_lambda

logger = logging.getLogger(__name__)


class StageFit(BaseModel):
    """Nuisances, pseudo-outcomes and bandwidth fitted on one part of the data."""
    data: StudyDataset
    nuisances: FittedNuisances
    panel: PseudoOutcomePanel
    bandwidth: Tuple[float, ...]

    model_config = ConfigDict(frozen=True)


class AdaptiveCateEstimator:
    """
    End-to-end adaptive combination of the trial and OS CATE estimators.

    Fits the working models and pseudo-outcomes on a training part, tunes the lasso
    penalty against a trial-only fit on a validation part, and returns the trial,
    OS and adaptive estimates over an evaluation grid.
    """

    def __init__(self, settings: Optional[Settings] = None, **overrides: Any):
        """
        Initializes the estimator.

        Args:
            settings: Base settings; `Settings()` defaults when omitted.
            **overrides: Individual settings replacing those in `settings`.
        """
        self.settings = (settings or Settings()).merged(**overrides)
        bandwidth = self.settings.bandwidth
        self.kernel_config = KernelConfig(bandwidth=bandwidth)

    @property
    def n_jobs(self) -> int:
        return self.settings.threads if self.settings.threads is not None else -1

    # --- Stages ---

    def prepare_reduction(self, reference: StudyDataset) -> ReductionSpec:
        """Parses the configured reduction and fixes it on the reference sample."""
        spec = parse_reduction(self.settings.reduction)
        if spec.kind == "percentile_of_score":
            return fit_score_reduction(reference, self.settings.outcome_link)
        for c in spec.columns:
            if c >= reference.p:
                raise ConfigurationError(f"Reduction column {c} is out of range for p={reference.p}.")
        return fit_reduction(spec, reference)

    def default_grid(self, reduction: ReductionSpec, reference: StudyDataset) -> EvaluationGrid:
        """Midpoint grid over (0, 1) for percentile reductions, over the reference range otherwise."""
        if reduction.kind != "column":
            return make_evaluation_grid(self.settings.eval_points, d=reduction.d)
        v = apply_reduction(reduction, reference)
        return make_evaluation_grid(
            self.settings.eval_points, d=reduction.d, low=v.min(axis=0), high=v.max(axis=0)
        )

    def fit_stage(self, data: StudyDataset, reduction: ReductionSpec) -> StageFit:
        data.require_both_studies()
        nuisances = fit_all_nuisances(data, self.settings.outcome_link, self.settings.outcome_design)
        panel = compute_pseudo_outcomes(data, nuisances, reduction)
        kernel = self.kernel_config.model_copy(update={"d": panel.d})
        bandwidth = resolve_bandwidth(kernel, panel)
        logger.info("Bandwidth %s on n=%d", ", ".join(f"{h:.4g}" for h in bandwidth), data.n)
        return StageFit(data=data, nuisances=nuisances, panel=panel, bandwidth=bandwidth)

    def summarize(self, stage: StageFit, grid: EvaluationGrid) -> PointSummaries:
        kernel = self.kernel_config.model_copy(update={"d": stage.panel.d})
        return summarize_points(
            stage.panel, self.settings.target_z, grid.points, kernel,
            bandwidth=stage.bandwidth, n_jobs=self.n_jobs,
        )

    def tune(self, train: StageFit, valid: StageFit, summaries: PointSummaries) -> Tuple[LambdaGrid, TuningResult]:
        """Builds the lambda grid from the training fit and selects lambda on the validation part."""
        s = self.settings
        grid = grid_from_summaries(summaries, s.epsilon, s.grid_size, s.threshold_rule)
        problem = ValidationProblem.from_fits(
            train.panel, train.bandwidth, valid.panel, valid.bandwidth, s.target_z,
            kernel=self.kernel_config.model_copy(update={"d": train.panel.d}),
            base_config=s.combiner(),
            n_jobs=self.n_jobs,
        )
        return grid, select_lambda(grid, problem)

    # --- Entry points ---

    def fit(self, data: StudyDataset, grid: Optional[EvaluationGrid] = None) -> FusionResult:
        """Splits `data` by `train_frac` and `seed`, then runs `fit_split`."""
        data.require_both_studies()
        train, valid = split_train_validation(data, self.settings.train_frac, self.settings.seed)
        return self.fit_split(train, valid, grid)

    def fit_split(
        self, train: StudyDataset, valid: StudyDataset, grid: Optional[EvaluationGrid] = None
    ) -> FusionResult:
        """
        Runs the full pipeline on a given training/validation partition.

        Args:
            train: Training part; all reported estimates come from it unless
                   `refit_full` is set.
            valid: Validation part; defines percentile reductions and the
                   trial-only benchmark for lambda selection.
            grid: Evaluation points; defaults to `eval_points` midpoints.

        Returns:
            A FusionResult with trial, OS and adaptive estimates per point.
        """
        s = self.settings
        train.require_both_studies()
        valid.require_both_studies()
        reduction = self.prepare_reduction(valid)
        grid = grid or self.default_grid(reduction, valid)
        if grid.d != reduction.d:
            raise ConfigurationError(f"Evaluation points are {grid.d}-dimensional, V is {reduction.d}-dimensional.")

        train_fit = self.fit_stage(train, reduction)
        summaries = self.summarize(train_fit, grid)

        lambda_grid, tuning = None, None
        selected = 0.0
        if s.method == "lasso":
            valid_fit = self.fit_stage(valid, reduction)
            lambda_grid, tuning = self.tune(train_fit, valid_fit, summaries)
            selected = tuning.selected_lambda

        final = train_fit
        if s.refit_full:
            final = self.fit_stage(train.concat(valid), reduction)
            summaries = self.summarize(final, grid)

        config = s.combiner(selected)
        adaptive = combine_points(summaries, config)
        result = FusionResult(
            target_z=s.target_z,
            reduction=reduction,
            nuisances=final.nuisances,
            bandwidth=final.bandwidth,
            lambda_grid=lambda_grid,
            tuning=tuning,
            selected_lambda=selected,
            trial=combine_fixed(summaries, 0.0, s.se_variant),
            observational=combine_fixed(summaries, 1.0, s.se_variant),
            adaptive=adaptive,
            n_train=final.data.n,
            n0=final.data.n0,
            n1=final.data.n1,
            refit_full=s.refit_full,
            summaries=summaries,
            panel=final.panel,
        )
        zeroed = int(np.sum([est.eta == 0.0 for est in adaptive]))
        logger.info("eta = 0 at %d of %d evaluation points", zeroed, len(adaptive))
        return result

    def describe(self) -> Dict[str, Any]:
        """The resolved configuration, as written to run.json."""
        return self.settings.model_dump(mode="json")
