from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.stats import norm
from typing_extensions import TypeAlias

from .exceptions import DataFormatError, InsufficientDataError


Link: TypeAlias = Literal["logit", "identity"]
OutcomeDesign: TypeAlias = Literal["pooled_arms", "per_arm"]
ReductionKind: TypeAlias = Literal["column", "percentile", "percentile_of_score"]
Method: TypeAlias = Literal["lasso", "ridge", "unpenalized"]
SeVariant: TypeAlias = Literal["plain", "conservative"]
ThresholdRule: TypeAlias = Literal["exact", "ratio"]
Scenario: TypeAlias = Literal["correct", "misspecified"]
EstimatorName: TypeAlias = Literal["trial", "os", "adaptive"]

Z_975 = float(norm.ppf(0.975))


def _as_float_array(v: Any, ndim: int) -> np.ndarray:
    arr = np.array(v, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# --- Data ---

class UnitRecord(BaseModel):
    """
    One subject from either study: study indicator, treatment, outcome and covariates.
    """
    z: Literal[0, 1] = Field(..., description="Study indicator: 0 = trial, 1 = observational study.")
    t: Literal[0, 1] = Field(..., description="Treatment indicator.")
    y: float = Field(..., description="Outcome; binary outcomes are coded 0/1.")
    x: Tuple[float, ...] = Field(..., description="Covariate vector.")

    model_config = ConfigDict(frozen=True)

    @field_validator("y")
    @classmethod
    def _finite_outcome(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("outcome must be finite")
        return v

    @field_validator("x")
    @classmethod
    def _finite_covariates(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not all(np.isfinite(c) for c in v):
            raise ValueError("covariates must be finite")
        return v


class StudyDataset(BaseModel):
    """
    The pooled trial + observational sample, stored column-wise.

    Arrays are made read-only on construction so a dataset can be shared between
    workers without copying. `latent_x` is only populated by the simulator and holds
    the untransformed covariates.
    """
    z: np.ndarray
    t: np.ndarray
    y: np.ndarray
    x: np.ndarray
    latent_x: Optional[np.ndarray] = None

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("z", "t", mode="before")
    @classmethod
    def _indicator(cls, v: Any) -> np.ndarray:
        arr = np.asarray(v, dtype=float)
        if not np.isin(arr, (0.0, 1.0)).all():
            raise DataFormatError("indicators must be 0 or 1.")
        return arr.astype(np.int8)

    @field_validator("y", mode="before")
    @classmethod
    def _outcome(cls, v: Any) -> np.ndarray:
        return _as_float_array(v, 1)

    @field_validator("x", "latent_x", mode="before")
    @classmethod
    def _matrix(cls, v: Any) -> Optional[np.ndarray]:
        if v is None:
            return None
        return _as_float_array(v, 2)

    @model_validator(mode="after")
    def _check(self) -> "StudyDataset":
        n = self.y.shape[0]
        if self.z.shape != (n,) or self.t.shape != (n,) or self.x.ndim != 2 or self.x.shape[0] != n:
            raise DataFormatError("Column lengths do not match.")
        if not np.isin(self.z, (0, 1)).all():
            raise DataFormatError("z must be 0 or 1.", column="z")
        if not np.isin(self.t, (0, 1)).all():
            raise DataFormatError("t must be 0 or 1.", column="t")
        if not np.isfinite(self.y).all():
            raise DataFormatError("y must be finite.", column="y")
        if not np.isfinite(self.x).all():
            raise DataFormatError("covariates must be finite.", column="x")
        for arr in (self.z, self.t, self.y, self.x, self.latent_x):
            if arr is not None:
                _freeze(arr)
        return self

    @classmethod
    def from_records(cls, records: Sequence[UnitRecord]) -> "StudyDataset":
        """Builds a dataset from row records; all records must share the same p."""
        if not records:
            raise DataFormatError("A dataset needs at least one record.")
        p = len(records[0].x)
        for i, rec in enumerate(records):
            if len(rec.x) != p:
                raise DataFormatError(f"Expected {p} covariates, found {len(rec.x)}.", row=i + 1)
        return cls(
            z=[r.z for r in records],
            t=[r.t for r in records],
            y=[r.y for r in records],
            x=np.array([r.x for r in records], dtype=float).reshape(len(records), p),
        )

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def p(self) -> int:
        return int(self.x.shape[1])

    @property
    def n0(self) -> int:
        return int(np.count_nonzero(self.z == 0))

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.z == 1))

    @property
    def records(self) -> List[UnitRecord]:
        return [
            UnitRecord(z=int(z), t=int(t), y=float(y), x=tuple(float(c) for c in x))
            for z, t, y, x in zip(self.z, self.t, self.y, self.x)
        ]

    def require_both_studies(self) -> None:
        """Raises InsufficientDataError unless both studies have at least one record."""
        if self.n0 < 1 or self.n1 < 1:
            raise InsufficientDataError(
                f"Both studies are required (trial n0={self.n0}, OS n1={self.n1})."
            )

    def subset(self, indices: Any) -> "StudyDataset":
        idx = np.asarray(indices)
        return StudyDataset(
            z=self.z[idx],
            t=self.t[idx],
            y=self.y[idx],
            x=self.x[idx],
            latent_x=None if self.latent_x is None else self.latent_x[idx],
        )

    def concat(self, other: "StudyDataset") -> "StudyDataset":
        if other.p != self.p:
            raise DataFormatError(f"Cannot pool datasets with p={self.p} and p={other.p}.")
        latent = None
        if self.latent_x is not None and other.latent_x is not None:
            latent = np.vstack([self.latent_x, other.latent_x])
        return StudyDataset(
            z=np.concatenate([self.z, other.z]),
            t=np.concatenate([self.t, other.t]),
            y=np.concatenate([self.y, other.y]),
            x=np.vstack([self.x, other.x]),
            latent_x=latent,
        )


class CsvSchema(BaseModel):
    """Maps dataset fields to CSV column names. `x=None` means every `x<k>` column."""
    z: str = "z"
    t: str = "t"
    y: str = "y"
    x: Optional[List[str]] = None


class EvaluationGrid(BaseModel):
    """The set of evaluation points, shape (k, d)."""
    points: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("points", mode="before")
    @classmethod
    def _points(cls, v: Any) -> np.ndarray:
        return _as_float_array(v, 2)

    @model_validator(mode="after")
    def _check(self) -> "EvaluationGrid":
        if self.points.shape[0] == 0:
            raise ValueError("evaluation grid must be nonempty")
        if not np.isfinite(self.points).all():
            raise ValueError("evaluation points must be finite")
        _freeze(self.points)
        return self

    @property
    def d(self) -> int:
        return int(self.points.shape[1])

    def __len__(self) -> int:
        return int(self.points.shape[0])


# --- Nuisance models ---

class CoefficientVector(BaseModel):
    """
    A fitted parametric working model: intercept plus main-effect slopes.

    `design="main_effects_treatment"` appends the treatment indicator as the last
    slope, giving the Y ~ X + T outcome design.
    """
    name: str = ""
    link: Link
    intercept: float
    slopes: Tuple[float, ...] = ()
    design: Literal["main_effects", "main_effects_treatment"] = "main_effects"
    iterations: int = 0
    warning: Optional[str] = Field(None, description="Set when the separation fallback was used.")

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _finite(self) -> "CoefficientVector":
        if not np.isfinite(self.intercept) or not np.isfinite(self.slopes).all():
            raise ValueError(f"{self.name or 'model'} has non-finite coefficients")
        return self

    @property
    def n_covariates(self) -> int:
        extra = 1 if self.design == "main_effects_treatment" else 0
        return len(self.slopes) - extra

    def expand(self, x: Any, t: Any = None) -> np.ndarray:
        """Builds the design rows (without intercept) for covariates `x` and treatment `t`."""
        rows = np.atleast_2d(np.asarray(x, dtype=float))
        if rows.shape[1] != self.n_covariates:
            raise DataFormatError(
                f"{self.name or 'model'} expects {self.n_covariates} covariates, got {rows.shape[1]}."
            )
        if self.design == "main_effects_treatment":
            if t is None:
                raise ValueError("treatment is required for this design")
            treat = np.broadcast_to(np.asarray(t, dtype=float), (rows.shape[0],))
            rows = np.column_stack([rows, treat])
        return rows

    def linear_predictor(self, x: Any, t: Any = None) -> np.ndarray:
        return self.intercept + self.expand(x, t) @ np.asarray(self.slopes, dtype=float)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "link": self.link,
            "intercept": self.intercept,
            "slopes": list(self.slopes),
            "design": self.design,
            "warning": self.warning,
        }


class OutcomeModel(BaseModel):
    """
    Mean-outcome working model for one study.

    `pooled_arms` holds one regression of Y ~ X + T; `per_arm` holds separate
    regressions of Y ~ X among treated and untreated subjects.
    """
    design: OutcomeDesign = "pooled_arms"
    pooled: Optional[CoefficientVector] = None
    treated: Optional[CoefficientVector] = None
    control: Optional[CoefficientVector] = None

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _complete(self) -> "OutcomeModel":
        if self.design == "pooled_arms" and self.pooled is None:
            raise ValueError("pooled_arms outcome model needs the pooled fit")
        if self.design == "per_arm" and (self.treated is None or self.control is None):
            raise ValueError("per_arm outcome model needs both arm fits")
        return self

    @property
    def link(self) -> Link:
        return (self.pooled or self.treated).link

    def to_dict(self) -> Dict[str, Any]:
        if self.design == "pooled_arms":
            return self.pooled.to_dict()
        return {"treated": self.treated.to_dict(), "control": self.control.to_dict()}


class FittedNuisances(BaseModel):
    """The five working models: per-study propensity and outcome, pooled participation."""
    ps_trial: CoefficientVector
    ps_os: CoefficientVector
    outcome_trial: OutcomeModel
    outcome_os: OutcomeModel
    participation: CoefficientVector

    model_config = ConfigDict(frozen=True)

    def to_json(self) -> Dict[str, Any]:
        """Model name -> {link, intercept, slopes}, the exported coefficient layout."""
        return {
            "ps_trial": self.ps_trial.to_dict(),
            "ps_os": self.ps_os.to_dict(),
            "outcome_trial": self.outcome_trial.to_dict(),
            "outcome_os": self.outcome_os.to_dict(),
            "participation": self.participation.to_dict(),
        }

    @property
    def warnings(self) -> List[str]:
        models = [self.ps_trial, self.ps_os, self.participation]
        for outcome in (self.outcome_trial, self.outcome_os):
            models.extend(m for m in (outcome.pooled, outcome.treated, outcome.control) if m is not None)
        return [f"{m.name}: {m.warning}" for m in models if m.warning]


class ReductionSpec(BaseModel):
    """
    Maps covariates x to the low-dimensional V.

    Percentile kinds need reference values, either passed to `apply_reduction` or
    stored here by `fit_reduction`.
    """
    kind: ReductionKind = "percentile"
    columns: Tuple[int, ...] = (0,)
    score_models: Optional[Tuple[CoefficientVector, CoefficientVector]] = Field(
        None, description="(treated, control) outcome fits defining the score."
    )
    reference_values: Optional[Tuple[Tuple[float, ...], ...]] = Field(
        None, description="Sorted reference values, one tuple per output coordinate."
    )

    model_config = ConfigDict(frozen=True)

    @field_validator("columns")
    @classmethod
    def _columns(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if not v:
            raise ValueError("at least one column is required")
        if any(c < 0 for c in v):
            raise ValueError("column indices are 0-based and non-negative")
        return v

    @property
    def d(self) -> int:
        return 1 if self.kind == "percentile_of_score" else len(self.columns)


# --- Pseudo-outcomes and kernel smoothing ---

class PseudoOutcomePanel(BaseModel):
    """
    Per-record doubly-robust pseudo-outcomes.

    `psi_r` is NaN for OS records and `psi_o` is NaN for trial records.
    """
    z: np.ndarray
    v: np.ndarray
    psi_r: np.ndarray
    psi_o: np.ndarray
    omega: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("v", mode="before")
    @classmethod
    def _v(cls, v: Any) -> np.ndarray:
        return _as_float_array(v, 2)

    @model_validator(mode="after")
    def _check(self) -> "PseudoOutcomePanel":
        trial = self.z == 0
        if np.isnan(self.psi_r[trial]).any() or not np.isnan(self.psi_r[~trial]).all():
            raise ValueError("psi_r must be present exactly on trial records")
        if np.isnan(self.psi_o[~trial]).any() or not np.isnan(self.psi_o[trial]).all():
            raise ValueError("psi_o must be present exactly on OS records")
        if not (np.isfinite(self.omega).all() and (self.omega > 0).all()):
            raise ValueError("odds weights must be finite and positive")
        for arr in (self.z, self.v, self.psi_r, self.psi_o, self.omega):
            _freeze(arr)
        return self

    @property
    def n(self) -> int:
        return int(self.z.shape[0])

    @property
    def d(self) -> int:
        return int(self.v.shape[1])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"z": self.z.astype(int)})
        if self.d == 1:
            frame["v"] = self.v[:, 0]
        else:
            for j in range(self.d):
                frame[f"v{j + 1}"] = self.v[:, j]
        frame["psi_r"] = self.psi_r
        frame["psi_o"] = self.psi_o
        frame["omega"] = self.omega
        return frame


class KernelConfig(BaseModel):
    """Gaussian product kernel; `bandwidth=None` selects the rule of thumb."""
    kernel: Literal["gaussian"] = "gaussian"
    bandwidth: Optional[Union[float, Tuple[float, ...]]] = None
    d: int = Field(1, ge=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("bandwidth")
    @classmethod
    def _positive(cls, v):
        if v is None:
            return v
        values = v if isinstance(v, tuple) else (v,)
        if not all(np.isfinite(h) and h > 0 for h in values):
            raise ValueError("bandwidth must be positive")
        return v


class BaseEstimate(BaseModel):
    """
    Trial and OS base estimates at one evaluation point, with plug-in influence
    function values for every record of the panel.
    """
    v: Tuple[float, ...]
    target_z: Literal[0, 1]
    tau_r: float
    tau_o: float
    f_r: float
    f_o: float
    xi_r: np.ndarray
    xi_o: np.ndarray
    bandwidth: Tuple[float, ...]
    n: int

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def bias_estimate(self) -> float:
        return self.tau_o - self.tau_r

    @property
    def cross(self) -> float:
        """s = sum a_i b_i with a = xi_r and b = xi_r - xi_o."""
        return float(np.dot(self.xi_r, self.xi_r - self.xi_o))

    @property
    def gram(self) -> float:
        """B = sum b_i^2."""
        b = self.xi_r - self.xi_o
        return float(np.dot(b, b))

    @property
    def ss_r(self) -> float:
        return float(np.dot(self.xi_r, self.xi_r))

    @property
    def ss_o(self) -> float:
        return float(np.dot(self.xi_o, self.xi_o))

    @property
    def scale(self) -> float:
        """n h^d."""
        return self.n * float(np.prod(self.bandwidth))


class PointSummaries(BaseModel):
    """
    Vectorised base estimates over many points: everything the combiner needs
    without materialising the influence function vectors.

    `ss_r` and `ss_o` are the sums of squared influence function values; since the
    two vectors have disjoint support, s = ss_r and B = ss_r + ss_o.
    `supported` is False where either density fell below the floor.
    """
    points: np.ndarray
    target_z: Literal[0, 1]
    tau_r: np.ndarray
    tau_o: np.ndarray
    f_r: np.ndarray
    f_o: np.ndarray
    ss_r: np.ndarray
    ss_o: np.ndarray
    supported: np.ndarray
    bandwidth: Tuple[float, ...]
    n: int

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def bias_estimate(self) -> np.ndarray:
        return self.tau_o - self.tau_r

    @property
    def cross(self) -> np.ndarray:
        return self.ss_r

    @property
    def gram(self) -> np.ndarray:
        return self.ss_r + self.ss_o

    @property
    def scale(self) -> float:
        return self.n * float(np.prod(self.bandwidth))

    def __len__(self) -> int:
        return int(self.points.shape[0])


# --- Combination ---

class CombinerConfig(BaseModel):
    """How the combination weight is estimated and which SE backs the CI."""
    method: Method = "lasso"
    lambda_: float = Field(0.0, alias="lambda", ge=0)
    beta_exponent: float = Field(0.25, gt=0, lt=0.5)
    se_variant: SeVariant = "plain"

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    @field_validator("lambda_")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("lambda must be finite")
        return v


class WeightEstimate(BaseModel):
    """A combination weight; `degenerate` marks an all-zero regressor."""
    eta: float
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)


class CombinedEstimate(BaseModel):
    """
    The combined estimate at one point.

    `ci_low`/`ci_high` use the configured SE variant; `interval()` gives either.
    """
    v: Tuple[float, ...]
    tau_r: float
    tau_o: float
    eta: float
    tau: float
    se_plain: float
    se_conservative: float
    ci_low: float
    ci_high: float
    eta_unpenalized: float
    bias_estimate: float
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)

    def interval(self, variant: SeVariant = "plain", z_value: float = Z_975) -> Tuple[float, float]:
        se = self.se_plain if variant == "plain" else self.se_conservative
        return self.tau - z_value * se, self.tau + z_value * se


# --- Tuning ---

class LambdaGrid(BaseModel):
    """Candidate lambdas: log-spaced over [eps*lambda_max, lambda_max] plus lambda_max_plus."""
    values: Tuple[float, ...]
    lambda_max: float
    lambda_max_plus: float
    epsilon: float
    grid_size: int
    rule: ThresholdRule = "ratio"
    degenerate: bool = False

    model_config = ConfigDict(frozen=True)


class TuningResult(BaseModel):
    """The validation risk curve and its minimiser (ties go to the smallest lambda)."""
    selected_lambda: float
    selected_index: int
    risk_curve: List[Tuple[float, float]]
    dropped_points: int = 0
    evaluated_points: int = 0

    model_config = ConfigDict(frozen=True)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.risk_curve, columns=["lambda", "risk"])


class FusionResult(BaseModel):
    """
    Everything produced by one end-to-end fit.

    `trial`, `observational` and `adaptive` hold one CombinedEstimate per evaluation
    point; the first two are the combination at eta = 0 and eta = 1.
    """
    target_z: Literal[0, 1]
    reduction: ReductionSpec
    nuisances: FittedNuisances
    bandwidth: Tuple[float, ...]
    lambda_grid: Optional[LambdaGrid] = None
    tuning: Optional[TuningResult] = None
    selected_lambda: float = 0.0
    trial: List[CombinedEstimate]
    observational: List[CombinedEstimate]
    adaptive: List[CombinedEstimate]
    n_train: int
    n0: int
    n1: int
    refit_full: bool = False
    summaries: Optional[PointSummaries] = Field(None, description="Per-point kernel diagnostics of the reported fit.")
    panel: Optional[PseudoOutcomePanel] = Field(None, description="Pseudo-outcomes behind the reported fit.")

    model_config = ConfigDict(frozen=True)

    @property
    def all_eta_zero(self) -> bool:
        return all(est.eta == 0.0 for est in self.adaptive)

    def estimates_frame(self) -> pd.DataFrame:
        rows = []
        for trial, obs, ada in zip(self.trial, self.observational, self.adaptive):
            row = {f"v{j + 1}" if len(ada.v) > 1 else "v": val for j, val in enumerate(ada.v)}
            for prefix, est in (("trial", trial), ("os", obs)):
                row[f"{prefix}_tau"] = est.tau
                row[f"{prefix}_se"] = est.se_plain
                row[f"{prefix}_ci_low"], row[f"{prefix}_ci_high"] = est.interval("plain")
            row.update(
                tau_r=ada.tau_r,
                tau_o=ada.tau_o,
                eta=ada.eta,
                eta_unpenalized=ada.eta_unpenalized,
                tau=ada.tau,
                se_plain=ada.se_plain,
                se_conservative=ada.se_conservative,
                ci_low=ada.ci_low,
                ci_high=ada.ci_high,
            )
            rows.append(row)
        return pd.DataFrame(rows)

    def weights_frame(self) -> pd.DataFrame:
        rows = []
        for est in self.adaptive:
            row = {f"v{j + 1}" if len(est.v) > 1 else "v": val for j, val in enumerate(est.v)}
            row["eta"] = est.eta
            rows.append(row)
        return pd.DataFrame(rows)


# --- Simulation ---

class ScenarioConfig(BaseModel):
    """One Monte Carlo design cell."""
    n: int = Field(1000, ge=100)
    n_valid: int = Field(20000, ge=100)
    scenario: Scenario = "correct"
    replications: int = Field(200, ge=1)
    seed: int = 0
    eval_percentiles: Tuple[float, ...] = (0.05, 0.25, 0.50, 0.75, 0.95)
    integrated_grid_size: int = Field(50, ge=1)
    max_failure_rate: float = Field(0.05, ge=0, le=1)

    model_config = ConfigDict(frozen=True)

    @field_validator("eval_percentiles")
    @classmethod
    def _unit_interval(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if not v or not all(0 < q < 1 for q in v):
            raise ValueError("evaluation percentiles must lie in (0, 1)")
        return v


class ReplicationResult(BaseModel):
    """
    Estimates from one replication. Arrays are indexed [estimator, point] with
    estimators ordered (trial, os, adaptive) and points ordered percentiles first,
    then the integrated grid.
    """
    rep_index: int
    estimates: np.ndarray
    ci_plain: np.ndarray
    ci_conservative: np.ndarray
    eta: np.ndarray
    selected_lambda: float
    all_eta_zero: bool
    n0: int
    n1: int
    risk_curve: List[Tuple[float, float]] = []

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class ReplicationFailure(BaseModel):
    rep_index: int
    error: str


class MetricsRow(BaseModel):
    percentile: Optional[float] = Field(None, description="None marks the integrated row.")
    estimator: EstimatorName
    bias: float
    rmse: float
    coverage_plain: float
    coverage_conservative: float


class MetricsReport(BaseModel):
    """Pointwise and integrated bias, RMSE and CI coverage for the three estimators."""
    scenario: Scenario
    n: int
    replications: int
    failures: int
    rows: List[MetricsRow]
    mean_n0: float
    mean_n1: float
    mean_selected_lambda: float
    all_zero_fraction: float

    def row(self, estimator: EstimatorName, percentile: Optional[float]) -> MetricsRow:
        for r in self.rows:
            if r.estimator == estimator and (
                (percentile is None and r.percentile is None)
                or (percentile is not None and r.percentile is not None and abs(r.percentile - percentile) < 1e-12)
            ):
                return r
        raise KeyError((estimator, percentile))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "scenario": self.scenario,
                    "n": self.n,
                    "percentile": "integrated" if r.percentile is None else f"{r.percentile:g}",
                    "estimator": r.estimator,
                    "bias": r.bias,
                    "rmse": r.rmse,
                    "coverage_plain": r.coverage_plain,
                    "coverage_conservative": r.coverage_conservative,
                }
                for r in self.rows
            ]
        )
