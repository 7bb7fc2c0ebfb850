# --- Package Version ---
# Read from the installed distribution; source checkouts fall back to 0.0.0.
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("cate-fusion")
except PackageNotFoundError:
    __version__ = "0.0.0"


# --- Main Estimator ---
# Allows for `from cate_fusion import AdaptiveCateEstimator, Settings`
from .estimator import AdaptiveCateEstimator
from .settings import Settings


# --- Custom Exceptions ---
# Allows for `from cate_fusion import CateFusionError, SupportError`
from .exceptions import (
    CateFusionError,
    ConfigurationError,
    ConvergenceError,
    DataFormatError,
    DegenerateBandwidthError,
    InsufficientDataError,
    NuisanceFitError,
    RankDeficiencyError,
    ReplicationError,
    SimulationError,
    SupportError,
)


# --- Data Models ---
# Allows for `from cate_fusion import StudyDataset, CombinedEstimate`
from .models import (
    BaseEstimate,
    CoefficientVector,
    CombinedEstimate,
    CombinerConfig,
    EvaluationGrid,
    FittedNuisances,
    FusionResult,
    KernelConfig,
    LambdaGrid,
    MetricsReport,
    PseudoOutcomePanel,
    ReductionSpec,
    ScenarioConfig,
    StudyDataset,
    TuningResult,
    UnitRecord,
)


# --- Public API ---
# Define what gets imported with `from cate_fusion import *`
__all__ = [
    "AdaptiveCateEstimator",
    "Settings",
    "CateFusionError",
    "ConfigurationError",
    "ConvergenceError",
    "DataFormatError",
    "DegenerateBandwidthError",
    "InsufficientDataError",
    "NuisanceFitError",
    "RankDeficiencyError",
    "ReplicationError",
    "SimulationError",
    "SupportError",
    "BaseEstimate",
    "CoefficientVector",
    "CombinedEstimate",
    "CombinerConfig",
    "EvaluationGrid",
    "FittedNuisances",
    "FusionResult",
    "KernelConfig",
    "LambdaGrid",
    "MetricsReport",
    "PseudoOutcomePanel",
    "ReductionSpec",
    "ScenarioConfig",
    "StudyDataset",
    "TuningResult",
    "UnitRecord",
    "__version__",
]
