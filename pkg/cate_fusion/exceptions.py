from typing import Any, List, Optional, Sequence


class CateFusionError(Exception):
    """Base exception class for all cate-fusion errors."""
    def __init__(self, message, code=None):
        super().__init__(message)
        self.message = message
        self.code = code

    def __str__(self):
        if self.code:
            return f"[{self.code}] {self.message}"
        return self.message


class DataFormatError(CateFusionError):
    """Raised when an input file or record set cannot be parsed into a dataset."""
    def __init__(self, message="Malformed input data.", row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message, "data_format")
        self.row = row
        self.column = column


class InsufficientDataError(CateFusionError):
    """Raised when a study stratum is empty or a split cannot keep both studies."""
    def __init__(self, message="Not enough data for this operation.", code="insufficient_data"):
        super().__init__(message, code)


class ConfigurationError(CateFusionError):
    """Raised for invalid settings, reduction specs or CLI values."""
    def __init__(self, message="Invalid configuration.", code="configuration"):
        super().__init__(message, code)


class ConvergenceError(CateFusionError):
    """Raised when IRLS fails to converge. Carries the per-iteration trace."""
    def __init__(self, message="Model fit did not converge.", trace: Optional[Sequence[Any]] = None):
        super().__init__(message, "convergence")
        self.trace: List[Any] = list(trace or [])


class RankDeficiencyError(CateFusionError):
    """Raised when a least squares design is rank deficient."""
    def __init__(self, message="Design matrix is rank deficient.", code="rank_deficient"):
        super().__init__(message, code)


class NuisanceFitError(CateFusionError):
    """Raised when one of the working models fails, tagged with the model name."""
    def __init__(self, model_name: str, cause: Exception):
        message = cause.message if isinstance(cause, CateFusionError) else str(cause)
        super().__init__(f"{model_name}: {message}", "nuisance_fit")
        self.model_name = model_name
        self.cause = cause


class SupportError(CateFusionError):
    """Raised when the kernel density estimate at an evaluation point is below the floor."""
    def __init__(self, v: Any, density: Optional[float] = None):
        message = f"no effective support at v={v}"
        if density is not None:
            message += f" (density {density:.3g})"
        super().__init__(message, "support")
        self.v = v
        self.density = density


class DegenerateBandwidthError(CateFusionError):
    """Raised when the rule-of-thumb bandwidth is asked for a constant V."""
    def __init__(self, message="degenerate V: values are constant.", code="degenerate_v"):
        super().__init__(message, code)


class SimulationError(CateFusionError):
    """Raised when a Monte Carlo run has no usable replications or too many failures."""
    def __init__(self, message="Simulation failed.", code="simulation"):
        super().__init__(message, code)


class ReplicationError(SimulationError):
    """Raised when a single replication fails; carries the replication index."""
    def __init__(self, rep_index: int, cause: Exception):
        super().__init__(f"replication {rep_index}: {cause}", "replication")
        self.rep_index = rep_index
        self.cause = cause
