"""
Run configuration.

Defaults can be overridden from the environment (or a `.env` file) with the
`CATE_FUSION_` prefix, e.g. `CATE_FUSION_METHOD=ridge`; explicit keyword or CLI
values take precedence over the environment.
"""

import os
from typing import Any, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .exceptions import ConfigurationError
from .models import CombinerConfig, Link, Method, OutcomeDesign, Scenario, SeVariant, ThresholdRule


ENV_PREFIX = "CATE_FUSION_"


class Settings(BaseModel):
    """Every tunable of an estimation or simulation run."""
    target_z: int = Field(1, ge=0, le=1, description="Target population: 0 = trial, 1 = OS.")
    reduction: str = Field("pct:0", description="col:<i>, pct:<i> or pct-score.")
    outcome_link: Link = "identity"
    outcome_design: OutcomeDesign = "pooled_arms"
    method: Method = "lasso"
    train_frac: float = Field(0.2, gt=0, lt=1)
    grid_size: int = Field(25, ge=1)
    epsilon: float = Field(1e-3, gt=0, lt=1)
    bandwidth: Optional[float] = Field(None, gt=0, description="None selects the rule of thumb.")
    beta_exponent: float = Field(0.25, gt=0, lt=0.5)
    se_variant: SeVariant = "plain"
    threshold_rule: ThresholdRule = "exact"
    eval_points: int = Field(50, ge=1)
    refit_full: bool = False
    seed: int = 0
    threads: Optional[int] = None
    n_valid: int = Field(20000, ge=100)
    scenario: Scenario = "correct"
    reps: int = Field(200, ge=1)

    model_config = ConfigDict(frozen=True, extra="forbid")

    @classmethod
    def create(cls, **values: Any) -> "Settings":
        """Validates `values`, translating pydantic errors into ConfigurationError."""
        try:
            return cls(**values)
        except ValidationError as e:
            raise ConfigurationError(describe_validation_error(e)) from e

    @classmethod
    def from_env(cls, prefix: str = ENV_PREFIX, env_file: Optional[str] = None) -> "Settings":
        """
        Reads defaults from `<prefix><FIELD>` environment variables.

        Args:
            prefix: Variable name prefix.
            env_file: Optional `.env` path; by default python-dotenv searches upward
                      from the working directory. Existing variables are not overridden.

        Returns:
            A validated Settings object.
        """
        load_dotenv(env_file, override=False)
        values = {}
        for name in cls.model_fields:
            raw = os.environ.get(prefix + name.upper())
            if raw is None or raw == "":
                continue
            values[name] = None if raw.lower() in ("auto", "none") else raw
        return cls.create(**values)

    def merged(self, **overrides: Any) -> "Settings":
        """Returns a copy with every non-None override applied and re-validated."""
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return Settings.create(**values)

    def combiner(self, lambda_: float = 0.0) -> CombinerConfig:
        return CombinerConfig(
            method=self.method,
            lambda_=lambda_,
            beta_exponent=self.beta_exponent,
            se_variant=self.se_variant,
        )


def describe_validation_error(error: ValidationError) -> str:
    """One line `field: message; ...` for a pydantic ValidationError."""
    parts = []
    for item in error.errors():
        field = ".".join(str(loc) for loc in item["loc"]) or "settings"
        parts.append(f"{field}: {item['msg']}")
    return "; ".join(parts)
