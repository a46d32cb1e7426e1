import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)
from pydantic_settings import BaseSettings

from app.core.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SCHEMES = ("marl", "dqn", "iql", "lru")


class Settings(BaseSettings):
    # Service Settings
    PROJECT_NAME: str = "F-RAN Cooperative Caching Simulator"

    # Output
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "results")

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    @field_validator("LOG_LEVEL", mode="before")
    def normalize_level(cls, v: Any) -> Any:
        return v.upper() if isinstance(v, str) else v

    model_config = {
        "case_sensitive": True,
        "env_file": ".env",
        "extra": "ignore",  # Allow extra fields
    }


settings = Settings()


class SimConfig(BaseModel):
    """Full parameterization of one seeded experiment.

    Defaults describe the desk-scale scenario (N=3, F=50, S=5, 15 users per
    F-AP). Radio defaults keep Z1 < Z2 << Z3 at median geometry.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    # Network and workload
    n_faps: int = Field(3, gt=0)
    users_per_fap: int = Field(15, ge=1)
    library_size: int = Field(50, gt=0)
    cache_capacity: int = Field(5, gt=0)
    horizon: int = Field(5000, gt=0)
    cell_radius: float = Field(100.0, gt=0)
    user_mobility: bool = True
    connectivity: Literal["full", "ring", "none", "knn"] = "full"
    knn_k: int = Field(2, ge=1)
    connectivity_matrix: Optional[List[List[int]]] = None

    # Preferences
    tau: float = Field(1.1, gt=0)
    tau_schedule: Optional[List[Tuple[int, float]]] = None
    consistent_preference: bool = True
    preference_jitter: Optional[float] = Field(None, ge=0)
    popularity_aggregation: Literal["mean", "sum"] = "mean"

    # Learning
    lam: float = Field(1.0, alias="lambda")
    gamma: float = 0.9
    alpha: float = Field(0.001, gt=0)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_end: float = Field(0.05, ge=0, le=1)
    epsilon_anneal_fraction: float = Field(0.5, gt=0, le=1)
    nu: int = Field(100, gt=0)
    sync_on: Literal["step", "slot"] = "step"
    replay_capacity: int = Field(10_000, gt=0)
    batch_size: int = Field(32, gt=0)
    hidden_layers: List[int] = Field(default_factory=lambda: [64, 64])
    grad_clip: Optional[float] = Field(1.0, gt=0)
    reward_time_unit: float = Field(1e-3, gt=0)
    observation_aggregation: Literal["mean", "sum"] = "mean"
    target_state: Literal["current", "next"] = "next"
    parallel_agents: bool = False
    iql_table_cap: int = Field(1_000_000, gt=0)
    iql_learning_rate: float = Field(0.1, gt=0, le=1)

    # Radio
    bandwidth: float = Field(1e8, gt=0)
    tx_power: float = Field(1.0, gt=0)
    noise_psd: float = Field(4e-21, gt=0)
    interference_power: float = Field(1e-12, gt=0)
    pathloss_exponent: float = Field(3.0, gt=0)
    pathloss_mode: Literal["power_law", "literal"] = "power_law"
    file_size: float = Field(1e6, gt=0)
    backhaul_rate: float = Field(1e8, gt=0)
    inter_fap_rate: float = Field(1e9, gt=0)
    rate_floor: float = Field(1e3, gt=0)
    coop_delay_mode: Literal["literal", "harmonic"] = "literal"

    # Harness
    seed: int = Field(42, ge=0)
    schemes: List[str] = Field(default_factory=lambda: list(SCHEMES))
    record_every: int = Field(1, gt=0)
    capacities: List[int] = Field(default_factory=lambda: [2, 4, 8, 16])

    @field_validator("lam")
    def check_lambda(cls, v: float) -> float:
        if not 0 < v <= 1:
            raise ValueError("lambda must satisfy 0 < lambda <= 1")
        return v

    @field_validator("gamma")
    def check_gamma(cls, v: float) -> float:
        if not 0 <= v < 1:
            raise ValueError("gamma must satisfy 0 <= gamma < 1")
        return v

    @field_validator("schemes")
    def check_schemes(cls, v: List[str]) -> List[str]:
        unknown = [s for s in v if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes {unknown}; allowed: {list(SCHEMES)}")
        if not v:
            raise ValueError("at least one scheme is required")
        # Keep first occurrence order, drop repeats
        return list(dict.fromkeys(v))

    @field_validator("hidden_layers")
    def check_hidden(cls, v: List[int]) -> List[int]:
        if any(h <= 0 for h in v):
            raise ValueError("hidden layer sizes must be positive")
        return v

    @field_validator("tau_schedule")
    def check_tau_schedule(
        cls, v: Optional[List[Tuple[int, float]]]
    ) -> Optional[List[Tuple[int, float]]]:
        if v is None:
            return v
        if not v:
            raise ValueError("tau_schedule must not be empty when given")
        starts = [start for start, _ in v]
        if starts != sorted(starts) or starts[0] > 1:
            raise ValueError("tau_schedule starts must be ascending and begin at slot <= 1")
        if any(tau <= 0 for _, tau in v):
            raise ValueError("tau_schedule values must be positive")
        return v

    @model_validator(mode="after")
    def check_consistency(self) -> "SimConfig":
        if self.cache_capacity > self.library_size:
            raise ValueError(
                f"cache_capacity ({self.cache_capacity}) must not exceed "
                f"library_size ({self.library_size})"
            )
        if self.connectivity_matrix is not None:
            rows = self.connectivity_matrix
            if len(rows) != self.n_faps or any(len(r) != self.n_faps for r in rows):
                raise ValueError(
                    f"connectivity_matrix must be {self.n_faps}x{self.n_faps}"
                )
        if "capacities" in self.model_fields_set and any(
            c > self.library_size or c <= 0 for c in self.capacities
        ):
            raise ValueError("capacities must lie in [1, library_size]")
        return self

    def tau_at(self, t: int) -> float:
        """Skewness in force at slot ``t`` (piecewise constant schedule)."""
        if not self.tau_schedule:
            return self.tau
        current = self.tau_schedule[0][1]
        for start, value in self.tau_schedule:
            if start <= t:
                current = value
        return current

    def epsilon_at(self, t: int) -> float:
        """Linear anneal from epsilon_start to epsilon_end, then constant."""
        anneal_slots = max(1, int(self.horizon * self.epsilon_anneal_fraction))
        frac = min(1.0, max(0, t - 1) / anneal_slots)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def to_dict(self, exclude_unset: bool = False) -> Dict[str, Any]:
        """Alias-keyed plain dict; ``exclude_unset`` keeps only explicitly given keys."""
        return self.model_dump(by_alias=True, mode="json", exclude_unset=exclude_unset)


def _format_errors(exc: ValidationError) -> List[str]:
    errors = []
    for err in exc.errors():
        key = ".".join(str(p) for p in err["loc"]) or "<config>"
        errors.append(f"{key}: {err['msg']}")
    return errors


def parse_config(raw: Optional[Mapping[str, Any]], **overrides: Any) -> SimConfig:
    """
    Validate a raw mapping into a SimConfig.

    Args:
        raw: Parsed config file contents (``None`` means all defaults)
        overrides: Values that win over the file (e.g. CLI flags); ``None`` skipped

    Returns:
        SimConfig: The validated configuration

    Raises:
        ConfigurationError: With one ``key: message`` entry per failure
    """
    if raw is not None and not isinstance(raw, Mapping):
        raise ConfigurationError("config root must be a mapping of keys to values")
    data: Dict[str, Any] = dict(raw or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SimConfig.model_validate(data)
    except ValidationError as e:
        errors = _format_errors(e)
        raise ConfigurationError("; ".join(errors), errors) from e


def read_config_file(path: Union[str, Path]) -> Optional[Mapping[str, Any]]:
    """Read a YAML config file without validating it."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "r") as f:
            return yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"could not parse {path}: {e}") from e


def load_config(path: Optional[Union[str, Path]], **overrides: Any) -> SimConfig:
    """
    Load and validate a YAML experiment config.

    Args:
        path: Path to the YAML file, or None for the documented defaults
        overrides: Values that win over the file

    Returns:
        SimConfig: The validated configuration
    """
    raw = read_config_file(path) if path is not None else None
    config = parse_config(raw, **overrides)
    logger.debug(f"Loaded config from {path or '<defaults>'}")
    return config


def dump_config(config: SimConfig, path: Union[str, Path]) -> Path:
    """Write the fully resolved config next to the run outputs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True)
    return path
