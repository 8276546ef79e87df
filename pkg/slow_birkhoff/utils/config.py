"""
Configuration management.
Engine limits, Monte-Carlo settings and the run configuration file format.
"""
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from fractions import Fraction
from pathlib import Path
from typing import Any, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator, model_validator

from slow_birkhoff.utils.errors import ConfigError
from slow_birkhoff.utils.rationals import format_rational, parse_rational

logger = logging.getLogger(__name__)

LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


class EngineSettings(BaseModel):
    """Limits that keep exact computation bounded."""

    # Dyadic arithmetic
    rank_cap: int = Field(default=64, ge=1)

    # Exact deviation sets
    exact_threshold: int = Field(default=4096, ge=0)
    exact_cell_limit: int = Field(default=2 ** 18, ge=1)

    # Search and evaluation budgets
    max_scale: int = Field(default=2 ** 40, ge=2)
    max_lattice_points: int = Field(default=2 ** 24, ge=1)
    height_retries: int = Field(default=3, ge=0)
    interval_limit: int = Field(default=2 ** 20, ge=1)
    trace_max_steps: int = Field(default=10 ** 7, ge=1)

    # Logging
    log_level: str = Field(default="INFO")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level."""
        v = v.upper()
        if v not in LOG_LEVELS:
            raise ValueError(f"Log level must be one of {LOG_LEVELS}")
        return v


class McSettings(BaseModel):
    """Monte-Carlo estimation settings."""

    model_config = ConfigDict(extra="forbid")

    samples: int = Field(default=10000, ge=1)
    seed: int = Field(default=0, ge=0)
    alpha: float = Field(default=0.01, gt=0.0, lt=1.0)
    rank: int = Field(default=53, ge=1, le=60)
    block_size: int = Field(default=4096, ge=1)
    workers: int = Field(default=1, ge=1)


class PieceConfig(BaseModel):
    """One piece of f0: a region given as intervals (n = 1) or boxes, and a value."""

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    value: Fraction
    intervals: List[str] = Field(default_factory=list)
    boxes: List[List[str]] = Field(default_factory=list)

    @field_validator("value", mode="before")
    @classmethod
    def parse_value(cls, v):
        return parse_rational(v)

    @field_serializer("value")
    def serialize_value(self, v):
        return format_rational(v)

    @model_validator(mode="after")
    def check_region(self):
        if bool(self.intervals) == bool(self.boxes):
            raise ValueError("piece must list either intervals or boxes")
        return self


def expand_geometric(text: str) -> List[Fraction]:
    """Expand "geometric:<first>,<ratio>,<count>" into its terms."""
    body = text.strip()
    if not body.startswith("geometric:"):
        raise ValueError(f"expected a list or 'geometric:<first>,<ratio>,<count>', got {text!r}")
    parts = body[len("geometric:"):].split(",")
    if len(parts) != 3:
        raise ValueError(f"geometric schedule needs first, ratio and count: {text!r}")
    first, ratio = parse_rational(parts[0]), parse_rational(parts[1])
    try:
        count = int(parts[2])
    except ValueError as e:
        raise ValueError(f"geometric count must be an integer: {parts[2]!r}") from e
    if count < 0:
        raise ValueError("geometric count must be non-negative")
    return [first * ratio ** i for i in range(count)]


def check_schedule(deviations: List[Fraction], lower_scales: List[int], budget: Fraction) -> None:
    """Check the stage schedule against the measure budget.

    Raises:
        ValueError: naming the violated condition
    """
    if len(deviations) != len(lower_scales):
        raise ValueError(
            f"deviations has {len(deviations)} stages but lower_scales has {len(lower_scales)}"
        )
    if any(a <= 0 for a in deviations):
        raise ValueError("deviations must be positive")
    if any(m < 1 for m in lower_scales):
        raise ValueError("lower_scales must be positive integers")
    if any(b <= a for a, b in zip(lower_scales, lower_scales[1:])):
        raise ValueError("lower_scales must be strictly increasing")
    if not 0 < budget < 1:
        raise ValueError(f"budget must lie in (0, 1), got {format_rational(budget)}")
    removed = sum((2 * a for a in deviations), Fraction(0))
    if removed > budget:
        raise ValueError(
            f"sum of 2*a_k = {format_rational(removed)} exceeds budget {format_rational(budget)}"
        )


class RunConfig(BaseModel):
    """A construction run, as read from a TOML config file."""

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    dimension: int = Field(default=1, ge=1)
    f0: Union[str, List[PieceConfig]] = Field(default="constant:2")
    deviations: List[Fraction] = Field(default_factory=list)
    lower_scales: List[int] = Field(default_factory=list)
    budget: Fraction = Field(default=Fraction(1, 4))
    delta0: Fraction = Field(default=Fraction(1, 10))
    mc: McSettings = Field(default_factory=McSettings)
    precision: int = Field(default=60, ge=1)
    exact_threshold: Optional[int] = Field(default=None, ge=0)
    safety: Fraction = Field(default=Fraction(4))
    out_dir: Optional[str] = Field(default=None)

    @field_validator("f0")
    @classmethod
    def validate_f0(cls, v):
        if isinstance(v, str):
            if not v.startswith("constant:"):
                raise ValueError("f0 must be 'constant:<value>' or a list of pieces")
            if parse_rational(v[len("constant:"):]) < 0:
                raise ValueError("f0 values must be non-negative")
        return v

    @field_validator("deviations", mode="before")
    @classmethod
    def parse_deviations(cls, v):
        if isinstance(v, str):
            return expand_geometric(v)
        return [parse_rational(item) for item in v]

    @field_validator("lower_scales", mode="before")
    @classmethod
    def parse_lower_scales(cls, v):
        terms = expand_geometric(v) if isinstance(v, str) else [parse_rational(item) for item in v]
        if any(t.denominator != 1 for t in terms):
            raise ValueError("lower_scales must be integers")
        return [int(t) for t in terms]

    @field_validator("budget", "delta0", "safety", mode="before")
    @classmethod
    def parse_fraction(cls, v):
        return parse_rational(v)

    @model_validator(mode="after")
    def validate_schedule(self):
        check_schedule(self.deviations, self.lower_scales, self.budget)
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")
        if self.safety < 1:
            raise ValueError("safety must be at least 1")
        return self

    @property
    def stages(self) -> int:
        return len(self.deviations)


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a TOML run configuration.

    Raises:
        ConfigError: with the line/column of a syntax error or the dotted key of a bad value
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    return parse_run_config(raw, source=str(path))


def parse_run_config(raw: Any, source: str = "<config>") -> RunConfig:
    """Validate an already decoded configuration mapping."""
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as e:
        problems = []
        for error in e.errors():
            key = ".".join(str(part) for part in error["loc"]) or "<root>"
            problems.append(f"{key}: {error['msg']}")
        raise ConfigError(f"{source}: " + "; ".join(problems)) from e
    logger.info(f"Loaded run config from {source}: {config.stages} stage(s), dimension {config.dimension}")
    return config


# Global settings instance
_settings: Optional[EngineSettings] = None


def get_settings() -> EngineSettings:
    """Get engine settings (singleton pattern)."""
    global _settings

    if _settings is None:
        _settings = EngineSettings()
        logger.debug(f"Engine settings loaded: {_settings.model_dump()}")

    return _settings


def reload_settings(**overrides: Any) -> EngineSettings:
    """Replace the engine settings (useful for testing)."""
    global _settings
    try:
        _settings = EngineSettings(**overrides)
    except ValidationError as e:
        raise ConfigError(f"Invalid engine settings: {e}") from e
    return _settings
