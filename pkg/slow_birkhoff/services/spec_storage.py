"""
Function Spec Storage
Saves and loads constructed functions as versioned JSON documents: the f0
description, the tower list and the stage schedule. Everything needed to
rebuild f = f0 * 1_C exactly.
"""
import json
import logging
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from slow_birkhoff.services.step_functions import Region, StepFunction, parse_f0
from slow_birkhoff.services.towers import tower_from_record, tower_region
from slow_birkhoff.utils.config import McSettings, PieceConfig
from slow_birkhoff.utils.errors import MalformedSpec, SlowBirkhoffError
from slow_birkhoff.utils.rationals import format_rational, parse_rational

logger = logging.getLogger(__name__)

SPEC_VERSION = "1.0"
SPEC_FILE = "function_spec.json"


class TowerRecord(BaseModel):
    """Serialized tower: base width d as "num/2^exp", height, rank floor, dimension."""

    model_config = ConfigDict(extra="forbid")

    d: str
    height: int = Field(ge=1)
    rank_floor: int = Field(ge=0)
    dimension: int = Field(default=1, ge=1)


class ScheduleEntry(BaseModel):
    """One stage of the schedule: scale N_k, deviation a_k and delta_k."""

    model_config = ConfigDict(extra="forbid")

    k: int = Field(ge=1)
    N: int = Field(ge=1)
    a: str
    delta: str

    @field_validator("a", "delta")
    @classmethod
    def validate_rational(cls, v):
        if parse_rational(v) <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v

    @property
    def deviation(self) -> Fraction:
        return parse_rational(self.a)

    @property
    def delta_value(self) -> Fraction:
        return parse_rational(self.delta)


class FunctionSpec(BaseModel):
    """A constructed function f = f0 * 1_C, C the complement of the towers."""

    model_config = ConfigDict(extra="forbid")

    version: str = SPEC_VERSION
    dimension: int = Field(default=1, ge=1)
    f0: Union[str, List[PieceConfig]]
    towers: List[TowerRecord] = Field(default_factory=list)
    schedule: List[ScheduleEntry] = Field(default_factory=list)
    budget: Optional[str] = None
    mc: Optional[McSettings] = None
    exact_threshold: Optional[int] = Field(default=None, ge=0)
    stages: List[Dict[str, Any]] = Field(default_factory=list)

    @field_validator("version")
    @classmethod
    def validate_version(cls, v):
        if v != SPEC_VERSION:
            raise ValueError(f"unsupported spec version {v!r}, expected {SPEC_VERSION!r}")
        return v

    def build_f0(self) -> StepFunction:
        return parse_f0(self.f0, self.dimension)

    def build_towers(self) -> list:
        towers = []
        for record in self.towers:
            if record.dimension != self.dimension:
                raise ValueError(f"tower of dimension {record.dimension} in a {self.dimension}-dimensional spec")
            towers.append(tower_from_record(record.model_dump()))
        return towers

    def build(self) -> Tuple[StepFunction, Region]:
        """Rebuild (f, C).

        Raises:
            MalformedSpec: if f0 or a tower record is invalid
        """
        try:
            f0 = self.build_f0()
            removed = Region.empty(self.dimension)
            for tower in self.build_towers():
                removed = removed.union(tower_region(tower))
        except SlowBirkhoffError:
            raise
        except (ValueError, TypeError) as e:
            raise MalformedSpec(f"Invalid function spec: {e}") from e
        complement = removed.complement()
        return f0.restrict(complement), complement

    @property
    def schedule_rows(self) -> List[Tuple[int, int, Fraction, Fraction]]:
        return [(s.k, s.N, s.deviation, s.delta_value) for s in self.schedule]


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """Write via a temporary file in the same directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class SpecStorage:
    """Manages function spec files."""

    def __init__(self, storage_file: Union[str, Path] = SPEC_FILE):
        """Initialize spec storage.

        Args:
            storage_file: Path to the JSON file holding the spec
        """
        self.storage_file = Path(storage_file)

    def load_spec(self) -> FunctionSpec:
        """Load the spec from its JSON file.

        Returns:
            The validated FunctionSpec

        Raises:
            MalformedSpec: if the file is missing, truncated or invalid
        """
        try:
            with open(self.storage_file, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except (json.JSONDecodeError, OSError, UnicodeDecodeError) as e:
            raise MalformedSpec(f"Could not load function spec {self.storage_file}: {e}") from e
        try:
            spec = FunctionSpec.model_validate(raw)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in e.errors()
            )
            raise MalformedSpec(f"Invalid function spec {self.storage_file}: {problems}") from e
        logger.info(f"Loaded function spec {self.storage_file}: {len(spec.towers)} tower(s)")
        return spec

    def save_spec(self, spec: FunctionSpec):
        """Save the spec to its JSON file."""
        text = json.dumps(spec.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"
        try:
            atomic_write_text(self.storage_file, text)
        except OSError as e:
            raise SlowBirkhoffError(f"Failed to save function spec: {e}") from e
        logger.info(f"Saved function spec to {self.storage_file}")


def schedule_entry(k: int, N: int, a: Fraction, delta: Fraction) -> ScheduleEntry:
    return ScheduleEntry(k=k, N=N, a=format_rational(a), delta=format_rational(delta))
