from typing import List, Literal, Optional
from pathlib import Path
import os
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from models import ModelParams, RelaxationSettings, SweepProtocol
from core.config import settings
from core.errors import ConfigError
from core.lattice import validate

PROTOCOLS = ("relax", "sweep", "scan")

_LOCATION = re.compile(r"at line (\d+), column (\d+)")


class RelaxSection(RelaxationSettings):
    h_ext: float = 0.0
    initial: Literal["vacuum", "kink"] = "vacuum"
    kink_center: Optional[float] = None
    kink_polarity: Literal[1, -1] = 1

    def relaxation(self) -> RelaxationSettings:
        return RelaxationSettings(**self.model_dump(include=set(RelaxationSettings.model_fields)))


class SweepSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    # Omitted h_max triggers the pre-scan for the smallest field reaching target_winding
    h_max: Optional[float] = None
    h_min: Optional[float] = None
    rate: float = Field(default=2.5e-4, gt=0)
    n_cycles: int = Field(default=3, ge=1)
    settle_tau: float = Field(default=0.0, ge=0)
    record_stride: int = Field(default=100, ge=1)
    virgin_direction: Literal["up", "down"] = "up"
    match_tol: float = Field(default=0.1, gt=0)
    target_winding: int = Field(default=7, ge=1)
    h_cap: float = Field(default=50.0, gt=0)

    @model_validator(mode="after")
    def _check_bounds(self) -> "SweepSection":
        if self.h_max is not None:
            h_min = self.h_min if self.h_min is not None else -self.h_max
            if not h_min < self.h_max:
                raise ValueError(f"sweep.h_min ({h_min:g}) must be < sweep.h_max ({self.h_max:g})")
        return self

    def protocol(self, h_max: float) -> SweepProtocol:
        """
        Raises:
            ConfigError: h_min is not below h_max (h_max may come from the pre-scan)
        """
        try:
            return SweepProtocol(
                h_max=h_max,
                h_min=self.h_min if self.h_min is not None else -h_max,
                rate=self.rate,
                n_cycles=self.n_cycles,
                settle_tau=self.settle_tau,
                record_stride=self.record_stride,
                virgin_direction=self.virgin_direction,
            )
        except ValidationError as e:
            raise ConfigError([f"sweep: {message}" for error in e.errors() for message in _describe(error)]) from e


class ScanSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    h_ext: List[float] = Field(min_length=1)
    s_lo: float = Field(gt=0)
    s_hi: float = Field(gt=0)
    tol: float = Field(default=0.02, gt=0)
    max_tau: float = Field(default=5e4, gt=0)
    min_tau: float = Field(default=1e3, ge=0)
    window: int = Field(default=100, ge=1)
    steady_tol: float = Field(default=1e-4, gt=0)
    record_stride: int = Field(default=100, ge=1)

    def relaxation(self) -> RelaxationSettings:
        return RelaxationSettings(
            max_tau=self.max_tau,
            min_tau=self.min_tau,
            window=self.window,
            tol=self.steady_tol,
            record_stride=self.record_stride,
        )


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: str = settings.output_directory
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: [settings.default_format], min_length=1)


def _creatable(directory: str) -> bool:
    path = Path(directory).absolute()
    while not path.exists():
        if path.parent == path:
            return False
        path = path.parent
    return path.is_dir() and os.access(path, os.W_OK)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelParams = Field(default_factory=ModelParams)
    relax: Optional[RelaxSection] = None
    sweep: Optional[SweepSection] = None
    scan: Optional[ScanSection] = None
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_run(self) -> "RunConfig":
        violations = list(validate(self.model))
        present = [name for name in PROTOCOLS if getattr(self, name) is not None]
        if len(present) != 1:
            violations.append(f"exactly one protocol must be given (found {len(present)}: {', '.join(present) or 'none'})")
        if not _creatable(self.output.directory):
            violations.append(f"output directory {self.output.directory!r} cannot be created")
        if violations:
            raise ValueError("; ".join(violations))
        return self

    @property
    def protocol_name(self) -> str:
        return next(name for name in PROTOCOLS if getattr(self, name) is not None)

    def with_overrides(
        self,
        seed: Optional[int] = None,
        out: Optional[str] = None,
        format: Optional[str] = None
    ) -> "RunConfig":
        data = self.model_dump()
        if seed is not None:
            data["model"]["rng_seed"] = seed
        if out is not None:
            data["output"]["directory"] = out
        if format is not None:
            data["output"]["formats"] = [format]
        return build_config(data)


def _describe(error: dict) -> List[str]:
    location = ".".join(str(part) for part in error["loc"])
    if error["type"] == "extra_forbidden":
        return [f"unknown key '{location}'"]
    if error["type"] == "value_error":
        message = error["msg"].removeprefix("Value error, ")
        return message.split("; ")
    return [f"{location}: {error['msg']}" if location else error["msg"]]


def build_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        violations = [message for error in e.errors() for message in _describe(error)]
        raise ConfigError(violations) from e


def parse_config(text: str) -> RunConfig:
    """
    Parse a TOML run configuration ([model], one of [relax]/[sweep]/[scan], [output]).

    Raises:
        ConfigError: syntax error (with line/column) or every validation violation at once
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _LOCATION.search(str(e))
        line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
        raise ConfigError([f"syntax error: {e}"], line=line, column=column) from e
    return build_config(data)


def load_config(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"cannot read {path}: {e}"]) from e
    return parse_config(text)
