import io
import os
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from dotenv.parser import parse_stream
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hermflow import __version__
from hermflow.errors import ConfigError

load_dotenv()  # must run before the os.getenv defaults below

OUTPUT_DIR = os.getenv("HERMFLOW_OUTPUT_DIR", "output_files")
LOG_LEVEL = os.getenv("HERMFLOW_LOG_LEVEL", "INFO")
CFL_FACTOR = float(os.getenv("HERMFLOW_CFL", "0.2"))
POSITIVITY_FLOOR = float(os.getenv("HERMFLOW_POSITIVITY_FLOOR", "1e-6"))
DEFAULT_SEEDS = int(os.getenv("HERMFLOW_DEFAULT_SEEDS", "100"))
DEFAULT_TOL = float(os.getenv("HERMFLOW_DEFAULT_TOL", "1e-9"))

MONITORS = ("anomaly", "torsion_flow", "tsq", "tau", "tau_sq", "singularity")


class InitialSpec(BaseModel):
    """Initial data: flat | kahler_potential | perturbation | balanced | balanced_file."""

    kind: Literal["flat", "kahler_potential", "perturbation", "balanced", "balanced_file"] = "flat"
    amplitude: float = 0.02
    n_modes: int = 2
    eps: float = 0.002
    path: str | None = None

    @model_validator(mode="after")
    def _file_needs_path(self):
        if self.kind == "balanced_file" and not self.path:
            raise ValueError("initial.kind=balanced_file needs initial.path")
        return self


class Tolerances(BaseModel):
    """Acceptance bounds for a flow run; a bound whose monitor or initial data is absent is not judged."""

    anomaly: float = Field(1e-5, gt=0)
    torsion_flow: float = Field(1e-2, gt=0)  # relative to sup|∂_tT|
    kahler_growth: float = Field(5.0, ge=1)  # kahlerRes against its initial value
    balanced_growth: float = Field(1e-6, ge=0)  # final minus initial balancedRes
    flat: float = Field(1e-8, gt=0)  # maxT2 and maxRic on a plateau

    model_config = ConfigDict(extra="forbid")


class FlowConfig(BaseModel):
    which: Literal["eta", "kahler_ricci"] = "eta"
    time_normalization: Literal["unit", "one_over_m_minus_1"] = "unit"
    m: int = Field(2, ge=1, le=6)
    n: int = Field(16, ge=10)
    reduction: str | None = "x1,x2"
    dt: float | Literal["auto"] = "auto"
    steps: int = Field(100, ge=0)
    scheme: Literal["rk4", "euler"] = "rk4"
    stride: int = Field(1, ge=1)
    seed: int = 0
    omega_c: float = 1.0
    initial: InitialSpec = Field(default_factory=InitialSpec)
    monitors: list[str] = Field(default_factory=list)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    cfl: float = Field(default_factory=lambda: CFL_FACTOR, gt=0)
    positivity_floor: float = Field(default_factory=lambda: POSITIVITY_FLOOR, gt=0)
    plateau_window: int = 50
    plateau_tol: float = 1e-10

    model_config = ConfigDict(extra="forbid")

    @field_validator("dt")
    @classmethod
    def _positive_dt(cls, value):
        if value != "auto" and not value > 0:
            raise ValueError("dt must be positive")
        return value

    @field_validator("monitors", mode="before")
    @classmethod
    def _split_monitors(cls, value):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        unknown = set(value) - set(MONITORS)
        if unknown:
            raise ValueError(f"unknown monitor(s) {sorted(unknown)}; choose from {', '.join(MONITORS)}")
        return value

    @field_validator("omega_c")
    @classmethod
    def _nonzero_omega(cls, value):
        if value == 0:
            raise ValueError("omega_c must be nonzero")
        return value

    @model_validator(mode="after")
    def _which_fits_dimension(self):
        if self.m == 1 and self.which != "kahler_ricci":
            raise ValueError("m=1 runs are only defined for which=kahler_ricci")
        if "anomaly" in self.monitors and self.m < 3:
            raise ValueError("rescaling degenerate at m=2: the anomaly monitor needs m >= 3")
        return self

    @property
    def kappa(self) -> float:
        """Time normalization factor in front of the vector field."""
        if self.time_normalization == "unit" or self.m == 1:
            return 1.0
        return 1.0 / (self.m - 1)


class RunManifest(BaseModel):
    """``manifest.json``; holds nothing that changes between identical reruns."""

    command: str
    version: str = __version__
    config_path: str | None = None
    output_dir: str
    seed: int | None = None
    config: dict = Field(default_factory=dict)
    halt_reason: str | None = None
    files: list[str] = Field(default_factory=list)
    summary: dict = Field(default_factory=dict)


def parse_flat(text: str) -> dict:
    """``key = value`` lines into a nested dict; dotted keys nest, ``#`` starts a comment."""
    data: dict = {}
    for binding in parse_stream(io.StringIO(text)):
        lineno = binding.original.line
        if binding.error:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {binding.original.string.strip()!r}")
        if binding.key is None:
            continue
        if binding.value is None:
            raise ConfigError(f"line {lineno}: {binding.key!r} has no value")
        node = data
        *parents, leaf = binding.key.split(".")
        for part in parents:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: {binding.key!r} conflicts with an earlier value")
        value = binding.value
        node[leaf] = None if value.lower() in ("none", "") else value
    return data


def load_flow_config(path: str | Path) -> FlowConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return FlowConfig.model_validate(parse_flat(path.read_text(encoding="utf-8")))
    except ValidationError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
