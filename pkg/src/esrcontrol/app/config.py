"""
Experiment Configuration

TOML experiment files validated into pydantic models. Relative file paths
resolve against the config file's directory and must exist when the file
is parsed.
"""

import hashlib
import json
import logging
import re
import tomllib
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from ..core.errors import ConfigError
from ..core.pulses import ControlPulse, RotationModel
from ..core.spin import EnsembleSpec, PauliState, SpinSystem
from ..spectrometer.readout import GATES, GateSpec, MeasurementModel, VirtualSpectrometer
from ..spectrometer.transfer import TransferFunction, synthesize_transfer
from .optimizers import BasisSpec, OptimizerConfig

logger = logging.getLogger(__name__)


def _resolve_path(v: Optional[Union[str, Path]], info: ValidationInfo) -> Optional[Path]:
    if v is None:
        return None
    path = Path(v)
    base = (info.context or {}).get("base_dir")
    if not path.is_absolute() and base is not None:
        path = Path(base) / path
    if not path.exists():
        raise ValueError(f"file not found: {path}")
    return path


class TransferSpec(BaseModel):
    """Transfer function: flat, synthesized from a FWHM, or read from CSV."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["flat", "measured_like", "lorentzian", "csv"] = "flat"
    fwhm: Optional[float] = Field(None, gt=0)
    path: Optional[Path] = None
    span: float = Field(1000.0, gt=0)
    step: float = Field(0.5, gt=0)

    @field_validator("path", mode="before")
    @classmethod
    def _path(cls, v: Any, info: ValidationInfo) -> Optional[Path]:
        return _resolve_path(v, info)

    @model_validator(mode="after")
    def _complete(self) -> "TransferSpec":
        if self.kind in ("measured_like", "lorentzian") and self.fwhm is None:
            raise ValueError(f"transfer kind {self.kind!r} needs fwhm")
        if self.kind == "csv" and self.path is None:
            raise ValueError("transfer kind 'csv' needs path")
        return self

    def build(self) -> TransferFunction:
        if self.kind == "flat":
            return TransferFunction.flat(self.span, self.step)
        if self.kind == "csv":
            return TransferFunction.from_csv(self.path, fwhm_label=self.fwhm)
        return synthesize_transfer(self.fwhm, self.kind, self.span, self.step)


class PulseSpec(BaseModel):
    """Initial pulse: a low-amplitude square pulse, or a pulse file."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    M: int = Field(100, ge=1)
    dt: float = Field(2.0, gt=0)
    amplitude: float = 5.0
    phase: float = 0.0
    max_amp: Optional[float] = Field(None, gt=0)
    path: Optional[Path] = None

    @field_validator("path", mode="before")
    @classmethod
    def _path(cls, v: Any, info: ValidationInfo) -> Optional[Path]:
        return _resolve_path(v, info)

    def build(self) -> ControlPulse:
        if self.path is not None:
            return ControlPulse.load(self.path)
        return ControlPulse.square(self.M, self.dt, self.amplitude, self.phase, self.max_amp)


class MeasurementSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(0.03, ge=0)
    averages: int = Field(16000, ge=1)


class OptimizerSection(BaseModel):
    """The [optimizer] table; model parameters live in [model] and [design_transfer]."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    method: Literal["grape", "hqca", "fd"] = "hqca"
    basis: BasisSpec = Field(default_factory=BasisSpec)
    grape_basis: Optional[BasisSpec] = None
    rotation: RotationModel = Field(default_factory=RotationModel)
    c0: Optional[float] = Field(None, gt=0)
    max_step: Optional[float] = Field(3.0, gt=0)
    delta_u: Optional[float] = Field(None, gt=0)
    delta_u_probe: float = Field(4.0, gt=0)
    max_iters: int = Field(100, ge=0)
    stop_window: int = Field(5, ge=1)
    stop_threshold: float = 0.01
    stop_mode: Literal["window", "fixed"] = "window"
    repeats: int = Field(5, ge=1)
    experiments_per_measurement: int = Field(1, ge=1)
    first_order: bool = False


def resolve_gate(name: str) -> GateSpec:
    """``gate1``/``gate2``, or a Pauli target reached from ZI with an ideal readout."""
    if name in GATES:
        return GATES[name]
    return GateSpec.expectation(PauliState(label=name).label)


class ExperimentConfig(BaseModel):
    """A complete experiment: true system, model, hardware, task and optimizer."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(0, ge=0, lt=2 ** 64)
    trials: int = Field(1, ge=1)
    threads: int = Field(1, ge=1)
    gate: str = "gate2"
    output_dir: Path = Path("runs")
    system: SpinSystem = Field(default_factory=SpinSystem)
    model: Optional[SpinSystem] = None
    ensemble: EnsembleSpec = Field(default_factory=EnsembleSpec)
    transfer: TransferSpec = Field(default_factory=TransferSpec)
    design_transfer: Optional[TransferSpec] = None
    measurement: MeasurementSpec = Field(default_factory=MeasurementSpec)
    pulse: PulseSpec = Field(default_factory=PulseSpec)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)

    @field_validator("gate")
    @classmethod
    def _gate(cls, v: str) -> str:
        try:
            resolve_gate(v)
        except ValidationError:
            raise ValueError(f"unknown gate {v!r}; use gate1, gate2 or a Pauli string such as YI") from None
        return v

    @property
    def gate_spec(self) -> GateSpec:
        return resolve_gate(self.gate)

    def spectrometer(self, seed: Optional[int] = None) -> VirtualSpectrometer:
        """The true system behind the configured transfer function and noise."""
        return VirtualSpectrometer(
            system=self.system,
            ensemble=self.ensemble,
            transfer=self.transfer.build(),
            measurement=MeasurementModel(
                sigma=self.measurement.sigma,
                seed=self.seed if seed is None else seed,
                averages=self.measurement.averages,
            ),
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            **self.optimizer.model_dump(exclude={"basis", "grape_basis", "rotation"}),
            basis=self.optimizer.basis,
            grape_basis=self.optimizer.grape_basis,
            rotation=self.optimizer.rotation,
            model_system=self.model,
            design_transfer=self.design_transfer.build() if self.design_transfer else None,
        )

    def initial_pulse(self) -> ControlPulse:
        return self.pulse.build()


def config_hash(cfg: ExperimentConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON config (output_dir excluded)."""
    payload = cfg.model_dump(mode="json", exclude={"output_dir"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


_KEY_LINE = re.compile(r"^\s*(?P<key>[A-Za-z0-9_\-]+)\s*=")
_TABLE_LINE = re.compile(r"^\s*\[(?P<table>[^\]]+)\]\s*$")


def _field_line(text: str, loc: tuple) -> Optional[int]:
    """Best-effort line of a dotted field path in TOML source."""
    keys = [str(k) for k in loc if not isinstance(k, int)]
    if not keys:
        return None
    table, key = ".".join(keys[:-1]), keys[-1]
    current = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _TABLE_LINE.match(line)
        if m:
            current = m.group("table").strip()
            if current == ".".join(keys):
                return lineno
            continue
        m = _KEY_LINE.match(line)
        if m and m.group("key") == key and current == table:
            return lineno
    return None


def parse_config(text: str, base_dir: Optional[Path] = None, **overrides: Any) -> ExperimentConfig:
    """
    Validate TOML text into an ExperimentConfig.

    Args:
        text: TOML source
        base_dir: Directory relative paths resolve against
        **overrides: Top-level values (seed, trials, threads, output_dir) replacing the file's

    Raises:
        ConfigError: On TOML syntax errors or invalid values, with line and field when known
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"invalid TOML: {exc}", line=line) from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig.model_validate(data, context={"base_dir": base_dir})
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(err["loc"])
        field = ".".join(str(k) for k in loc) or None
        raise ConfigError(err["msg"], field=field, line=_field_line(text, loc)) from exc


def load_config(path: Union[str, Path], **overrides: Any) -> ExperimentConfig:
    """Read and validate a TOML experiment file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    cfg = parse_config(text, base_dir=path.parent, **overrides)
    logger.debug("Loaded %s (hash %s)", path, config_hash(cfg))
    return cfg
