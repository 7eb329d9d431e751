"""YAML experiment configuration, validated with pydantic.

Physically meaningful apparatus fields (source, visibility, rates) are
required; only instrument conventions carry defaults. See
``configs/*.yaml`` for complete files.
"""

from __future__ import annotations

import enum
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import optics
from .optimizer import GradientMode, OptimizerConfig
from .optics import SINGLES_CHANNELS, ApparatusConfig, SpectralModel
from .quantum import BellKind, PolarizationUnitary, random_su2

__all__ = ["ConfigError", "Mode", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    pass


class Mode(str, enum.Enum):
    SIMULATE = "simulate"
    ALIGN = "align"
    METRICS = "metrics"
    MONITOR = "monitor"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class FiberSpec(_Strict):
    kind: Literal["identity", "random"] = "random"
    seed: Optional[int] = None
    pre_split: Literal["identity", "random"] = "random"


class SpectralSpec(_Strict):
    bandwidth_nm: float = Field(60.0, ge=0)
    center_nm: float = Field(1310.0, gt=0)
    gradient_rad_per_nm: list[float] = Field(min_length=4, max_length=4)
    quadrature_points: int = Field(5, ge=1)
    axes: list[list[float]] = Field(default_factory=lambda: [[1.0, 0.0, 0.0]] * 4, min_length=4, max_length=4)


class ApparatusSpec(_Strict):
    source: BellKind
    visibility: float = Field(ge=0, le=1)
    pair_rate: float = Field(ge=0)
    singles_rate_base: list[float] = Field(min_length=2, max_length=2)
    dark_coincidence_rate: float = Field(ge=0)
    bs_ratio: list[float] = Field(default_factory=lambda: [0.5, 0.5], min_length=2, max_length=2)
    detector_efficiency: Union[dict[str, float], list[float]] = Field(default_factory=lambda: [1.0] * 8)
    fibers: FiberSpec = Field(default_factory=FiberSpec)
    spectral: Optional[SpectralSpec] = None

    @field_validator("singles_rate_base")
    @classmethod
    def _nonnegative(cls, v: list[float]) -> list[float]:
        if min(v) < 0:
            raise ValueError("rates must be >= 0")
        return v

    @field_validator("bs_ratio")
    @classmethod
    def _open_unit(cls, v: list[float]) -> list[float]:
        if not all(0 < r < 1 for r in v):
            raise ValueError("splitting ratios must lie in (0, 1)")
        return v

    @field_validator("detector_efficiency")
    @classmethod
    def _efficiencies(cls, v):
        if isinstance(v, dict):
            unknown = set(v) - set(SINGLES_CHANNELS)
            if unknown:
                raise ValueError(f"unknown detector(s) {sorted(unknown)}; expected {list(SINGLES_CHANNELS)}")
            v = [v.get(d, 1.0) for d in SINGLES_CHANNELS]
        if len(v) != 8:
            raise ValueError("expected 8 efficiencies")
        if not all(0 < e <= 1 for e in v):
            raise ValueError("efficiencies must lie in (0, 1]")
        return v


class OptimizerSpec(_Strict):
    max_iterations: int = Field(300, ge=1)
    step_schedule: list[tuple[float, int]] = Field(default_factory=list)
    trials_per_eval: int = Field(1, ge=1)
    adaptive_trials: bool = False
    target_sem: float = Field(0.01, gt=0)
    max_trials: int = Field(50, ge=1)
    window_duration: float = Field(5.0, gt=0)
    gradient_mode: GradientMode = GradientMode.SIMULTANEOUS_PERTURBATION
    learning_rate: float = Field(1.0, gt=0)
    h_target: Optional[float] = None
    patience: int = Field(5, ge=1)
    analytic: bool = False
    initial_angles: Union[Literal["zero", "aligned"], list[float]] = "zero"


class SimulateSpec(_Strict):
    windows: int = Field(10, ge=1)
    duration_s: float = Field(5.0, gt=0)
    epc: Union[Literal["zero", "aligned"], list[float]] = "aligned"


class MonitorSpec(_Strict):
    h_threshold: float = 14.0
    patience: int = Field(3, ge=1)
    qber_threshold: Optional[float] = 0.11
    qber_kind: Union[Literal["min"], BellKind] = "min"


class ExperimentConfig(_Strict):
    mode: Optional[Mode] = None
    seed: int = 0
    output_path: Optional[str] = None
    input_path: Optional[str] = None
    apparatus: Optional[ApparatusSpec] = None
    optimizer: OptimizerSpec = Field(default_factory=OptimizerSpec)
    simulate: SimulateSpec = Field(default_factory=SimulateSpec)
    monitor: MonitorSpec = Field(default_factory=MonitorSpec)

    @model_validator(mode="after")
    def _mode_requirements(self) -> "ExperimentConfig":
        if self.mode in (Mode.METRICS, Mode.MONITOR) and not self.input_path:
            raise ValueError(f"mode {self.mode.value!r} requires input_path")
        if self.mode in (Mode.SIMULATE, Mode.ALIGN) and self.apparatus is None:
            raise ValueError(f"mode {self.mode.value!r} requires an apparatus section")
        return self

    def build_apparatus(self) -> ApparatusConfig:
        spec = self.apparatus
        if spec is None:
            raise ConfigError("config has no apparatus section")
        seed = self.seed if spec.fibers.seed is None else spec.fibers.seed
        rng = np.random.default_rng(seed)
        ident = PolarizationUnitary.identity()
        # arm fibers are drawn before the transmission fibers so either can be switched off independently
        arm_draws = [random_su2(rng) for _ in range(4)]
        pre_draws = [random_su2(rng) for _ in range(2)]
        fibers = arm_draws if spec.fibers.kind == "random" else [ident] * 4
        pre = pre_draws if spec.fibers.pre_split == "random" else [ident] * 2
        spectral = None
        if spec.spectral is not None:
            s = spec.spectral
            spectral = SpectralModel(
                bandwidth_nm=s.bandwidth_nm,
                center_nm=s.center_nm,
                gradient_rad_per_nm=s.gradient_rad_per_nm,
                quadrature_points=s.quadrature_points,
                axes=s.axes,
            )
        return ApparatusConfig(
            source=spec.source,
            visibility=spec.visibility,
            pair_rate=spec.pair_rate,
            singles_rate_base=spec.singles_rate_base,
            fiber_unitary=fibers,
            pre_split_unitary=pre,
            bs_ratio=spec.bs_ratio,
            detector_efficiency=spec.detector_efficiency,
            dark_coincidence_rate=spec.dark_coincidence_rate,
            spectral=spectral,
        )

    def build_optimizer(self, apparatus: ApparatusConfig | None = None) -> OptimizerConfig:
        o = self.optimizer
        initial = _angles(o.initial_angles, apparatus, "optimizer.initial_angles")
        return OptimizerConfig(
            max_iterations=o.max_iterations,
            step_schedule=tuple(o.step_schedule),
            trials_per_eval=o.trials_per_eval,
            adaptive_trials=o.adaptive_trials,
            target_sem=o.target_sem,
            max_trials=o.max_trials,
            window_duration=o.window_duration,
            gradient_mode=o.gradient_mode,
            learning_rate=o.learning_rate,
            h_target=o.h_target,
            patience=o.patience,
            analytic=o.analytic,
            seed=self.seed,
            initial_angles=initial,
        )

    def simulate_epc(self, apparatus: ApparatusConfig) -> optics.EpcSettings:
        return optics.EpcSettings.from_vector(_angles(self.simulate.epc, apparatus, "simulate.epc"))


def _angles(spec, apparatus: ApparatusConfig | None, where: str) -> np.ndarray:
    if spec == "zero":
        return np.zeros(12)
    if spec == "aligned":
        if apparatus is None:
            raise ConfigError(f"{where}: 'aligned' needs an apparatus")
        return optics.aligned_settings(apparatus).vector
    if len(spec) != 12:
        raise ConfigError(f"{where}: expected 12 paddle angles, got {len(spec)}")
    return np.asarray(spec, dtype=float)


def _format_validation(exc: ValidationError, source: str) -> str:
    lines = [f"invalid config {source}:"]
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"  {loc}: {err['msg']}")
    return "\n".join(lines)


def parse_config(data: dict, source: str = "<dict>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc, source)) from None


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML config and deep-merge ``overrides`` (e.g. from CLI flags) before validation."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"cannot parse config {path}{where}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping at the top level")
    return parse_config(_merge(data, overrides or {}), str(path))


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out
