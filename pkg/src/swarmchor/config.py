"""Configuration dataclasses and JSON config loading.

All numeric defaults here are deliberate tuning choices for a desk-scale
nano-drone cage; every one of them can be overridden from a single JSON
config file shared by the CLI and the HTTP service.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict, replace
from typing import Any

import numpy as np

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass(frozen=True)
class FlightVolume:
    """Axis-aligned permissible flight region, floor excluded (z lower > 0)."""

    lower: tuple[float, float, float] = (-1.5, -1.5, 0.3)
    upper: tuple[float, float, float] = (1.5, 1.5, 2.0)

    def __post_init__(self):
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        if not np.all(lo < hi):
            raise ValueError("volume lower bound must be < upper bound componentwise")
        if self.lower[2] <= 0:
            raise ValueError("z lower bound must be positive")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    def contains(self, p: np.ndarray, tol: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lo - tol) and np.all(p <= self.hi + tol))

    def clip(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.lo, self.hi)


@dataclass(frozen=True)
class SeparationPolicy:
    """Same-timestamp proximity policy applied before the filter."""

    min_distance: float = 0.5
    push_offset: float = 0.5

    def __post_init__(self):
        if not self.push_offset >= self.min_distance / 2 > 0:
            raise ValueError("require push_offset >= min_distance/2 > 0")


@dataclass(frozen=True)
class DroneLimits:
    """Kinematic limits: max speed and the specific-thrust annulus."""

    v_max: float = 1.0
    f_min: float = 4.9
    f_max: float = 14.7

    def __post_init__(self):
        g = abs(GRAVITY[2])
        if not (0 < self.f_min < g < self.f_max):
            raise ValueError("require 0 < f_min < |g| < f_max")
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")


@dataclass(frozen=True)
class EllipsoidEnvelope:
    """Per-pair clearance ellipsoid semi-axes, elongated in z for downwash."""

    semi_axes: tuple[float, float, float] = (0.25, 0.25, 0.6)

    def __post_init__(self):
        ax = np.asarray(self.semi_axes)
        if not np.all(ax > 0):
            raise ValueError("semi-axes must be positive")
        if self.semi_axes[2] < self.semi_axes[0]:
            raise ValueError("vertical semi-axis must be >= horizontal (downwash)")

    @property
    def axes(self) -> np.ndarray:
        return np.asarray(self.semi_axes, dtype=float)


@dataclass(frozen=True)
class HorizonConfig:
    """Per-window planner settings."""

    dt: float = 0.1
    kappa_frac: float = 0.1
    w_goal: float = 10.0
    w_smooth: float = 1.0
    q_smooth: int = 2
    gamma: float = 1.0
    max_sweeps: int = 400
    tol: float = 1e-4
    rho0: float = 10.0
    rho_growth: float = 2.0
    rho_max: float = 1e9

    def __post_init__(self):
        if self.dt <= 0 or self.tol <= 0 or self.w_goal <= 0 or self.w_smooth <= 0:
            raise ValueError("dt, tol and cost weights must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def kappa(self, horizon_steps: int) -> int:
        return max(1, math.ceil(self.kappa_frac * horizon_steps))


@dataclass(frozen=True)
class SimConfig:
    """Double-integrator simulator and PD position controller settings."""

    sim_hz: float = 240.0
    ctrl_hz: float = 48.0
    kp: float = 16.0
    kd: float = 8.0
    drag_coeff: float = 0.1
    accel_clamp: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if not self.sim_hz >= self.ctrl_hz > 0:
            raise ValueError("require sim_hz >= ctrl_hz > 0")
        if self.kp <= 0 or self.kd <= 0:
            raise ValueError("controller gains must be positive")


@dataclass(frozen=True)
class GenBackendConfig:
    """Which choreography generator to query and how."""

    kind: str = "procedural"  # "procedural" | "http_chat"
    base_url: str = ""
    model_name: str = ""
    api_key_env_var: str = "SWARMCHOR_API_KEY"
    timeout: float = 60.0
    temperature: float = 0.7
    seed: int = 0
    resend_history: bool = True

    def __post_init__(self):
        if self.kind not in ("procedural", "http_chat"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http_chat" and not (self.base_url and self.model_name):
            raise ValueError("http_chat backend requires base_url and model_name")


@dataclass(frozen=True)
class BeatAnalysisConfig:
    frame: int = 2048
    hop: int = 512
    tempo_prior_bpm: float = 120.0
    tempo_prior_log2_std: float = 1.0
    dp_lambda: float = 100.0


@dataclass(frozen=True)
class PromptConfig:
    beat_budget: int = 64
    keywords: tuple[str, ...] = ("harmonic", "symmetric", "artistic", "synchronized")


@dataclass(frozen=True)
class SongEntry:
    id: str
    name: str
    path: str = ""          # WAV file
    beats_path: str = ""    # precomputed beat JSON (alternative to path)
    genre: str = ""
    mood: str = ""


@dataclass(frozen=True)
class PipelineConfig:
    """Top-level config shared by CLI and service."""

    volume: FlightVolume = field(default_factory=FlightVolume)
    separation: SeparationPolicy = field(default_factory=SeparationPolicy)
    limits: DroneLimits = field(default_factory=DroneLimits)
    envelope: EllipsoidEnvelope = field(default_factory=EllipsoidEnvelope)
    horizon: HorizonConfig = field(default_factory=HorizonConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    backend: GenBackendConfig = field(default_factory=GenBackendConfig)
    beat_analysis: BeatAnalysisConfig = field(default_factory=BeatAnalysisConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    songs: tuple[SongEntry, ...] = ()
    max_drones: int = 16

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_SECTION_TYPES = {
    "volume": FlightVolume,
    "separation": SeparationPolicy,
    "limits": DroneLimits,
    "envelope": EllipsoidEnvelope,
    "horizon": HorizonConfig,
    "sim": SimConfig,
    "backend": GenBackendConfig,
    "beat_analysis": BeatAnalysisConfig,
    "prompt": PromptConfig,
}


def _coerce(cls, data: dict) -> Any:
    kwargs = {}
    for key, value in data.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any]) -> PipelineConfig:
    kwargs: dict[str, Any] = {}
    for section, cls in _SECTION_TYPES.items():
        if section in data:
            kwargs[section] = _coerce(cls, data[section])
    if "songs" in data:
        kwargs["songs"] = tuple(_coerce(SongEntry, s) for s in data["songs"])
    if "max_drones" in data:
        kwargs["max_drones"] = int(data["max_drones"])
    return PipelineConfig(**kwargs)


def load_config(path: str | os.PathLike | None) -> PipelineConfig:
    """Load a JSON config file; None returns the defaults."""
    if path is None:
        return PipelineConfig()
    with open(path) as fh:
        return config_from_dict(json.load(fh))


def with_overrides(cfg: PipelineConfig, **sections) -> PipelineConfig:
    return replace(cfg, **sections)
