"""Deterministic double-integrator swarm simulator with a PD position
controller. Control-rate position references are zero-order-held across
simulator substeps; integration is semi-implicit Euler with linear drag.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .config import SimConfig
from .errors import LengthMismatch


@dataclass(frozen=True)
class DroneState:
    p: np.ndarray  # (3,) m
    v: np.ndarray  # (3,) m/s
    t: float

    def __post_init__(self):
        p, v = np.asarray(self.p, float), np.asarray(self.v, float)
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("state components must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)


def controller_step(
    state: DroneState,
    ref_p: np.ndarray,
    cfg: SimConfig,
    ref_v: np.ndarray | None = None,
    ref_a: np.ndarray | None = None,
) -> np.ndarray:
    """PD acceleration command with optional feedforward, clamped per component.

    Without feedforward a PD loop lags a moving reference by (kd/kp) * speed;
    velocity/acceleration feedforward removes that steady-state error.
    """
    a = cfg.kp * (np.asarray(ref_p, float) - state.p)
    if ref_v is None:
        a -= cfg.kd * state.v
    else:
        a += cfg.kd * (np.asarray(ref_v, float) - state.v)
    if ref_a is not None:
        a += np.asarray(ref_a, float)
    return np.clip(a, -cfg.accel_clamp, cfg.accel_clamp)


def sim_step(state: DroneState, a_cmd: np.ndarray, dt: float, drag_coeff: float = 0.0) -> DroneState:
    """Semi-implicit Euler with linear drag applied to the updated velocity."""
    v = (state.v + np.asarray(a_cmd, float) * dt) * (1.0 - drag_coeff * dt)
    return DroneState(p=state.p + v * dt, v=v, t=state.t + dt)


@dataclass
class SimLog:
    """Simulated states at sim rate, with the references that were tracked."""

    sim_hz: float
    drone_ids: tuple[int, ...]
    positions: np.ndarray   # (N, T, 3)
    velocities: np.ndarray  # (N, T, 3)
    references: np.ndarray  # (N, T, 3), ZOH reference active at each substep

    @property
    def n_drones(self) -> int:
        return len(self.drone_ids)

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.positions.shape[1]) / self.sim_hz

    def to_dict(self, fps: float | None = None) -> dict:
        """JSON playback form; fps downsamples frames for the UI."""
        stride = 1
        if fps is not None and fps > 0 and fps < self.sim_hz:
            stride = max(1, int(round(self.sim_hz / fps)))
        times = self.times[::stride]
        return {
            "sim_hz": self.sim_hz,
            "fps": self.sim_hz / stride,
            "times": np.round(times, 6).tolist(),
            "drones": [
                {
                    "id": int(self.drone_ids[i]),
                    "p": np.round(self.positions[i, ::stride], 6).tolist(),
                    "ref": np.round(self.references[i, ::stride], 6).tolist(),
                }
                for i in range(self.n_drones)
            ],
        }

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["drone_id", "t", "x", "y", "z", "vx", "vy", "vz", "ref_x", "ref_y", "ref_z"]
            )
            times = self.times
            for i, did in enumerate(self.drone_ids):
                for k in range(len(times)):
                    writer.writerow(
                        [did, f"{times[k]:.6f}"]
                        + [f"{v:.6f}" for v in self.positions[i, k]]
                        + [f"{v:.6f}" for v in self.velocities[i, k]]
                        + [f"{v:.6f}" for v in self.references[i, k]]
                    )


def run_simulation(
    ctrl_commands: np.ndarray,  # (N, C, 3) position references at ctrl rate
    cfg: SimConfig,
    initial_positions: np.ndarray,  # (N, 3)
    drone_ids: tuple[int, ...] | None = None,
) -> SimLog:
    """Track control-rate references with the PD controller; deterministic."""
    ctrl_commands = np.asarray(ctrl_commands, dtype=float)
    initial_positions = np.asarray(initial_positions, dtype=float)
    if ctrl_commands.ndim != 3 or ctrl_commands.shape[2] != 3:
        raise LengthMismatch("ctrl_commands must be (N, C, 3)")
    N, C, _ = ctrl_commands.shape
    if initial_positions.shape != (N, 3):
        raise LengthMismatch(
            f"{N} command tracks but {initial_positions.shape[0]} initial states"
        )
    substeps = int(round(cfg.sim_hz / cfg.ctrl_hz))
    dt = 1.0 / cfg.sim_hz
    dtc = 1.0 / cfg.ctrl_hz
    T = (C - 1) * substeps + 1

    # feedforward references from finite differences of the command track
    ref_vel = np.gradient(ctrl_commands, dtc, axis=1) if C >= 2 else np.zeros_like(ctrl_commands)
    ref_acc = np.gradient(ref_vel, dtc, axis=1) if C >= 2 else np.zeros_like(ctrl_commands)

    positions = np.empty((N, T, 3))
    velocities = np.empty((N, T, 3))
    references = np.empty((N, T, 3))
    for i in range(N):
        state = DroneState(p=initial_positions[i], v=np.zeros(3), t=0.0)
        positions[i, 0] = state.p
        velocities[i, 0] = state.v
        references[i, 0] = ctrl_commands[i, 0]
        k = 1
        for c in range(C - 1):
            ref = ctrl_commands[i, c]
            for _ in range(substeps):
                a = controller_step(state, ref, cfg, ref_vel[i, c], ref_acc[i, c])
                state = sim_step(state, a, dt, cfg.drag_coeff)
                positions[i, k] = state.p
                velocities[i, k] = state.v
                references[i, k] = ref
                k += 1
    ids = drone_ids if drone_ids is not None else tuple(range(N))
    return SimLog(
        sim_hz=cfg.sim_hz,
        drone_ids=tuple(ids),
        positions=positions,
        velocities=velocities,
        references=references,
    )
