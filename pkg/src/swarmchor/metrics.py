"""Evaluation quantities: collision statistics, tracking RMSE, mean speeds,
and the tabular series needed to redraw the evaluation figures.

All CSV floats are printed with 6 significant digits.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .config import EllipsoidEnvelope
from .errors import InconsistentInputs, LengthMismatch


def _sig6(x: float) -> str:
    return f"{x:.6g}"


def pairwise_clearance(positions: np.ndarray, envelope: EllipsoidEnvelope) -> np.ndarray:
    """Symmetric (N, N) matrix of h_ij = ||(p_i - p_j)/axes||^2 - 1 at one step.

    The diagonal is set to +inf (a drone never collides with itself).
    """
    positions = np.asarray(positions, dtype=float)
    if positions.shape[0] < 2:
        raise ValueError("need at least two drones")
    w = (positions[:, None, :] - positions[None, :, :]) / envelope.axes
    h = (w**2).sum(axis=2) - 1.0
    np.fill_diagonal(h, np.inf)
    return h


@dataclass(frozen=True)
class CollisionReport:
    percent_in_collision: float
    total_steps: int
    violating_steps: int
    events: tuple[tuple[int, int, float, float], ...]  # (i, j, t_start, t_end)
    envelope: EllipsoidEnvelope

    def to_dict(self) -> dict:
        return {
            "percent_in_collision": round(self.percent_in_collision, 6),
            "total_steps": self.total_steps,
            "violating_steps": self.violating_steps,
            "events": [
                {"i": i, "j": j, "t_start": round(a, 6), "t_end": round(b, 6)}
                for i, j, a, b in self.events
            ],
            "envelope": list(self.envelope.semi_axes),
        }


def _resample_positions(positions: np.ndarray, src_hz: float, sample_hz: float) -> np.ndarray:
    T = positions.shape[1]
    duration = (T - 1) / src_hz
    n = int(np.floor(duration * sample_hz + 1e-9)) + 1
    grid = np.arange(n) / sample_hz
    src_t = np.arange(T) / src_hz
    out = np.empty((positions.shape[0], n, 3))
    for i in range(positions.shape[0]):
        for axis in range(3):
            out[i, :, axis] = np.interp(grid, src_t, positions[i, :, axis])
    return out


def percent_in_collision(
    positions: np.ndarray,  # (N, T, 3) uniform samples
    envelope: EllipsoidEnvelope,
    src_hz: float,
    sample_hz: float | None = None,
) -> CollisionReport:
    """Fraction of sampled steps where any pair violates its envelope.

    A step counts as in collision iff min over pairs of h_ij < 0.
    """
    positions = np.asarray(positions, dtype=float)
    N = positions.shape[0]
    if sample_hz is not None and abs(sample_hz - src_hz) > 1e-12:
        positions = _resample_positions(positions, src_hz, sample_hz)
        hz = sample_hz
    else:
        hz = src_hz
    T = positions.shape[1]
    if N < 2:
        return CollisionReport(0.0, T, 0, (), envelope)

    inv = 1.0 / envelope.axes
    violating = np.zeros(T, dtype=bool)
    events = []
    for i in range(N - 1):
        for j in range(i + 1, N):
            w = (positions[i] - positions[j]) * inv
            h = (w**2).sum(axis=1) - 1.0
            bad = h < 0
            violating |= bad
            if np.any(bad):
                edges = np.flatnonzero(np.diff(np.concatenate(([0], bad.view(np.int8), [0]))))
                for s, e in zip(edges[::2], edges[1::2]):
                    events.append((i, j, s / hz, (e - 1) / hz))
    count = int(violating.sum())
    return CollisionReport(
        percent_in_collision=100.0 * count / T,
        total_steps=T,
        violating_steps=count,
        events=tuple(events),
        envelope=envelope,
    )


def trajectory_rmse(a: np.ndarray, b: np.ndarray) -> dict[str, float]:
    """Per-axis and overall RMSE between two position series (..., T, 3).

    Overall aggregates as sqrt(mean of the per-axis MSEs), i.e.
    sqrt(mean 3-D squared distance / 3).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    err = a - b
    mse_axis = np.mean(err.reshape(-1, 3) ** 2, axis=0)
    return {
        "x": float(np.sqrt(mse_axis[0])),
        "y": float(np.sqrt(mse_axis[1])),
        "z": float(np.sqrt(mse_axis[2])),
        "overall": float(np.sqrt(mse_axis.mean())),
    }


def mean_speed(
    positions: np.ndarray,  # (N, T, 3)
    dt: float,
    velocities: np.ndarray | None = None,
    per_drone: bool = False,
):
    """Mean speed over steps; finite differences when velocities are absent."""
    positions = np.asarray(positions, dtype=float)
    if positions.shape[1] < 2:
        raise ValueError("need at least two samples")
    if velocities is None:
        velocities = np.gradient(positions, dt, axis=1)
    speeds = np.linalg.norm(velocities, axis=2).mean(axis=1)  # (N,)
    if per_drone:
        return speeds
    return float(speeds.mean())


PLOT_KINDS = ("beat_xy", "collision_hist", "velocity_bars", "rmse_bars")


def export_plot_series(kind: str, inputs: dict) -> str:
    """CSV series for one figure kind.

    beat_xy: inputs {positions (N,T,3), dt, beat_sample_indices, drone_ids}
    collision_hist: inputs {before: [percent...], after: [percent...],
                            bucket_width (default 5)}
    velocity_bars: inputs {rows: [(label, before, after), ...]}
    rmse_bars: inputs {rows: [(label, rmse, lo, hi), ...]}
    """
    if kind not in PLOT_KINDS:
        raise InconsistentInputs(f"unknown plot kind {kind!r}")
    buf = io.StringIO()
    if kind == "beat_xy":
        try:
            positions = np.asarray(inputs["positions"], dtype=float)
            dt = float(inputs["dt"])
            beat_idx = set(int(i) for i in inputs["beat_sample_indices"])
            ids = inputs.get("drone_ids", tuple(range(positions.shape[0])))
        except KeyError as exc:
            raise InconsistentInputs(f"beat_xy missing input {exc}") from exc
        buf.write("drone,t,x,y,is_beat\n")
        for i, did in enumerate(ids):
            for k in range(positions.shape[1]):
                flag = "true" if k in beat_idx else "false"
                buf.write(
                    f"{did},{_sig6(k * dt)},{_sig6(positions[i, k, 0])},"
                    f"{_sig6(positions[i, k, 1])},{flag}\n"
                )
    elif kind == "collision_hist":
        before = list(inputs.get("before", []))
        after = list(inputs.get("after", []))
        width = float(inputs.get("bucket_width", 5.0))
        buf.write("bucket_lo,bucket_hi,count_before,count_after\n")
        if before or after:
            top = max(before + after + [0.0])
            n_buckets = int(np.floor(top / width)) + 1
            for b in range(n_buckets):
                lo, hi = b * width, (b + 1) * width
                cb = sum(1 for v in before if lo <= v < hi)
                ca = sum(1 for v in after if lo <= v < hi)
                buf.write(f"{_sig6(lo)},{_sig6(hi)},{cb},{ca}\n")
    elif kind == "velocity_bars":
        buf.write("choreo,before,after\n")
        for label, bef, aft in inputs.get("rows", []):
            buf.write(f"{label},{_sig6(float(bef))},{_sig6(float(aft))}\n")
    else:  # rmse_bars
        buf.write("choreo,rmse,lo,hi\n")
        for label, rmse, lo, hi in inputs.get("rows", []):
            buf.write(f"{label},{_sig6(float(rmse))},{_sig6(float(lo))},{_sig6(float(hi))}\n")
    return buf.getvalue()
