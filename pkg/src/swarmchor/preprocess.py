"""Waypoint repair before optimization.

Raw generated waypoints can leave the flight volume or place two drones on
top of each other at the same beat; the planner must never start from such a
state. normalize_to_volume rescales violated axes, separate_coincident_waypoints
pushes too-close simultaneous pairs apart.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import FlightVolume, SeparationPolicy
from .errors import SeparationFailed
from .script import WaypointScript

VOLUME_MARGIN = 0.05  # m kept clear of the walls when rescaling
MAX_SWEEPS = 200
STALL_JITTER = 0.05   # m, deterministic bump applied when a sweep stalls


def normalize_to_volume(script: WaypointScript, vol: FlightVolume) -> WaypointScript:
    """Affinely rescale violated axes so all waypoints fit the volume.

    Only axes with at least one out-of-bounds waypoint are touched: each such
    axis is mapped from the script's [min, max] extent onto
    [lower + margin, upper - margin]. A violated axis with zero extent is
    clamped instead.
    """
    pts = script.as_array()  # (N, B, 3)
    init = script.initial_positions.copy()
    lo, hi = vol.lo, vol.hi
    out = pts.copy()
    changed = False
    for axis in range(3):
        vals = pts[:, :, axis]
        if np.all((vals >= lo[axis]) & (vals <= hi[axis])):
            continue
        changed = True
        lo_t, hi_t = lo[axis] + VOLUME_MARGIN, hi[axis] - VOLUME_MARGIN
        vmin, vmax = vals.min(), vals.max()
        if vmax - vmin < 1e-12:
            # degenerate extent: clamp the single value
            out[:, :, axis] = np.clip(vals, lo_t, hi_t)
            init[:, axis] = np.clip(init[:, axis], lo_t, hi_t)
            continue
        scale = (hi_t - lo_t) / (vmax - vmin)
        out[:, :, axis] = lo_t + (vals - vmin) * scale
        init[:, axis] = np.clip(lo_t + (init[:, axis] - vmin) * scale, lo_t, hi_t)
    if not changed:
        return script
    return replace(script.with_positions(out), initial_positions=init)


def separate_coincident_waypoints(
    script: WaypointScript, policy: SeparationPolicy, vol: FlightVolume | None = None
) -> WaypointScript:
    """Push simultaneous waypoint pairs apart until all are >= min_distance.

    Per timestamp, relaxation sweeps move every violating pair outward along
    its connecting line, each endpoint by the shortfall/2 capped at
    push_offset/2 (exactly coincident pairs split along +/-x). Relaxing every
    pair per sweep, closest first, resolves chains of near-coincident points
    that a single closest-pair push would only shuttle along. Pushed points
    are re-clamped to the volume. Gives up after MAX_SWEEPS sweeps per
    timestamp.
    """
    pts = script.as_array().copy()
    n, n_beats, _ = pts.shape
    if n < 2:
        return script
    margin = 1e-9
    ii, jj = np.triu_indices(n, k=1)
    for b in range(n_beats):
        prev_min = -np.inf
        for _ in range(MAX_SWEEPS):
            p = pts[:, b, :]
            diff = p[:, None, :] - p[None, :, :]
            dist = np.linalg.norm(diff, axis=2)
            np.fill_diagonal(dist, np.inf)
            bad = dist[ii, jj] < policy.min_distance
            if not np.any(bad):
                break
            cur_min = float(dist[ii, jj].min())
            if cur_min <= prev_min + 1e-6:
                # stalled (e.g. a collinear chain pinned against the walls):
                # buckle it with a deterministic vertical zig-zag
                p[:, 2] += STALL_JITTER * (2.0 * (np.arange(n) % 2) - 1.0)
                if vol is not None:
                    p[:] = np.clip(p, vol.lo, vol.hi)
            prev_min = cur_min
            order = np.argsort(dist[ii, jj][bad])
            for i, j in zip(ii[bad][order], jj[bad][order]):
                d = float(np.linalg.norm(p[i] - p[j]))
                if d >= policy.min_distance:
                    continue
                if d < 1e-12:
                    direction = np.array([1.0, 0.0, 0.0])
                else:
                    direction = (p[i] - p[j]) / d
                step = min((policy.min_distance - d) / 2 + margin, policy.push_offset / 2)
                p[i] += direction * step
                p[j] -= direction * step
                if vol is not None:
                    p[i] = vol.clip(p[i])
                    p[j] = vol.clip(p[j])
        else:
            raise SeparationFailed(
                f"could not separate waypoints at beat index {b} within {MAX_SWEEPS} sweeps"
            )
    return script.with_positions(pts)


@dataclass(frozen=True)
class Violation:
    type: str  # out_of_volume | coincident | non_monotonic_time | missing_beat
    drone_ids: tuple[int, ...]
    timestamp: float

    def to_dict(self) -> dict:
        return {"type": self.type, "drone_ids": list(self.drone_ids),
                "timestamp": round(self.timestamp, 6)}


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def to_dict(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_dict() for v in self.violations]}


def validate_script(
    script: WaypointScript,
    vol: FlightVolume,
    policy: SeparationPolicy,
    beat_times: np.ndarray | None = None,
) -> ValidationReport:
    """Report every violation that would make the script unsafe to filter."""
    found: list[Violation] = []
    times = script.timestamps
    for d in script.drones:
        wp_times = np.array([w.t for w in d.waypoints])
        bad = np.flatnonzero(np.diff(wp_times) <= 0)
        for k in bad:
            found.append(Violation("non_monotonic_time", (d.drone_id,), float(wp_times[k + 1])))
    if beat_times is not None:
        expected = np.asarray(beat_times, dtype=float)
        for t in expected:
            if not np.any(np.abs(times - t) <= 1e-3):
                found.append(Violation("missing_beat", tuple(d.drone_id for d in script.drones), float(t)))
    pts = script.as_array()
    for b, t in enumerate(times):
        p = pts[:, b, :]
        for i, d in enumerate(script.drones):
            if not vol.contains(p[i]):
                found.append(Violation("out_of_volume", (d.drone_id,), float(t)))
        if script.n_drones >= 2:
            diff = p[:, None, :] - p[None, :, :]
            dist = np.linalg.norm(diff, axis=2)
            ii, jj = np.triu_indices(script.n_drones, k=1)
            for i, j in zip(ii, jj):
                if dist[i, j] < policy.min_distance:
                    found.append(
                        Violation(
                            "coincident",
                            (script.drones[i].drone_id, script.drones[j].drone_id),
                            float(t),
                        )
                    )
    return ValidationReport(violations=tuple(found))


def preprocess_script(
    script: WaypointScript, vol: FlightVolume, policy: SeparationPolicy
) -> WaypointScript:
    """normalize, then separate: the standard repair sequence."""
    return separate_coincident_waypoints(normalize_to_volume(script, vol), policy, vol)
