"""Waypoint script data model and its canonical JSON form.

Canonical wire format::

    {"drones": [{"id": 0, "waypoints": [{"t": 0.0, "x": 0.0, "y": 0.0, "z": 1.0}, ...]}, ...]}

Times are seconds, positions are meters. Serialization rounds to 6 decimals
and emits keys in a fixed order so identical scripts produce identical bytes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .audio import BeatGrid
from .errors import MalformedResponse

TIME_MATCH_TOL = 1e-3  # waypoint timestamps must match beats within 1 ms


@dataclass(frozen=True)
class Waypoint:
    t: float
    position: np.ndarray  # (3,) [x, y, z] meters

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise ValueError("position must be a 3-vector")
        if self.t < 0 or not np.all(np.isfinite(pos)) or not np.isfinite(self.t):
            raise ValueError("waypoint time must be >= 0 and components finite")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class DroneTrack:
    drone_id: int
    waypoints: tuple[Waypoint, ...]


@dataclass(frozen=True)
class WaypointScript:
    """Per-drone timed waypoints, one waypoint per beat for every drone."""

    drones: tuple[DroneTrack, ...]
    initial_positions: np.ndarray  # (N, 3)
    beat_grid: BeatGrid | None = None

    def __post_init__(self):
        if len(self.drones) < 1:
            raise ValueError("need at least one drone")
        ids = [d.drone_id for d in self.drones]
        if len(set(ids)) != len(ids):
            raise ValueError("drone ids must be unique")
        ref_times = self.timestamps
        for d in self.drones:
            times = np.array([w.t for w in d.waypoints])
            if not np.all(np.diff(times) > 0):
                raise ValueError(f"drone {d.drone_id} waypoints not time-sorted")
            if len(times) != len(ref_times) or np.any(np.abs(times - ref_times) > TIME_MATCH_TOL):
                raise ValueError("all drones must share one timestamp set")
        init = np.asarray(self.initial_positions, dtype=float)
        if init.shape != (len(self.drones), 3):
            raise ValueError("initial_positions must be (n_drones, 3)")
        object.__setattr__(self, "initial_positions", init)

    @property
    def n_drones(self) -> int:
        return len(self.drones)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([w.t for w in self.drones[0].waypoints])

    def positions_at(self, beat_index: int) -> np.ndarray:
        """(N, 3) array of simultaneous waypoint positions at one beat."""
        return np.stack([d.waypoints[beat_index].position for d in self.drones])

    def as_array(self) -> np.ndarray:
        """(N, n_beats, 3) waypoint positions."""
        return np.stack([[w.position for w in d.waypoints] for d in self.drones])

    def with_positions(self, positions: np.ndarray) -> "WaypointScript":
        """Copy of the script with waypoint positions replaced from (N, B, 3)."""
        positions = np.asarray(positions, dtype=float)
        drones = tuple(
            DroneTrack(
                drone_id=d.drone_id,
                waypoints=tuple(
                    Waypoint(t=w.t, position=positions[i, k])
                    for k, w in enumerate(d.waypoints)
                ),
            )
            for i, d in enumerate(self.drones)
        )
        return WaypointScript(
            drones=drones, initial_positions=self.initial_positions, beat_grid=self.beat_grid
        )


def _fmt(x: float) -> float:
    return round(float(x) + 0.0, 6)


def script_to_dict(script: WaypointScript) -> dict:
    return {
        "drones": [
            {
                "id": d.drone_id,
                "waypoints": [
                    {"t": _fmt(w.t), "x": _fmt(w.position[0]),
                     "y": _fmt(w.position[1]), "z": _fmt(w.position[2])}
                    for w in d.waypoints
                ],
            }
            for d in script.drones
        ]
    }


def script_to_json(script: WaypointScript) -> str:
    return json.dumps(script_to_dict(script), separators=(", ", ": "))


def script_from_dict(
    data: dict,
    initial_positions: np.ndarray | None = None,
    beat_grid: BeatGrid | None = None,
) -> WaypointScript:
    """Validate the canonical shape and build a WaypointScript.

    Raises MalformedResponse on any structural problem; the script invariants
    (shared timestamp sets etc.) are checked by the WaypointScript constructor.
    """
    if not isinstance(data, dict) or "drones" not in data or not isinstance(data["drones"], list):
        raise MalformedResponse("expected an object with a 'drones' array")
    tracks = []
    for entry in data["drones"]:
        if not isinstance(entry, dict) or "id" not in entry or "waypoints" not in entry:
            raise MalformedResponse("each drone needs 'id' and 'waypoints'")
        try:
            wps = sorted(
                (
                    Waypoint(
                        t=float(w["t"]),
                        position=np.array([float(w["x"]), float(w["y"]), float(w["z"])]),
                    )
                    for w in entry["waypoints"]
                ),
                key=lambda w: w.t,
            )
            tracks.append(DroneTrack(drone_id=int(entry["id"]), waypoints=tuple(wps)))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponse(f"bad waypoint record: {exc}") from exc
    if not tracks:
        raise MalformedResponse("empty drone list")
    if initial_positions is None:
        initial_positions = np.stack([t.waypoints[0].position for t in tracks])
    try:
        return WaypointScript(
            drones=tuple(tracks), initial_positions=initial_positions, beat_grid=beat_grid
        )
    except ValueError as exc:
        raise MalformedResponse(str(exc)) from exc


def load_script(path) -> WaypointScript:
    with open(path) as fh:
        return script_from_dict(json.load(fh))


def save_script(script: WaypointScript, path) -> None:
    with open(path, "w") as fh:
        fh.write(script_to_json(script))
        fh.write("\n")
