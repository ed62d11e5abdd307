"""Shared stage logic used by both the CLI and the HTTP service, so both
produce byte-identical artifacts for identical config and seed.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .audio import AudioClip, BeatGrid, analyze_clip, load_beat_file, load_wav
from .choreography import (
    PromptBundle,
    build_initial_prompt,
    parse_waypoint_response,
    request_choreography,
)
from .config import PipelineConfig, SongEntry
from .errors import UnknownSong
from .metrics import mean_speed, percent_in_collision
from .planner import FilteredTrajectory, filter_swarm, resample_commands
from .preprocess import ValidationReport, preprocess_script, validate_script
from .script import WaypointScript, save_script
from .simulate import SimLog, run_simulation


def default_initial_positions(n_drones: int, cfg: PipelineConfig) -> np.ndarray:
    """Grid formation at cruise height, spaced at least min_distance apart."""
    lo, hi = cfg.volume.lo, cfg.volume.hi
    side = int(np.ceil(np.sqrt(n_drones)))
    span = min(hi[0] - lo[0], hi[1] - lo[1]) - 0.3
    coords = np.linspace(-span / 2, span / 2, side) if side > 1 else np.array([0.0])
    center = (lo + hi) / 2
    out = []
    for i in range(n_drones):
        r, c = divmod(i, side)
        out.append([center[0] + coords[c], center[1] + coords[r], center[2]])
    return np.asarray(out)


def beats_for_song(song: SongEntry, cfg: PipelineConfig) -> BeatGrid:
    if song.beats_path:
        return load_beat_file(song.beats_path)
    if song.path:
        return analyze_clip(load_wav(song.path), cfg.beat_analysis)
    raise UnknownSong(f"song {song.id!r} has neither an audio path nor a beats path")


def beats_from_input(path: str, cfg: PipelineConfig) -> BeatGrid:
    """Beat grid from either a WAV file or a beat JSON file."""
    if str(path).lower().endswith(".wav"):
        return analyze_clip(load_wav(path), cfg.beat_analysis)
    return load_beat_file(path)


def build_prompt(
    beats: BeatGrid,
    n_drones: int,
    cfg: PipelineConfig,
    initial_positions: np.ndarray | None = None,
    song_meta: dict | None = None,
) -> PromptBundle:
    if initial_positions is None:
        initial_positions = default_initial_positions(n_drones, cfg)
    return build_initial_prompt(
        beats,
        n_drones,
        initial_positions,
        cfg.volume,
        cfg.limits,
        cfg.separation,
        song_meta=song_meta,
        prompt_cfg=cfg.prompt,
    )


def generate_script(
    bundle: PromptBundle, beats: BeatGrid, cfg: PipelineConfig, style: str | None = None
) -> tuple[str, WaypointScript]:
    """Query the backend and parse its response; returns (raw text, script)."""
    text = request_choreography(
        bundle,
        cfg.backend,
        volume=cfg.volume,
        min_separation=cfg.separation.min_distance,
        style=style,
    )
    script = parse_waypoint_response(
        text, bundle.n_drones, bundle.beat_times, beat_grid=beats
    )
    return text, script


def preprocess_stage(
    script: WaypointScript, cfg: PipelineConfig
) -> tuple[WaypointScript, ValidationReport, ValidationReport]:
    """Repair the raw script; returns (clean script, report before, report after)."""
    before = validate_script(script, cfg.volume, cfg.separation)
    clean = preprocess_script(script, cfg.volume, cfg.separation)
    after = validate_script(clean, cfg.volume, cfg.separation)
    return clean, before, after


def filter_stage(script: WaypointScript, cfg: PipelineConfig) -> FilteredTrajectory:
    return filter_swarm(script, cfg.horizon, cfg.limits, cfg.envelope, cfg.volume)


def simulate_stage(
    traj: FilteredTrajectory, cfg: PipelineConfig, initial_positions: np.ndarray
) -> SimLog:
    commands = resample_commands(traj, cfg.sim.sim_hz, cfg.sim.ctrl_hz)
    return run_simulation(
        commands["ctrl_commands"], cfg.sim, initial_positions, drone_ids=traj.drone_ids
    )


def analytics_summary(
    cfg: PipelineConfig,
    raw_script: WaypointScript | None = None,
    traj: FilteredTrajectory | None = None,
    log: SimLog | None = None,
) -> dict:
    """Collision / speed / tracking summary across whichever artifacts exist."""
    out: dict = {}
    if raw_script is not None and raw_script.n_drones >= 2:
        # sample the raw waypoints as a piecewise-linear trajectory at ctrl rate
        times = raw_script.timestamps
        span = float(times[-1] - times[0])
        if span > 0:
            hz = cfg.sim.ctrl_hz
            n = int(np.floor(span * hz + 1e-9)) + 1
            grid = times[0] + np.arange(n) / hz
            pts = raw_script.as_array()
            dense = np.empty((raw_script.n_drones, n, 3))
            for i in range(raw_script.n_drones):
                for axis in range(3):
                    dense[i, :, axis] = np.interp(grid, times, pts[i, :, axis])
            rep = percent_in_collision(dense, cfg.envelope, hz)
            out["raw_percent_in_collision"] = rep.percent_in_collision
            out["raw_mean_speed"] = mean_speed(dense, 1.0 / hz)
    if traj is not None:
        if traj.n_drones >= 2:
            rep = percent_in_collision(
                traj.positions, cfg.envelope, 1.0 / traj.dt, sample_hz=cfg.sim.ctrl_hz
            )
            out["filtered_percent_in_collision"] = rep.percent_in_collision
        out["filtered_mean_speed"] = mean_speed(
            traj.positions, traj.dt, velocities=traj.velocities
        )
        out["certificate"] = traj.certificate
    if log is not None:
        from .metrics import trajectory_rmse

        rmse = trajectory_rmse(log.positions, log.references)
        out["tracking_rmse"] = rmse
        if log.n_drones >= 2:
            rep = percent_in_collision(log.positions, cfg.envelope, log.sim_hz)
            out["sim_percent_in_collision"] = rep.percent_in_collision
    return out


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
