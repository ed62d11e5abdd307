"""Command-line front-end: full pipeline runs, filter-only runs, batch
analytics, and the HTTP service.

Exit codes:
  0  success
  1  unexpected internal error
  2  bad arguments (argparse)
  3  missing/unreadable input file
  4  parse error (script JSON, beat file, WAV, backend response)
  5  generation backend unavailable or refused
  6  preprocessing failed (waypoint separation)
  7  safety filter failed (infeasible window after dilation retries)
  8  analytics error (empty batch, length mismatch)
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import PipelineConfig, load_config
from .errors import (
    BackendRefused,
    BackendUnavailable,
    DroneCountMismatch,
    EmptyBatch,
    FilteringFailed,
    InfeasibleWindow,
    LengthMismatch,
    MalformedResponse,
    MissingBeats,
    NonMonotonicBeats,
    ParseError,
    SeparationFailed,
    SwarmchorError,
)
from .metrics import export_plot_series, mean_speed, trajectory_rmse
from .pipeline import (
    analytics_summary,
    beats_from_input,
    build_prompt,
    default_initial_positions,
    filter_stage,
    generate_script,
    preprocess_stage,
    simulate_stage,
    write_json,
)
from .planner import CSV_HEADER, FilteredTrajectory
from .script import load_script, save_script, script_to_json

EXIT_IO = 3
EXIT_PARSE = 4
EXIT_BACKEND = 5
EXIT_PREPROCESS = 6
EXIT_FILTER = 7
EXIT_ANALYTICS = 8

_ERROR_EXITS: tuple[tuple[type, int], ...] = (
    ((FileNotFoundError, IsADirectoryError, PermissionError), EXIT_IO),
    ((ParseError, MalformedResponse, NonMonotonicBeats, MissingBeats,
      DroneCountMismatch, json.JSONDecodeError), EXIT_PARSE),
    ((BackendUnavailable, BackendRefused), EXIT_BACKEND),
    (SeparationFailed, EXIT_PREPROCESS),
    ((FilteringFailed, InfeasibleWindow), EXIT_FILTER),
    ((EmptyBatch, LengthMismatch), EXIT_ANALYTICS),
)


def _exit_code_for(exc: BaseException) -> int:
    for types, code in _ERROR_EXITS:
        if isinstance(exc, types):
            return code
    return 1


def _apply_seed(cfg: PipelineConfig, seed: int | None) -> PipelineConfig:
    if seed is None:
        return cfg
    return dataclasses.replace(cfg, backend=dataclasses.replace(cfg.backend, seed=seed))


def _apply_backend(cfg: PipelineConfig, backend: str | None) -> PipelineConfig:
    if backend is None or backend == cfg.backend.kind:
        return cfg
    if backend == "procedural":
        return dataclasses.replace(
            cfg, backend=dataclasses.replace(cfg.backend, kind="procedural")
        )
    # http backend needs base_url/model from the config file
    return dataclasses.replace(
        cfg, backend=dataclasses.replace(cfg.backend, kind="http_chat")
    )


def _write_trajectory(traj: FilteredTrajectory, out: Path, stem: str = "filtered") -> None:
    write_json(out / f"{stem}.json", traj.to_dict())
    with open(out / f"{stem}.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in traj.csv_rows():
            writer.writerow([row[0], row[1]] + [f"{v:.6f}" for v in row[2:]])


def cmd_pipeline(args) -> int:
    cfg = _apply_backend(_apply_seed(load_config(args.config), args.seed), args.backend)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    stages: list[str] = []

    def record(stage: str, t0: float) -> None:
        stages.append(stage)
        timings[stage] = round(time.perf_counter() - t0, 4)

    t0 = time.perf_counter()
    beats = beats_from_input(args.beats or args.song, cfg)
    write_json(out / "beats.json", beats.to_dict())
    record("beats", t0)

    t0 = time.perf_counter()
    init = default_initial_positions(args.drones, cfg)
    bundle = build_prompt(beats, args.drones, cfg, initial_positions=init)
    write_json(out / "prompt.json", bundle.to_dict())
    raw_text, raw_script = generate_script(bundle, beats, cfg)
    (out / "raw_response.txt").write_text(raw_text)
    (out / "raw_script.json").write_text(script_to_json(raw_script) + "\n")
    record("generate", t0)

    t0 = time.perf_counter()
    clean, before, after = preprocess_stage(raw_script, cfg)
    (out / "clean_script.json").write_text(script_to_json(clean) + "\n")
    write_json(out / "validation_before.json", before.to_dict())
    write_json(out / "validation_after.json", after.to_dict())
    record("preprocess", t0)

    t0 = time.perf_counter()
    traj = filter_stage(clean, cfg)
    _write_trajectory(traj, out)
    record("filter", t0)

    t0 = time.perf_counter()
    log = simulate_stage(traj, cfg, clean.initial_positions)
    log.write_csv(out / "sim_log.csv")
    record("simulate", t0)

    t0 = time.perf_counter()
    summary = analytics_summary(cfg, raw_script=raw_script, traj=traj, log=log)
    write_json(out / "analytics.json", summary)
    (out / "beat_xy.csv").write_text(
        export_plot_series(
            "beat_xy",
            {
                "positions": traj.positions,
                "dt": traj.dt,
                "beat_sample_indices": traj.beat_sample_indices,
                "drone_ids": traj.drone_ids,
            },
        )
    )
    record("analytics", t0)

    write_json(
        out / "manifest.json",
        {
            "config": str(args.config) if args.config else None,
            "seed": args.seed,
            "drones": args.drones,
            "backend": cfg.backend.kind,
            "stages": stages,
            "timings": timings,
        },
    )
    cert = traj.certificate
    print(f"pipeline ok: {args.drones} drones, {len(beats)} beats -> {out}")
    print(
        f"certificate: min_h={cert['min_h']:.6f} "
        f"speed_violation={cert['max_speed_violation']:.6f} "
        f"thrust_range=[{cert['thrust_range'][0]:.3f}, {cert['thrust_range'][1]:.3f}]"
    )
    print(f"post-filter collision: {summary.get('filtered_percent_in_collision', 0.0):.3f}%")
    return 0


def cmd_filter(args) -> int:
    cfg = load_config(args.config)
    script = load_script(args.script)
    clean, before, after = preprocess_stage(script, cfg)
    traj = filter_stage(clean, cfg)
    cert = traj.certificate
    print(f"filtered {script.n_drones} drones, {traj.n_samples} samples at dt={traj.dt}")
    print(
        f"min_h={cert['min_h']} max_box_violation={cert['max_box_violation']} "
        f"max_speed_violation={cert['max_speed_violation']} "
        f"thrust_range={cert['thrust_range']}"
    )
    print(f"sweeps_per_window={cert['sweeps_per_window']} dilations={cert['dilations']}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        save_script(clean, out / "clean_script.json")
        write_json(out / "validation_before.json", before.to_dict())
        write_json(out / "validation_after.json", after.to_dict())
        _write_trajectory(traj, out)
    return 0


def cmd_analyze(args) -> int:
    batch = Path(args.batch)
    runs = sorted(d for d in batch.iterdir() if (d / "filtered.json").exists())
    if not runs:
        raise EmptyBatch(f"no runs with artifacts under {batch}")
    out = Path(args.out) if args.out else batch
    out.mkdir(parents=True, exist_ok=True)
    cfg = load_config(args.config)

    before_pct, after_pct = [], []
    vel_rows, rmse_rows = [], []
    for run in runs:
        traj = FilteredTrajectory.from_dict(json.loads((run / "filtered.json").read_text()))
        summary = {}
        if (run / "analytics.json").exists():
            summary = json.loads((run / "analytics.json").read_text())
        before_pct.append(float(summary.get("raw_percent_in_collision", 0.0)))
        after_pct.append(float(summary.get("filtered_percent_in_collision", 0.0)))
        vel_rows.append(
            (run.name, summary.get("raw_mean_speed", ""),
             mean_speed(traj.positions, traj.dt, velocities=traj.velocities))
        )
        rmse = summary.get("tracking_rmse")
        if rmse:
            axes = [rmse["x"], rmse["y"], rmse["z"]]
            rmse_rows.append((run.name, rmse["overall"], min(axes), max(axes)))

    (out / "collision_hist.csv").write_text(
        export_plot_series("collision_hist", {"before": before_pct, "after": after_pct})
    )
    (out / "velocity_bars.csv").write_text(
        export_plot_series(
            "velocity_bars",
            {"rows": [(n, b if b != "" else 0.0, a) for n, b, a in vel_rows]},
        )
    )
    if rmse_rows:
        (out / "rmse_bars.csv").write_text(
            export_plot_series("rmse_bars", {"rows": rmse_rows})
        )
    print(f"analyzed {len(runs)} runs -> {out}")
    print(f"collision before: mean {np.mean(before_pct):.3f}%  after: mean {np.mean(after_pct):.3f}%")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(config_path=args.config, sessions_dir=args.sessions_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmchor",
        description="Beat-synchronized drone choreography with a safety filter.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="full run: beats -> generate -> filter -> simulate")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--song", help="audio file (WAV) to beat-analyze")
    src.add_argument("--beats", help="precomputed beat JSON file")
    p.add_argument("--drones", type=int, default=6)
    p.add_argument("--seed", type=int, default=None, help="procedural generator seed")
    p.add_argument("--backend", choices=("procedural", "http"), default=None)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("filter", help="preprocess + safety-filter a waypoint script")
    p.add_argument("script", help="waypoint script JSON")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="write artifacts here (optional)")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("analyze", help="aggregate figure CSVs over a batch of runs")
    p.add_argument("batch", help="directory of pipeline output directories")
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="CSV output directory (default: batch dir)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--config", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--sessions-dir", default="sessions")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SwarmchorError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return _exit_code_for(exc)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
