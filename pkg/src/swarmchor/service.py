"""HTTP session service: song catalog, choreography generation, safety
filtering, simulation, re-prompting, and artifact export.

Persistence is one directory per session holding the same JSON/CSV artifacts
the CLI writes, plus a manifest; every stage reads its inputs from disk and
writes its outputs back, so a service restart loses nothing. Long-running
stages (filter, simulate) execute on a worker thread; at most one stage runs
per session and concurrent stage requests are answered with a busy error.
"""
from __future__ import annotations

import dataclasses
import io
import json
import os
import threading
import time
import uuid
import zipfile
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response

from .audio import BeatGrid, load_beat_file
from .choreography import (
    build_reprompt,
    parse_waypoint_response,
    request_choreography,
    style_from_reprompts,
)
from .config import PipelineConfig, load_config
from .errors import (
    EmptyReprompt,
    SessionBusy,
    SessionNotFound,
    StageOrderViolation,
    SwarmchorError,
    TooManyDrones,
    UnknownSong,
)
from .metrics import export_plot_series
from .pipeline import (
    analytics_summary,
    beats_for_song,
    build_prompt,
    default_initial_positions,
    filter_stage,
    preprocess_stage,
    simulate_stage,
    write_json,
)
from .planner import CSV_HEADER, FilteredTrajectory
from .script import load_script, script_to_json
from .simulate import SimLog

STAGES = ("created", "generated", "filtered", "simulated")
# artifacts invalidated when a stage (re)runs, keyed by the stage that owns them
_STAGE_ARTIFACTS = {
    "generated": (
        "prompt.json", "raw_response.txt", "raw_script.json", "clean_script.json",
        "validation_before.json", "validation_after.json",
    ),
    "filtered": ("filtered.json", "filtered.csv", "beat_xy.csv"),
    "simulated": ("sim_log.csv", "sim_log.json"),
}
_HTTP_STATUS = {
    "SessionNotFound": 404,
    "UnknownSong": 404,
    "TooManyDrones": 400,
    "EmptyReprompt": 400,
    "StageOrderViolation": 409,
    "SessionBusy": 409,
    "ParseError": 422,
    "MalformedResponse": 422,
    "DroneCountMismatch": 422,
    "MissingBeats": 422,
    "BackendUnavailable": 502,
    "BackendRefused": 502,
}

_BUILTIN_SONGS = (
    {"id": "click-90", "name": "Click track 90 BPM", "bpm": 90.0, "duration": 20.0},
    {"id": "click-120", "name": "Click track 120 BPM", "bpm": 120.0, "duration": 20.0},
    {"id": "click-150", "name": "Click track 150 BPM", "bpm": 150.0, "duration": 20.0},
)


def _builtin_grid(entry: dict) -> BeatGrid:
    period = 60.0 / entry["bpm"]
    n = int(entry["duration"] / period)
    return BeatGrid(
        beat_times=period * np.arange(1, n + 1),
        tempo_bpm=entry["bpm"],
        source="loaded",
    )


class SessionStore:
    """Directory-backed session registry with per-session stage serialization."""

    def __init__(self, root: Path, cfg: PipelineConfig):
        self.root = Path(root)
        self.cfg = cfg
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        # clear busy flags left over from an interrupted run
        for d in self.root.iterdir():
            mpath = d / "manifest.json"
            if mpath.exists():
                manifest = json.loads(mpath.read_text())
                if manifest.get("busy"):
                    manifest["busy"] = None
                    self._write_manifest(d, manifest)

    # -- plumbing ------------------------------------------------------------

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def session_dir(self, session_id: str) -> Path:
        d = self.root / session_id
        if not (d / "manifest.json").exists():
            raise SessionNotFound(f"no session {session_id!r}")
        return d

    def _write_manifest(self, d: Path, manifest: dict) -> None:
        tmp = d / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, d / "manifest.json")

    def manifest(self, session_id: str) -> dict:
        return json.loads((self.session_dir(session_id) / "manifest.json").read_text())

    # -- catalog -------------------------------------------------------------

    def songs(self) -> list[dict]:
        out = []
        if self.cfg.songs:
            for s in self.cfg.songs:
                grid = self._song_beats(s.id)
                out.append({
                    "id": s.id, "name": s.name, "genre": s.genre, "mood": s.mood,
                    "n_beats": len(grid), "tempo_bpm": grid.tempo_bpm,
                })
        else:
            for e in _BUILTIN_SONGS:
                grid = _builtin_grid(e)
                out.append({
                    "id": e["id"], "name": e["name"], "genre": "synthetic", "mood": "steady",
                    "n_beats": len(grid), "tempo_bpm": grid.tempo_bpm,
                })
        return out

    def _song_beats(self, song_id: str) -> BeatGrid:
        if self.cfg.songs:
            for s in self.cfg.songs:
                if s.id == song_id:
                    return beats_for_song(s, self.cfg)
        else:
            for e in _BUILTIN_SONGS:
                if e["id"] == song_id:
                    return _builtin_grid(e)
        raise UnknownSong(f"no song {song_id!r} in the catalog")

    def _song_meta(self, song_id: str) -> dict:
        for s in self.songs():
            if s["id"] == song_id:
                return s
        raise UnknownSong(f"no song {song_id!r} in the catalog")

    # -- lifecycle -----------------------------------------------------------

    def create(self, song_id: str, n_drones: int, seed: int | None = None) -> dict:
        if not 1 <= n_drones <= self.cfg.max_drones:
            raise TooManyDrones(
                f"n_drones must be in [1, {self.cfg.max_drones}], got {n_drones}"
            )
        meta = self._song_meta(song_id)
        grid = self._song_beats(song_id)  # eager, cached in the session dir
        session_id = uuid.uuid4().hex[:12]
        d = self.root / session_id
        d.mkdir()
        write_json(d / "beats.json", grid.to_dict())
        manifest = {
            "id": session_id,
            "song": meta,
            "n_drones": n_drones,
            "seed": seed if seed is not None else self.cfg.backend.seed,
            "stage": "created",
            "busy": None,
            "reprompts": [],
            "last_error": None,
            "created_at": time.time(),
            "analytics": {},
            "validation": {},
        }
        self._write_manifest(d, manifest)
        return manifest

    def view(self, session_id: str) -> dict:
        d = self.session_dir(session_id)
        manifest = self.manifest(session_id)
        manifest["artifacts"] = sorted(
            p.name for p in d.iterdir()
            if p.name not in ("manifest.json", "manifest.json.tmp")
        )
        return manifest

    # -- stages --------------------------------------------------------------

    def _load_beats(self, d: Path) -> BeatGrid:
        return load_beat_file(d / "beats.json")

    def _invalidate_from(self, d: Path, stage: str) -> None:
        start = STAGES.index(stage)
        for s in STAGES[start:]:
            for name in _STAGE_ARTIFACTS.get(s, ()):
                (d / name).unlink(missing_ok=True)

    def _run_generate(self, session_id: str) -> dict:
        d = self.session_dir(session_id)
        manifest = self.manifest(session_id)
        cfg = dataclasses.replace(
            self.cfg,
            backend=dataclasses.replace(self.cfg.backend, seed=int(manifest["seed"])),
        )
        beats = self._load_beats(d)
        n = int(manifest["n_drones"])
        init = default_initial_positions(n, cfg)
        bundle = build_prompt(beats, n, cfg, initial_positions=init,
                              song_meta=manifest["song"])
        for text in manifest["reprompts"]:
            bundle = build_reprompt(bundle, text)
        style = style_from_reprompts(tuple(manifest["reprompts"]))
        raw_text = request_choreography(
            bundle, cfg.backend, volume=cfg.volume,
            min_separation=cfg.separation.min_distance, style=style,
        )
        raw_script = parse_waypoint_response(raw_text, n, bundle.beat_times, beat_grid=beats)
        clean, before, after = preprocess_stage(raw_script, cfg)

        self._invalidate_from(d, "generated")
        write_json(d / "prompt.json", bundle.to_dict())
        (d / "raw_response.txt").write_text(raw_text)
        (d / "raw_script.json").write_text(script_to_json(raw_script) + "\n")
        (d / "clean_script.json").write_text(script_to_json(clean) + "\n")
        write_json(d / "validation_before.json", before.to_dict())
        write_json(d / "validation_after.json", after.to_dict())

        manifest["stage"] = "generated"
        manifest["validation"] = {"before": before.to_dict(), "after": after.to_dict()}
        manifest["analytics"] = analytics_summary(cfg, raw_script=raw_script)
        return manifest

    def _run_filter(self, session_id: str) -> dict:
        d = self.session_dir(session_id)
        manifest = self.manifest(session_id)
        clean = load_script(d / "clean_script.json")
        traj = filter_stage(clean, self.cfg)
        self._invalidate_from(d, "filtered")
        write_json(d / "filtered.json", traj.to_dict())
        self._write_traj_csv(d / "filtered.csv", traj)
        (d / "beat_xy.csv").write_text(export_plot_series("beat_xy", {
            "positions": traj.positions, "dt": traj.dt,
            "beat_sample_indices": traj.beat_sample_indices,
            "drone_ids": traj.drone_ids,
        }))
        raw = load_script(d / "raw_script.json")
        manifest["stage"] = "filtered"
        manifest["analytics"] = analytics_summary(self.cfg, raw_script=raw, traj=traj)
        return manifest

    def _run_simulate(self, session_id: str) -> dict:
        d = self.session_dir(session_id)
        manifest = self.manifest(session_id)
        clean = load_script(d / "clean_script.json")
        traj = FilteredTrajectory.from_dict(json.loads((d / "filtered.json").read_text()))
        log = simulate_stage(traj, self.cfg, clean.initial_positions)
        self._invalidate_from(d, "simulated")
        log.write_csv(d / "sim_log.csv")
        write_json(d / "sim_log.json", log.to_dict())
        raw = load_script(d / "raw_script.json")
        manifest["stage"] = "simulated"
        manifest["analytics"] = analytics_summary(self.cfg, raw_script=raw, traj=traj, log=log)
        return manifest

    @staticmethod
    def _write_traj_csv(path: Path, traj: FilteredTrajectory) -> None:
        import csv as _csv

        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in traj.csv_rows():
                writer.writerow([row[0], row[1]] + [f"{v:.6f}" for v in row[2:]])

    _STAGE_RUNNERS = {
        "generate": ("_run_generate", "created"),
        "filter": ("_run_filter", "generated"),
        "simulate": ("_run_simulate", "filtered"),
    }
    _ASYNC_STAGES = ("filter", "simulate")

    def run_stage(self, session_id: str, stage: str) -> dict:
        runner_name, prerequisite = self._STAGE_RUNNERS[stage]
        manifest = self.manifest(session_id)
        if manifest["busy"]:
            raise SessionBusy(f"stage {manifest['busy']!r} is already running")
        if STAGES.index(manifest["stage"]) < STAGES.index(prerequisite):
            raise StageOrderViolation(
                f"stage {stage!r} requires {prerequisite!r}, session is {manifest['stage']!r}"
            )
        lock = self._lock(session_id)
        if not lock.acquire(blocking=False):
            raise SessionBusy("another stage is executing for this session")
        d = self.session_dir(session_id)
        runner = getattr(self, runner_name)

        if stage not in self._ASYNC_STAGES:
            try:
                manifest = runner(session_id)
                manifest["last_error"] = None
                self._write_manifest(d, manifest)
            except SwarmchorError as exc:
                manifest["last_error"] = {"code": exc.code, "message": str(exc), "stage": stage}
                self._write_manifest(d, manifest)
                raise
            finally:
                lock.release()
            return self.view(session_id)

        manifest["busy"] = stage
        manifest["last_error"] = None
        self._write_manifest(d, manifest)

        def worker() -> None:
            try:
                updated = runner(session_id)
                updated["busy"] = None
                updated["last_error"] = None
                self._write_manifest(d, updated)
            except Exception as exc:  # persist the failure for polling clients
                failed = self.manifest(session_id)
                failed["busy"] = None
                code = exc.code if isinstance(exc, SwarmchorError) else type(exc).__name__
                failed["last_error"] = {"code": code, "message": str(exc), "stage": stage}
                self._write_manifest(d, failed)
            finally:
                lock.release()

        threading.Thread(target=worker, name=f"{stage}-{session_id}", daemon=True).start()
        return self.view(session_id)

    def reprompt(self, session_id: str, text: str) -> dict:
        if not text or not text.strip():
            raise EmptyReprompt("re-prompt text must be non-empty")
        manifest = self.manifest(session_id)
        if manifest["busy"]:
            raise SessionBusy(f"stage {manifest['busy']!r} is already running")
        if STAGES.index(manifest["stage"]) < STAGES.index("generated"):
            raise StageOrderViolation("re-prompting requires a generated script")
        d = self.session_dir(session_id)
        manifest["reprompts"].append(text.strip())
        self._write_manifest(d, manifest)
        lock = self._lock(session_id)
        if not lock.acquire(blocking=False):
            raise SessionBusy("another stage is executing for this session")
        try:
            manifest = self._run_generate(session_id)
            manifest["last_error"] = None
            self._write_manifest(d, manifest)
        finally:
            lock.release()
        return self.view(session_id)

    # -- artifacts -----------------------------------------------------------

    def artifact(self, session_id: str, name: str, fps: float | None = None):
        d = self.session_dir(session_id)
        path = d / name
        if "/" in name or "\\" in name or ".." in name or not path.exists():
            raise SessionNotFound(f"session {session_id!r} has no artifact {name!r}")
        if name == "sim_log.json" and fps:
            data = json.loads(path.read_text())
            return _downsample_sim(data, fps)
        if name.endswith(".json"):
            return json.loads(path.read_text())
        return path.read_text()

    def export_bundle(self, session_id: str) -> bytes:
        manifest = self.manifest(session_id)
        if STAGES.index(manifest["stage"]) < STAGES.index("filtered"):
            raise StageOrderViolation("export requires a filtered trajectory")
        d = self.session_dir(session_id)
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            for path in sorted(d.iterdir()):
                if path.name.endswith(".tmp"):
                    continue
                # fixed timestamp so unchanged sessions export byte-identically
                info = zipfile.ZipInfo(path.name, date_time=(1980, 1, 1, 0, 0, 0))
                info.compress_type = zipfile.ZIP_DEFLATED
                zf.writestr(info, path.read_bytes())
        return buf.getvalue()


def _downsample_sim(data: dict, fps: float) -> dict:
    sim_hz = float(data.get("sim_hz", 0) or 0)
    if sim_hz <= 0 or fps <= 0 or fps >= sim_hz:
        return data
    stride = max(1, int(round(sim_hz / fps)))
    out = dict(data)
    out["fps"] = sim_hz / stride
    out["times"] = data["times"][::stride]
    out["drones"] = [
        {"id": dr["id"], "p": dr["p"][::stride], "ref": dr["ref"][::stride]}
        for dr in data["drones"]
    ]
    return out


def create_app(
    config_path: str | None = None,
    sessions_dir: str = "sessions",
    config: PipelineConfig | None = None,
) -> FastAPI:
    cfg = config if config is not None else load_config(config_path)
    store = SessionStore(Path(sessions_dir), cfg)
    app = FastAPI(title="swarmchor", version="0.1.0")
    app.state.store = store

    @app.exception_handler(SwarmchorError)
    async def _handle(request: Request, exc: SwarmchorError):
        status = _HTTP_STATUS.get(exc.code, 500)
        stage = getattr(exc, "stage", None) or request.url.path.rsplit("/", 1)[-1]
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": str(exc), "stage": stage},
        )

    @app.get("/songs")
    def songs():
        return {"songs": store.songs()}

    @app.post("/sessions", status_code=201)
    def create_session(body: dict):
        song_id = body.get("song_id", "")
        n_drones = int(body.get("n_drones", 0))
        seed = body.get("seed")
        manifest = store.create(song_id, n_drones, seed=None if seed is None else int(seed))
        return manifest

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return store.view(session_id)

    @app.post("/sessions/{session_id}/generate")
    def generate(session_id: str):
        return store.run_stage(session_id, "generate")

    @app.post("/sessions/{session_id}/filter", status_code=202)
    def filter_(session_id: str):
        return store.run_stage(session_id, "filter")

    @app.post("/sessions/{session_id}/simulate", status_code=202)
    def simulate(session_id: str):
        return store.run_stage(session_id, "simulate")

    @app.post("/sessions/{session_id}/reprompt")
    def reprompt(session_id: str, body: dict):
        return store.reprompt(session_id, body.get("text", ""))

    @app.get("/sessions/{session_id}/artifacts/{name}")
    def artifact(session_id: str, name: str, fps: float | None = None):
        data = store.artifact(session_id, name, fps=fps)
        if isinstance(data, str):
            return PlainTextResponse(data)
        return data

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str):
        payload = store.export_bundle(session_id)
        return Response(
            content=payload,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{session_id}.zip"'},
        )

    @app.post("/sessions/{session_id}/deploy", status_code=501)
    def deploy(session_id: str):
        store.session_dir(session_id)  # 404 for unknown sessions
        return {
            "code": "NotImplemented",
            "message": "physical deployment is out of scope; use /export",
            "stage": "deploy",
        }

    return app
