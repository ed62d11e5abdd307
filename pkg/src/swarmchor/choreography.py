"""Choreography generation: prompt assembly, backends, and response parsing.

The prompt layer is pure text assembly. Two backends answer it: an HTTP
chat-completions client, and a deterministic procedural generator that emits
the same wire format (prose-wrapped JSON) so the full parse path is exercised
without a live model.
"""
from __future__ import annotations

import json
import math
import os
import urllib.error
import urllib.request
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import BeatGrid
from .config import FlightVolume, GenBackendConfig, PromptConfig, DroneLimits, SeparationPolicy
from .errors import (
    BackendRefused,
    BackendUnavailable,
    DroneCountMismatch,
    EmptyReprompt,
    MalformedResponse,
    MissingBeats,
    TooManyBeats,
)
from .script import (
    TIME_MATCH_TOL,
    DroneTrack,
    Waypoint,
    WaypointScript,
    script_from_dict,
    script_to_json,
)

SYSTEM_ROLE = (
    "You are an expert choreographer for a swarm of small indoor drones. "
    "You design artistic, synchronized formations that change on every musical beat."
)

OUTPUT_FORMAT_INSTRUCTION = (
    "Respond with a single JSON object and no other text, exactly of the form "
    '{"drones": [{"id": 0, "waypoints": [{"t": 0.0, "x": 0.0, "y": 0.0, "z": 1.0}, ...]}, ...]}. '
    "Give every drone exactly one waypoint at every listed beat timestamp."
)


@dataclass(frozen=True)
class PromptBundle:
    """Everything sent to the generation backend, plus re-prompt history."""

    system_text: str
    user_text: str
    reprompt_history: tuple[str, ...] = ()
    constraints_echo: dict = field(default_factory=dict)
    beat_times: tuple[float, ...] = ()
    n_drones: int = 0
    initial_positions: tuple[tuple[float, float, float], ...] = ()

    def to_dict(self) -> dict:
        return {
            "system_text": self.system_text,
            "user_text": self.user_text,
            "reprompt_history": list(self.reprompt_history),
            "constraints_echo": self.constraints_echo,
            "beat_times": list(self.beat_times),
            "n_drones": self.n_drones,
            "initial_positions": [list(p) for p in self.initial_positions],
        }


def decimate_beats(beat_times: np.ndarray, budget: int) -> tuple[np.ndarray, int]:
    """Keep every ceil(count/budget)-th beat when over budget.

    Returns (kept beats, stride). stride == 1 means no decimation.
    """
    count = len(beat_times)
    if count <= budget:
        return np.asarray(beat_times, dtype=float), 1
    stride = math.ceil(count / budget)
    return np.asarray(beat_times, dtype=float)[::stride], stride


def build_initial_prompt(
    beats: BeatGrid,
    n_drones: int,
    initial_positions: np.ndarray,
    volume: FlightVolume,
    limits: DroneLimits,
    separation: SeparationPolicy,
    song_meta: dict | None = None,
    prompt_cfg: PromptConfig = PromptConfig(),
) -> PromptBundle:
    if n_drones < 1:
        raise ValueError("need at least one drone")
    if len(beats) < 2:
        raise ValueError("need at least two beats")
    initial_positions = np.asarray(initial_positions, dtype=float).reshape(n_drones, 3)
    for p in initial_positions:
        if not volume.contains(p):
            raise ValueError(f"initial position {p.tolist()} outside flight volume")
    kept, stride = decimate_beats(beats.beat_times, prompt_cfg.beat_budget)
    if len(kept) > prompt_cfg.beat_budget:
        raise TooManyBeats(f"{len(kept)} beats remain after decimation (budget {prompt_cfg.beat_budget})")
    song_meta = song_meta or {}

    accel_headroom = limits.f_max - 9.81
    lines = []
    meta_bits = [v for k in ("name", "genre", "mood") if (v := song_meta.get(k))]
    if meta_bits:
        lines.append(f"Song: {', '.join(meta_bits)}. Interpret its mood and tone in the choreography.")
    lines.append(
        f"Choreograph a swarm of {n_drones} drones. Change the swarm formation at every beat "
        f"by giving each drone a unique waypoint at each beat timestamp."
    )
    beat_str = ", ".join(f"{t:.3f}" for t in kept)
    if stride > 1:
        lines.append(
            f"Beat timestamps in seconds (every {stride}th beat of {len(beats)} total): {beat_str}"
        )
    else:
        lines.append(f"Beat timestamps in seconds: {beat_str}")
    pos_str = "; ".join(
        f"drone {i}: ({p[0]:.3f}, {p[1]:.3f}, {p[2]:.3f})" for i, p in enumerate(initial_positions)
    )
    lines.append(f"Initial drone positions in meters: {pos_str}")
    lines.append(
        "Safety constraints: keep every waypoint inside the flight volume "
        f"x in [{volume.lower[0]:g}, {volume.upper[0]:g}] m, "
        f"y in [{volume.lower[1]:g}, {volume.upper[1]:g}] m, "
        f"z in [{volume.lower[2]:g}, {volume.upper[2]:g}] m. "
        f"Maximum drone velocity is {limits.v_max:g} m/s and maximum acceleration is "
        f"{accel_headroom:g} m/s^2. Never place two waypoints of the same timestamp closer than "
        f"{separation.min_distance:g} m to each other."
    )
    lines.append(
        "Make the choreography " + ", ".join(prompt_cfg.keywords) + ", and synchronized to the beats."
    )
    lines.append(OUTPUT_FORMAT_INSTRUCTION)

    return PromptBundle(
        system_text=SYSTEM_ROLE,
        user_text="\n".join(lines),
        constraints_echo={
            "volume_lower": list(volume.lower),
            "volume_upper": list(volume.upper),
            "v_max": limits.v_max,
            "accel_max": accel_headroom,
            "min_separation": separation.min_distance,
        },
        beat_times=tuple(round(float(t), 6) for t in kept),
        n_drones=n_drones,
        initial_positions=tuple(tuple(round(float(x), 6) for x in p) for p in initial_positions),
    )


def build_reprompt(bundle: PromptBundle, user_text: str) -> PromptBundle:
    if not user_text or not user_text.strip():
        raise EmptyReprompt("re-prompt text must be non-empty")
    return replace(bundle, reprompt_history=bundle.reprompt_history + (user_text,))


# --- response parsing -------------------------------------------------------

def _scan_balanced(text: str, start: int) -> int | None:
    """Index one past the end of the balanced JSON value opening at start."""
    depth = 0
    in_string = False
    escape = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth == 0:
                # mismatched closers are caught later by json.loads
                return i + 1
    return None


def extract_first_json(text: str):
    """First well-formed JSON object or array embedded in text, or None."""
    for i, ch in enumerate(text):
        if ch in "{[":
            end = _scan_balanced(text, i)
            if end is None:
                continue
            try:
                return json.loads(text[i:end])
            except json.JSONDecodeError:
                continue
    return None


def parse_waypoint_response(
    text: str,
    expected_n_drones: int,
    expected_beat_times,
    beat_grid: BeatGrid | None = None,
) -> WaypointScript:
    """Parse backend text into a WaypointScript, discarding surrounding prose.

    The first balanced JSON value is extracted and validated against the
    canonical shape; every drone must carry one waypoint per expected beat
    time (within 1 ms).
    """
    value = extract_first_json(text)
    if value is None:
        raise MalformedResponse("no JSON value found in response")
    if not isinstance(value, dict):
        raise MalformedResponse("top-level JSON value is not an object")
    script = script_from_dict(value, beat_grid=beat_grid)
    if script.n_drones != expected_n_drones:
        raise DroneCountMismatch(
            f"expected {expected_n_drones} drones, got {script.n_drones}"
        )
    expected = np.sort(np.asarray(expected_beat_times, dtype=float))
    got = script.timestamps
    if len(got) != len(expected) or np.any(np.abs(got - expected) > TIME_MATCH_TOL):
        raise MissingBeats("waypoint timestamps do not cover the expected beat set")
    return script


# --- procedural generator ---------------------------------------------------

def _formation_circle(n, center, radius, z, phase):
    ang = phase + 2 * np.pi * np.arange(n) / n
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang),
                     np.full(n, z)], axis=1)


def _formation_grid(n, center, radius, z, phase):
    side = math.ceil(math.sqrt(n))
    xs, ys = np.meshgrid(np.arange(side), np.arange(side))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)[:n].astype(float)
    if side > 1:
        pts = (pts / (side - 1) - 0.5) * 2 * radius
    else:
        pts = pts * 0.0
    c, s = np.cos(phase), np.sin(phase)
    rot = pts @ np.array([[c, -s], [s, c]]).T
    return np.stack([center[0] + rot[:, 0], center[1] + rot[:, 1], np.full(n, z)], axis=1)


def _formation_line(n, center, radius, z, phase):
    offs = np.linspace(-radius, radius, n) if n > 1 else np.zeros(1)
    c, s = np.cos(phase), np.sin(phase)
    return np.stack([center[0] + offs * c, center[1] + offs * s, np.full(n, z)], axis=1)


def _formation_helix(n, center, radius, z, phase, z_span):
    ang = phase + 2 * np.pi * np.arange(n) / max(n, 1)
    zs = z + np.linspace(-z_span / 2, z_span / 2, n) if n > 1 else np.array([z])
    return np.stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang), zs], axis=1)


def _formation_v(n, center, radius, z, phase):
    half = (np.arange(n) + 1) // 2
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    frac = half / max(1, (n - 1) // 2 + 1)
    local = np.stack([-frac * radius, sign * frac * radius * 0.7], axis=1)
    c, s = np.cos(phase), np.sin(phase)
    rot = local @ np.array([[c, -s], [s, c]]).T
    return np.stack([center[0] + rot[:, 0], center[1] + rot[:, 1], np.full(n, z)], axis=1)


FORMATIONS = ("circle", "grid", "line", "helix", "v")


def procedural_generate(
    beats: BeatGrid,
    n_drones: int,
    seed: int,
    style: str = "default",
    volume: FlightVolume = FlightVolume(),
    initial_positions: np.ndarray | None = None,
    min_separation: float = 0.5,
    beats_per_formation: int = 4,
) -> WaypointScript:
    """Deterministic formation choreography cycling through a small library.

    style:
      - "default": gentle rotation within each formation
      - "fast": larger per-beat rotation and radius pulsing
      - "slow": reduced per-beat motion
      - "high"/"low": shifted cruise altitude
      - "adversarial": additionally teleports random pairs within collision
        distance at random beats, to exercise the safety filter
    """
    if n_drones < 1 or len(beats) < 2:
        raise ValueError("need n_drones >= 1 and at least two beats")
    rng = np.random.default_rng(seed)
    lo, hi = volume.lo, volume.hi
    center = (lo + hi) / 2
    radius = 0.42 * min(hi[0] - lo[0], hi[1] - lo[1])
    z_mid = center[2]
    z_span = 0.5 * (hi[2] - lo[2])

    speed = {"fast": 2.5, "slow": 0.4}.get(style, 1.0)
    z_shift = {"high": 0.3 * (hi[2] - lo[2]), "low": -0.3 * (hi[2] - lo[2])}.get(style, 0.0)
    z_cruise = float(np.clip(z_mid + z_shift, lo[2] + 0.2, hi[2] - 0.2))

    base_rot = rng.uniform(0.15, 0.35) * speed
    n_beats = len(beats)
    positions = np.zeros((n_drones, n_beats, 3))
    for b in range(n_beats):
        kind = FORMATIONS[(b // beats_per_formation) % len(FORMATIONS)]
        phase = base_rot * b
        r = radius * (1.0 + 0.12 * speed * np.sin(0.9 * b))
        if kind == "circle":
            pts = _formation_circle(n_drones, center, r, z_cruise, phase)
        elif kind == "grid":
            pts = _formation_grid(n_drones, center, r * 0.9, z_cruise, phase * 0.5)
        elif kind == "line":
            pts = _formation_line(n_drones, center, r, z_cruise, phase)
        elif kind == "helix":
            pts = _formation_helix(n_drones, center, r * 0.8, z_cruise, phase, z_span)
        else:
            pts = _formation_v(n_drones, center, r * 1.1, z_cruise, phase)
        positions[:, b, :] = pts

    if style == "adversarial" and n_drones >= 2:
        n_hits = max(1, n_beats // 4)
        hit_beats = rng.choice(n_beats, size=n_hits, replace=False)
        for b in hit_beats:
            i, j = rng.choice(n_drones, size=2, replace=False)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            dist = rng.uniform(0.1, 0.8) * min_separation
            positions[j, b] = positions[i, b] + direction * dist

    margin = 0.05
    positions = np.clip(positions, lo + margin, hi - margin)

    if initial_positions is None:
        initial_positions = positions[:, 0, :].copy()
    drones = tuple(
        DroneTrack(
            drone_id=i,
            waypoints=tuple(
                Waypoint(t=float(beats.beat_times[b]), position=positions[i, b])
                for b in range(n_beats)
            ),
        )
        for i in range(n_drones)
    )
    return WaypointScript(drones=drones, initial_positions=np.asarray(initial_positions, float),
                          beat_grid=beats)


def style_from_reprompts(reprompts: tuple[str, ...], base_style: str = "default") -> str:
    """Map re-prompt keywords onto procedural styles (last instruction wins)."""
    style = base_style
    for text in reprompts:
        low = text.lower()
        if "faster" in low or "fast" in low or "speed" in low:
            style = "fast"
        elif "slower" in low or "slow" in low or "calm" in low:
            style = "slow"
        elif "higher" in low or "up" in low:
            style = "high"
        elif "lower" in low or "down" in low:
            style = "low"
    return style


# --- backends ---------------------------------------------------------------

def _procedural_response(bundle: PromptBundle, backend: GenBackendConfig,
                         volume: FlightVolume, min_separation: float, style: str | None) -> str:
    beats = BeatGrid(
        beat_times=np.asarray(bundle.beat_times, dtype=float),
        tempo_bpm=120.0,
        source="loaded",
    )
    resolved = style or style_from_reprompts(bundle.reprompt_history)
    script = procedural_generate(
        beats,
        bundle.n_drones,
        seed=backend.seed,
        style=resolved,
        volume=volume,
        initial_positions=np.asarray(bundle.initial_positions, dtype=float),
        min_separation=min_separation,
    )
    return (
        f"Here is a {resolved} choreography for {bundle.n_drones} drones.\n"
        + script_to_json(script)
        + "\nEnjoy the show!"
    )


def request_choreography(
    bundle: PromptBundle,
    backend: GenBackendConfig,
    volume: FlightVolume = FlightVolume(),
    min_separation: float = 0.5,
    style: str | None = None,
) -> str:
    """Query the configured backend and return its full text response."""
    if backend.kind == "procedural":
        return _procedural_response(bundle, backend, volume, min_separation, style)

    messages = [{"role": "system", "content": bundle.system_text},
                {"role": "user", "content": bundle.user_text}]
    for rp in bundle.reprompt_history:
        messages.append({"role": "user", "content": rp})
    body = json.dumps(
        {"model": backend.model_name, "messages": messages, "temperature": backend.temperature}
    ).encode()
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(backend.api_key_env_var, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    req = urllib.request.Request(
        backend.base_url.rstrip("/") + "/chat/completions", data=body, headers=headers
    )
    try:
        with urllib.request.urlopen(req, timeout=backend.timeout) as resp:
            payload = json.loads(resp.read().decode())
    except urllib.error.HTTPError as exc:
        raise BackendRefused(f"backend returned HTTP {exc.code}") from exc
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise BackendUnavailable(f"backend unreachable: {exc}") from exc
    try:
        return payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"unexpected chat-completions payload: {exc}") from exc
