import numpy as np
import pytest

from swarmchor.audio import BeatGrid
from swarmchor.config import PipelineConfig
from swarmchor.script import DroneTrack, Waypoint, WaypointScript


@pytest.fixture
def cfg() -> PipelineConfig:
    return PipelineConfig()


def make_beats(n: int = 8, period: float = 0.5, bpm: float = 120.0) -> BeatGrid:
    return BeatGrid(
        beat_times=period * np.arange(1, n + 1), tempo_bpm=bpm, source="loaded"
    )


def make_script(
    positions: np.ndarray,  # (N, B, 3)
    beat_times: np.ndarray | None = None,
    initial_positions: np.ndarray | None = None,
) -> WaypointScript:
    positions = np.asarray(positions, dtype=float)
    n, b, _ = positions.shape
    if beat_times is None:
        beat_times = 0.5 * np.arange(1, b + 1)
    if initial_positions is None:
        initial_positions = positions[:, 0, :]
    drones = tuple(
        DroneTrack(
            drone_id=i,
            waypoints=tuple(
                Waypoint(t=float(beat_times[k]), position=positions[i, k])
                for k in range(b)
            ),
        )
        for i in range(n)
    )
    return WaypointScript(drones=drones, initial_positions=np.asarray(initial_positions, float))


def make_click_clip(bpm: float, duration: float = 12.0, rate: int = 22050):
    """Synthetic click track: short decaying noise-free bursts on each beat."""
    from swarmchor.audio import AudioClip

    n = int(duration * rate)
    samples = np.zeros(n)
    period = 60.0 / bpm
    t = period
    burst_len = int(0.01 * rate)
    burst = np.sin(2 * np.pi * 1000.0 * np.arange(burst_len) / rate) * np.exp(
        -np.arange(burst_len) / (0.002 * rate)
    )
    while t < duration - 0.05:
        k = int(t * rate)
        samples[k : k + burst_len] += burst[: n - k]
        t += period
    return AudioClip(sample_rate=rate, samples=samples)
