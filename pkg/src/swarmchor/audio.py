"""Beat analysis: WAV decoding, onset strength, tempo, and beat tracking.

Self-contained replacement for an external audio-analysis dependency:
spectral-flux onset envelope, autocorrelation tempo with a log-normal prior,
and dynamic-programming beat tracking with a squared-log interval penalty.
Only RIFF PCM WAV (8/16/24-bit, mono or stereo) is decoded.
"""
from __future__ import annotations

import json
import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import BeatAnalysisConfig
from .errors import EmptyAudio, InsufficientAudio, NonMonotonicBeats, ParseError

TEMPO_MIN = 30.0
TEMPO_MAX = 300.0


@dataclass(frozen=True)
class AudioClip:
    """Mono audio samples normalized to [-1, 1]."""

    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be mono (1-D)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class BeatGrid:
    """Strictly increasing beat timestamps plus the estimated tempo."""

    beat_times: np.ndarray
    tempo_bpm: float
    source: str  # "analyzed" | "loaded"

    def __post_init__(self):
        times = np.asarray(self.beat_times, dtype=float)
        if len(times) and not np.all(np.diff(times) > 0):
            raise NonMonotonicBeats("beat times must be strictly increasing")
        if not TEMPO_MIN <= self.tempo_bpm <= TEMPO_MAX:
            raise ValueError(f"tempo {self.tempo_bpm} outside [{TEMPO_MIN}, {TEMPO_MAX}]")
        object.__setattr__(self, "beat_times", times)

    def __len__(self) -> int:
        return len(self.beat_times)

    def to_dict(self) -> dict:
        return {
            "beats": [round(float(t), 6) for t in self.beat_times],
            "tempo_bpm": round(float(self.tempo_bpm), 4),
            "source": self.source,
        }


def load_wav(path: str | Path) -> AudioClip:
    """Decode a PCM WAV file; stereo is downmixed by channel averaging."""
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ParseError(f"not a PCM WAV file: {path}: {exc}") from exc
    if width == 1:
        data = np.frombuffer(raw, dtype=np.uint8).astype(float)
        data = (data - 128.0) / 128.0
    elif width == 2:
        data = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    elif width == 3:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3)
        vals = (
            b[:, 0].astype(np.int32)
            | (b[:, 1].astype(np.int32) << 8)
            | (b[:, 2].astype(np.int32) << 16)
        )
        vals = np.where(vals >= 1 << 23, vals - (1 << 24), vals)
        data = vals.astype(float) / float(1 << 23)
    else:
        raise ParseError(f"unsupported PCM sample width {width * 8} bit")
    if n_channels > 1:
        data = data.reshape(-1, n_channels).mean(axis=1)
    return AudioClip(sample_rate=rate, samples=data)


def compute_onset_envelope(clip: AudioClip, frame: int = 2048, hop: int = 512) -> np.ndarray:
    """Half-wave-rectified spectral flux, one value per hop.

    Frames are centered (zero-padded by frame//2) so the envelope stays
    roughly aligned with the acoustic event.
    """
    if not frame >= hop > 0:
        raise ValueError("require frame >= hop > 0")
    n = len(clip.samples)
    if n < frame:
        raise EmptyAudio("clip shorter than one analysis frame")
    n_frames = int(np.ceil(n / hop))
    padded = np.pad(clip.samples, (frame // 2, frame), mode="constant")
    window = np.hanning(frame)
    # all frames at once: (n_frames, frame) strided view would also work
    idx = np.arange(frame)[None, :] + hop * np.arange(n_frames)[:, None]
    mags = np.abs(np.fft.rfft(padded[idx] * window, axis=1))
    flux = np.zeros(n_frames)
    flux[1:] = np.maximum(0.0, mags[1:] - mags[:-1]).sum(axis=1)
    return flux


def estimate_tempo(
    onset_env: np.ndarray,
    hop_seconds: float,
    prior_bpm: float = 120.0,
    prior_log2_std: float = 1.0,
) -> float:
    """BPM maximizing onset autocorrelation over [30, 300] BPM.

    A log-normal prior centered at ``prior_bpm`` weights the autocorrelation;
    the winning lag is refined by parabolic interpolation. Ties break toward
    the smaller BPM (larger lag).
    """
    env = np.asarray(onset_env, dtype=float)
    if len(env) * hop_seconds < 2.0:
        raise InsufficientAudio("need at least 2 s of onset envelope")
    if not np.any(env > 0):
        raise InsufficientAudio("onset envelope is identically zero")
    centered = env - env.mean()
    ac = np.correlate(centered, centered, mode="full")[len(env) - 1 :]
    lags = np.arange(1, len(ac))
    bpms = 60.0 / (lags * hop_seconds)
    score = np.where(
        (bpms >= TEMPO_MIN) & (bpms <= TEMPO_MAX),
        ac[1:] * np.exp(-0.5 * (np.log2(bpms / prior_bpm) / prior_log2_std) ** 2),
        -np.inf,
    )
    # argmax returns the first (smallest-lag) maximum; prefer the larger lag
    # on exact ties, i.e. the smaller BPM
    best = int(np.argmax(score))
    ties = np.flatnonzero(score == score[best])
    best = int(ties[-1])
    lag = float(lags[best])
    if 1 <= best < len(score) - 1 and np.isfinite(score[best - 1]) and np.isfinite(score[best + 1]):
        a, b, c = score[best - 1], score[best], score[best + 1]
        denom = a - 2 * b + c
        if denom < 0:
            lag += float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
    return float(np.clip(60.0 / (lag * hop_seconds), TEMPO_MIN, TEMPO_MAX))


def track_beats(
    onset_env: np.ndarray,
    tempo_bpm: float,
    hop_seconds: float,
    dp_lambda: float = 100.0,
) -> BeatGrid:
    """Dynamic-programming beat tracking around a fixed tempo estimate.

    Maximizes total onset strength at beats minus ``dp_lambda`` times the
    squared log-ratio of each inter-beat interval to the tempo period.
    """
    if not TEMPO_MIN <= tempo_bpm <= TEMPO_MAX:
        raise ValueError(f"tempo {tempo_bpm} outside [{TEMPO_MIN}, {TEMPO_MAX}]")
    env = np.asarray(onset_env, dtype=float)
    if len(env) * hop_seconds < 2.0:
        raise InsufficientAudio("need at least 2 s of onset envelope")
    period = 60.0 / tempo_bpm / hop_seconds
    std = env.std()
    norm = env / std if std > 0 else env
    n = len(env)
    score = norm.copy()
    backlink = np.full(n, -1, dtype=int)
    lo_w = max(1, int(round(period / 2)))
    hi_w = max(lo_w + 1, int(round(period * 2)))
    for t in range(n):
        prev = np.arange(max(0, t - hi_w), t - lo_w + 1)
        if len(prev) == 0:
            continue
        intervals = t - prev
        cand = score[prev] - dp_lambda * np.log(intervals / period) ** 2
        j = int(np.argmax(cand))
        if cand[j] > 0:
            score[t] += cand[j]
            backlink[t] = prev[j]
    if not np.any(norm > 0):
        return BeatGrid(beat_times=np.array([]), tempo_bpm=tempo_bpm, source="analyzed")
    t = int(np.argmax(score))
    frames = []
    while t >= 0:
        frames.append(t)
        t = backlink[t]
    times = np.array(frames[::-1], dtype=float) * hop_seconds
    return BeatGrid(beat_times=times, tempo_bpm=tempo_bpm, source="analyzed")


def analyze_clip(clip: AudioClip, cfg: BeatAnalysisConfig = BeatAnalysisConfig()) -> BeatGrid:
    """Full chain: onset envelope -> tempo -> DP beat tracking."""
    env = compute_onset_envelope(clip, frame=cfg.frame, hop=cfg.hop)
    hop_seconds = cfg.hop / clip.sample_rate
    tempo = estimate_tempo(
        env, hop_seconds, prior_bpm=cfg.tempo_prior_bpm, prior_log2_std=cfg.tempo_prior_log2_std
    )
    return track_beats(env, tempo, hop_seconds, dp_lambda=cfg.dp_lambda)


def _tempo_from_intervals(times: np.ndarray) -> float:
    if len(times) < 2:
        return 120.0
    median = float(np.median(np.diff(times)))
    return float(np.clip(60.0 / median, TEMPO_MIN, TEMPO_MAX))


def load_beat_file(path: str | Path) -> BeatGrid:
    """Load beats from JSON: either ``[0.5, 1.0, ...]`` or
    ``{"beats": [...], "tempo_bpm": 120.0}``."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"cannot parse beat file {path}: {exc}") from exc
    if isinstance(data, list):
        beats, tempo = data, None
    elif isinstance(data, dict) and "beats" in data:
        beats, tempo = data["beats"], data.get("tempo_bpm")
    else:
        raise ParseError("beat file must be a JSON array or an object with a 'beats' key")
    try:
        times = np.asarray([float(b) for b in beats], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"non-numeric beat entry: {exc}") from exc
    if len(times) and not np.all(np.diff(times) > 0):
        raise NonMonotonicBeats("beat times must be strictly increasing")
    if tempo is None:
        tempo = _tempo_from_intervals(times)
    return BeatGrid(beat_times=times, tempo_bpm=float(tempo), source="loaded")
