import type { SimLogArtifact } from "./types.js";

export interface OverlayToggles {
  beats: boolean;
  envelopes: boolean;
  waypoints: boolean;
}

export interface PlaybackState {
  frames: SimLogArtifact | null;
  /** seconds, clamped to [t0, tEnd] of the loaded frames */
  cursor: number;
  playing: boolean;
  rate: number;
  overlays: OverlayToggles;
}

export function initialPlayback(): PlaybackState {
  return {
    frames: null,
    cursor: 0,
    playing: false,
    rate: 1,
    overlays: { beats: true, envelopes: false, waypoints: true },
  };
}

export function duration(frames: SimLogArtifact | null): number {
  if (!frames || frames.times.length === 0) return 0;
  return frames.times[frames.times.length - 1]!;
}

export function clampCursor(frames: SimLogArtifact | null, t: number): number {
  if (!frames || frames.times.length === 0) return 0;
  const lo = frames.times[0]!;
  const hi = frames.times[frames.times.length - 1]!;
  return Math.min(hi, Math.max(lo, t));
}

export function setCursor(state: PlaybackState, t: number): PlaybackState {
  return { ...state, cursor: clampCursor(state.frames, t) };
}

export function loadFrames(state: PlaybackState, frames: SimLogArtifact): PlaybackState {
  return { ...state, frames, cursor: frames.times.length ? frames.times[0]! : 0, playing: false };
}

export function toggleOverlay(state: PlaybackState, key: keyof OverlayToggles): PlaybackState {
  return { ...state, overlays: { ...state.overlays, [key]: !state.overlays[key] } };
}

export function tick(state: PlaybackState, dtSeconds: number): PlaybackState {
  if (!state.playing || !state.frames) return state;
  const t = state.cursor + dtSeconds * state.rate;
  const end = duration(state.frames);
  if (t >= end) return { ...state, cursor: end, playing: false };
  return { ...state, cursor: clampCursor(state.frames, t) };
}

/** Index of the last frame at or before time t (frames.times is sorted). */
export function frameIndexAt(frames: SimLogArtifact, t: number): number {
  const times = frames.times;
  if (times.length === 0) return 0;
  let lo = 0;
  let hi = times.length - 1;
  while (lo < hi) {
    const mid = (lo + hi + 1) >> 1;
    if (times[mid]! <= t) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

/** Linear interpolation of a drone position at time t. */
export function positionAt(frames: SimLogArtifact, droneIdx: number, t: number): number[] {
  const times = frames.times;
  const p = frames.drones[droneIdx]!.p;
  const i = frameIndexAt(frames, t);
  if (i >= times.length - 1) return p[p.length - 1]!.slice();
  const t0 = times[i]!;
  const t1 = times[i + 1]!;
  const a = t1 > t0 ? Math.min(1, Math.max(0, (t - t0) / (t1 - t0))) : 0;
  const p0 = p[i]!;
  const p1 = p[i + 1]!;
  return [0, 1, 2].map((ax) => p0[ax]! + a * (p1[ax]! - p0[ax]!));
}

export interface BeatMarker {
  droneIdx: number;
  beatIdx: number;
  t: number;
  p: number[];
}

/**
 * One large dot per drone per beat that falls inside the loaded frame range.
 */
export function beatMarkers(frames: SimLogArtifact, beatTimes: number[]): BeatMarker[] {
  const out: BeatMarker[] = [];
  if (frames.times.length === 0) return out;
  const t0 = frames.times[0]!;
  const tEnd = frames.times[frames.times.length - 1]!;
  const eps = 1e-6;
  beatTimes.forEach((t, beatIdx) => {
    if (t < t0 - eps || t > tEnd + eps) return;
    const tc = clampCursor(frames, t);
    for (let d = 0; d < frames.drones.length; d++) {
      out.push({ droneIdx: d, beatIdx, t, p: positionAt(frames, d, tc) });
    }
  });
  return out;
}

export interface PathPoint {
  p: number[];
  /** 0..1 position of this sample in the trajectory, drives color saturation */
  progress: number;
}

/** Per-drone polyline with time-gradient progress for saturation rendering. */
export function pathSeries(frames: SimLogArtifact, droneIdx: number): PathPoint[] {
  const times = frames.times;
  const span = duration(frames) - (times[0] ?? 0);
  return frames.drones[droneIdx]!.p.map((p, k) => ({
    p,
    progress: span > 0 ? (times[k]! - times[0]!) / span : 0,
  }));
}

export function droneColor(droneIdx: number, nDrones: number, saturation = 1): string {
  const hue = Math.round((360 * droneIdx) / Math.max(1, nDrones));
  const s = Math.round(25 + 75 * Math.min(1, Math.max(0, saturation)));
  return `hsl(${hue}, ${s}%, 45%)`;
}
