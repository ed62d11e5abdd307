import {
  beatMarkers,
  droneColor,
  pathSeries,
  positionAt,
  type PlaybackState,
} from "./playback.js";

/** Subset of CanvasRenderingContext2D the renderer needs; mockable in tests. */
export interface Canvas2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  ellipse(
    x: number,
    y: number,
    rx: number,
    ry: number,
    rot: number,
    a0: number,
    a1: number,
  ): void;
  stroke(): void;
  fill(): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  globalAlpha: number;
}

export interface ViewerOptions {
  width: number;
  height: number;
  /** top-down ellipsoid envelope radius in x/y, meters */
  envelopeRadiusXY: number;
  beatDotRadius: number;
  droneDotRadius: number;
}

export const DEFAULT_VIEWER: ViewerOptions = {
  width: 640,
  height: 480,
  envelopeRadiusXY: 0.25,
  beatDotRadius: 5,
  droneDotRadius: 3,
};

export interface WorldBounds {
  xMin: number;
  xMax: number;
  yMin: number;
  yMax: number;
}

/** Bounding box of all drone paths in the x-y plane, padded for margins. */
export function fitBounds(frames: { drones: { p: number[][] }[] }, pad = 0.5): WorldBounds {
  let xMin = Infinity;
  let xMax = -Infinity;
  let yMin = Infinity;
  let yMax = -Infinity;
  for (const dr of frames.drones) {
    for (const p of dr.p) {
      xMin = Math.min(xMin, p[0]!);
      xMax = Math.max(xMax, p[0]!);
      yMin = Math.min(yMin, p[1]!);
      yMax = Math.max(yMax, p[1]!);
    }
  }
  if (!Number.isFinite(xMin)) return { xMin: -1, xMax: 1, yMin: -1, yMax: 1 };
  return { xMin: xMin - pad, xMax: xMax + pad, yMin: yMin - pad, yMax: yMax + pad };
}

export interface Projection {
  toPx(p: number[]): [number, number];
  /** pixels per meter (isotropic) */
  scale: number;
}

/** Isotropic top-down projection centered in the canvas; y points up. */
export function makeProjection(bounds: WorldBounds, width: number, height: number): Projection {
  const spanX = Math.max(1e-9, bounds.xMax - bounds.xMin);
  const spanY = Math.max(1e-9, bounds.yMax - bounds.yMin);
  const scale = Math.min(width / spanX, height / spanY);
  const cx = (bounds.xMin + bounds.xMax) / 2;
  const cy = (bounds.yMin + bounds.yMax) / 2;
  return {
    scale,
    toPx: (p) => [width / 2 + (p[0]! - cx) * scale, height / 2 - (p[1]! - cy) * scale],
  };
}

export interface RenderCounts {
  paths: number;
  beatDots: number;
  droneDots: number;
  envelopes: number;
}

/**
 * Draw one top-down frame: per-drone paths with time-gradient saturation,
 * beat dots, current drone positions, and (when toggled) the clearance
 * envelope cross-section at the current cursor only.
 */
export function renderFrame(
  ctx: Canvas2D,
  state: PlaybackState,
  beatTimes: number[],
  opts: ViewerOptions = DEFAULT_VIEWER,
): RenderCounts {
  const counts: RenderCounts = { paths: 0, beatDots: 0, droneDots: 0, envelopes: 0 };
  ctx.clearRect(0, 0, opts.width, opts.height);
  const frames = state.frames;
  if (!frames || frames.times.length === 0) return counts;
  const proj = makeProjection(fitBounds(frames), opts.width, opts.height);
  const n = frames.drones.length;

  for (let d = 0; d < n; d++) {
    // path, drawn in short segments so saturation can track time progress
    const series = pathSeries(frames, d);
    ctx.lineWidth = 1.5;
    ctx.globalAlpha = 0.9;
    for (let k = 1; k < series.length; k++) {
      const [x0, y0] = proj.toPx(series[k - 1]!.p);
      const [x1, y1] = proj.toPx(series[k]!.p);
      ctx.strokeStyle = droneColor(d, n, series[k]!.progress);
      ctx.beginPath();
      ctx.moveTo(x0, y0);
      ctx.lineTo(x1, y1);
      ctx.stroke();
    }
    counts.paths += 1;
  }

  if (state.overlays.beats) {
    for (const marker of beatMarkers(frames, beatTimes)) {
      const [x, y] = proj.toPx(marker.p);
      ctx.fillStyle = droneColor(marker.droneIdx, n, 1);
      ctx.globalAlpha = 0.8;
      ctx.beginPath();
      ctx.ellipse(x, y, opts.beatDotRadius, opts.beatDotRadius, 0, 0, 2 * Math.PI);
      ctx.fill();
      counts.beatDots += 1;
    }
  }

  for (let d = 0; d < n; d++) {
    const p = positionAt(frames, d, state.cursor);
    const [x, y] = proj.toPx(p);
    ctx.fillStyle = droneColor(d, n, 1);
    ctx.globalAlpha = 1;
    ctx.beginPath();
    ctx.ellipse(x, y, opts.droneDotRadius, opts.droneDotRadius, 0, 0, 2 * Math.PI);
    ctx.fill();
    counts.droneDots += 1;

    if (state.overlays.envelopes) {
      const r = opts.envelopeRadiusXY * proj.scale;
      ctx.strokeStyle = droneColor(d, n, 0.5);
      ctx.globalAlpha = 0.6;
      ctx.lineWidth = 1;
      ctx.beginPath();
      ctx.ellipse(x, y, r, r, 0, 0, 2 * Math.PI);
      ctx.stroke();
      counts.envelopes += 1;
    }
  }
  return counts;
}
