import type { SessionView, SimLogArtifact, Song } from "../src/types.js";

export const SONG: Song = {
  id: "click-120",
  name: "Click track 120 BPM",
  genre: "synthetic",
  mood: "steady",
  n_beats: 40,
  tempo_bpm: 120,
};

export function makeView(overrides: Partial<SessionView> = {}): SessionView {
  return {
    id: "abc123",
    song: SONG,
    n_drones: 4,
    seed: 7,
    stage: "created",
    busy: null,
    reprompts: [],
    last_error: null,
    created_at: 0,
    analytics: {},
    validation: {},
    artifacts: ["beats.json"],
    ...overrides,
  };
}

/** Straight-line frames: drone d moves from (d, 0, 1) to (d, 1, 1) over 2 s. */
export function makeFrames(nDrones = 2, nFrames = 21): SimLogArtifact {
  const times = Array.from({ length: nFrames }, (_, k) => (2 * k) / (nFrames - 1));
  return {
    sim_hz: (nFrames - 1) / 2,
    fps: (nFrames - 1) / 2,
    times,
    drones: Array.from({ length: nDrones }, (_, d) => ({
      id: d,
      p: times.map((t) => [d, t / 2, 1]),
      ref: times.map((t) => [d, t / 2, 1]),
    })),
  };
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

/** fetch stub returning canned JSON responses keyed by "METHOD path". */
export function fakeFetch(routes: Record<string, { status?: number; json: unknown }>) {
  const calls: RecordedCall[] = [];
  const impl = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    calls.push({ url, method, body: init?.body ? JSON.parse(String(init.body)) : undefined });
    const key = `${method} ${url}`;
    const route = routes[key];
    if (!route) {
      return new Response(
        JSON.stringify({ code: "SessionNotFound", message: `no route ${key}`, stage: "" }),
        { status: 404, headers: { "content-type": "application/json" } },
      );
    }
    return new Response(JSON.stringify(route.json), {
      status: route.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { impl, calls };
}
