import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { beatMarkers } from "../src/playback.js";
import { actionEnabled, panelStatus, pollUntilIdle, stageBadges } from "../src/state.js";
import type { SessionView } from "../src/types.js";

// Full pipeline click-through against a real local service instance with the
// procedural generation backend (the service default).

const PORT = 8123 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let sessionsDir: string;
const client = new ApiClient(BASE);

beforeAll(async () => {
  sessionsDir = mkdtempSync(join(tmpdir(), "swarmchor-ui-e2e-"));
  server = spawn(
    process.env.PYTHON ?? "python3",
    [
      "-c",
      "import sys, uvicorn; from swarmchor.service import create_app; " +
        `uvicorn.run(create_app(sessions_dir=sys.argv[1]), host='127.0.0.1', port=${PORT}, log_level='warning')`,
      sessionsDir,
    ],
    { stdio: ["ignore", "inherit", "inherit"] },
  );
  const deadline = Date.now() + 30_000;
  for (;;) {
    try {
      await client.songs();
      return;
    } catch {
      if (Date.now() > deadline) throw new Error("service did not come up");
      await new Promise((r) => setTimeout(r, 250));
    }
  }
}, 40_000);

afterAll(() => {
  server?.kill();
  if (sessionsDir) rmSync(sessionsDir, { recursive: true, force: true });
});

describe("UI end-to-end against a live service", () => {
  let view: SessionView;

  it("lists the song catalog on fresh load", async () => {
    const songs = await client.songs();
    expect(songs.map((s) => s.id)).toContain("click-120");
  });

  it("rejects filter before generate with the service error shown verbatim", async () => {
    view = await client.createSession("click-120", 3, 11);
    expect(view.stage).toBe("created");
    const err = await client.filter(view.id).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).body.code).toBe("StageOrderViolation");
  });

  it("drives generate -> filter -> simulate with stage badges tracking", async () => {
    expect(actionEnabled(view, "generate")).toBe(true);
    view = await client.generate(view.id);
    expect(view.stage).toBe("generated");
    expect(stageBadges(view).generated).toBe("done");

    view = await client.filter(view.id);
    view = await pollUntilIdle(client, view.id, () => {}, {
      sleep: (ms) => new Promise((r) => setTimeout(r, Math.min(ms, 200))),
    });
    expect(view.last_error).toBeNull();
    expect(view.stage).toBe("filtered");

    view = await client.simulate(view.id);
    view = await pollUntilIdle(client, view.id, () => {}, {
      sleep: (ms) => new Promise((r) => setTimeout(r, Math.min(ms, 200))),
    });
    expect(view.last_error).toBeNull();
    expect(view.stage).toBe("simulated");
    expect(stageBadges(view).simulated).toBe("done");
    expect(panelStatus(view, "filtered")).toBe("ready");
    expect(panelStatus(view, "sim")).toBe("ready");
  }, 120_000);

  it("beat-dot counts match the service beat grid", async () => {
    const beats = await client.beats(view.id);
    const frames = await client.simFrames(view.id, 30);
    expect(frames.fps).toBeLessThanOrEqual(30);
    expect(frames.drones).toHaveLength(3);

    const tEnd = frames.times[frames.times.length - 1]!;
    const inRange = beats.beats.filter((t) => t <= tEnd + 1e-6);
    const markers = beatMarkers(frames, beats.beats);
    expect(markers).toHaveLength(3 * inRange.length);
    // the simulation covers (nearly) the whole song
    expect(inRange.length).toBeGreaterThanOrEqual(beats.beats.length - 1);
  });

  it("re-prompt regenerates and marks downstream panels stale", async () => {
    view = await client.reprompt(view.id, "fly faster");
    expect(view.stage).toBe("generated");
    expect(view.reprompts).toEqual(["fly faster"]);
    expect(panelStatus(view, "filtered")).toBe("stale");
    expect(panelStatus(view, "sim")).toBe("stale");
    expect(actionEnabled(view, "export")).toBe(false); // downstream invalidated
  }, 60_000);

  it("re-filters and exports a bundle", async () => {
    view = await client.filter(view.id);
    view = await pollUntilIdle(client, view.id, () => {}, {
      sleep: (ms) => new Promise((r) => setTimeout(r, Math.min(ms, 200))),
    });
    expect(view.stage).toBe("filtered");
    const bundle = await client.exportBundle(view.id);
    expect(bundle.byteLength).toBeGreaterThan(1000);
    // ZIP magic
    const head = new Uint8Array(bundle.slice(0, 2));
    expect([...head]).toEqual([0x50, 0x4b]);
  }, 120_000);
});
