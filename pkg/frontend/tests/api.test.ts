import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { fakeFetch, makeView, SONG } from "./helpers.js";

describe("ApiClient", () => {
  it("lists songs from GET /songs", async () => {
    const { impl, calls } = fakeFetch({ "GET /songs": { json: { songs: [SONG] } } });
    const client = new ApiClient("", impl);
    const songs = await client.songs();
    expect(songs).toEqual([SONG]);
    expect(calls[0]).toMatchObject({ url: "/songs", method: "GET" });
  });

  it("creates a session with the exact request body", async () => {
    const view = makeView();
    const { impl, calls } = fakeFetch({
      "POST /sessions": { status: 201, json: view },
    });
    const client = new ApiClient("", impl);
    expect(await client.createSession("click-120", 4, 7)).toEqual(view);
    expect(calls[0]?.body).toEqual({ song_id: "click-120", n_drones: 4, seed: 7 });
  });

  it("omits the seed field when not given", async () => {
    const { impl, calls } = fakeFetch({
      "POST /sessions": { status: 201, json: makeView() },
    });
    await new ApiClient("", impl).createSession("click-120", 4);
    expect(calls[0]?.body).toEqual({ song_id: "click-120", n_drones: 4 });
  });

  it("maps stage actions 1:1 onto service endpoints", async () => {
    const view = makeView({ stage: "generated", busy: null });
    const { impl, calls } = fakeFetch({
      "POST /sessions/abc123/generate": { json: view },
      "POST /sessions/abc123/filter": { status: 202, json: view },
      "POST /sessions/abc123/simulate": { status: 202, json: view },
      "POST /sessions/abc123/reprompt": { json: view },
    });
    const client = new ApiClient("", impl);
    await client.generate("abc123");
    await client.filter("abc123");
    await client.simulate("abc123");
    await client.reprompt("abc123", "fly faster");
    expect(calls.map((c) => c.url)).toEqual([
      "/sessions/abc123/generate",
      "/sessions/abc123/filter",
      "/sessions/abc123/simulate",
      "/sessions/abc123/reprompt",
    ]);
    expect(calls[3]?.body).toEqual({ text: "fly faster" });
  });

  it("surfaces the service error JSON verbatim", async () => {
    const body = {
      code: "StageOrderViolation",
      message: "stage 'filter' requires 'generated', session is 'created'",
      stage: "filter",
    };
    const { impl } = fakeFetch({
      "POST /sessions/abc123/filter": { status: 409, json: body },
    });
    const client = new ApiClient("", impl);
    const err = await client.filter("abc123").catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect((err as ApiError).status).toBe(409);
    expect((err as ApiError).body).toEqual(body);
    expect((err as ApiError).message).toContain("StageOrderViolation");
  });

  it("requests downsampled playback frames via ?fps=", async () => {
    const { impl, calls } = fakeFetch({
      "GET /sessions/abc123/artifacts/sim_log.json?fps=30": {
        json: { sim_hz: 240, fps: 30, times: [], drones: [] },
      },
    });
    const frames = await new ApiClient("", impl).simFrames("abc123");
    expect(frames.fps).toBe(30);
    expect(calls[0]?.url).toBe("/sessions/abc123/artifacts/sim_log.json?fps=30");
  });

  it("prefixes a non-empty base URL", async () => {
    const { impl, calls } = fakeFetch({
      "GET http://localhost:8000/songs": { json: { songs: [] } },
    });
    await new ApiClient("http://localhost:8000", impl).songs();
    expect(calls[0]?.url).toBe("http://localhost:8000/songs");
  });
});
