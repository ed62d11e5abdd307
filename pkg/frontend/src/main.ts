import { ApiClient, ApiError } from "./api.js";
import {
  initialPlayback,
  loadFrames,
  setCursor,
  tick,
  toggleOverlay,
  type PlaybackState,
} from "./playback.js";
import { renderFrame, DEFAULT_VIEWER } from "./render.js";
import {
  actionEnabled,
  canSubmitReprompt,
  chatHistory,
  panelStatus,
  pollUntilIdle,
  stageBadges,
  type Action,
} from "./state.js";
import { STAGES, type SessionView, type Song } from "./types.js";

const client = new ApiClient("");

interface AppState {
  songs: Song[];
  view: SessionView | null;
  promptText: string | null;
  beatTimes: number[];
  playback: PlaybackState;
  toast: string | null;
}

const state: AppState = {
  songs: [],
  view: null,
  promptText: null,
  beatTimes: [],
  playback: initialPlayback(),
  toast: null,
};

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function showToast(err: unknown): void {
  state.toast =
    err instanceof ApiError ? JSON.stringify(err.body) : err instanceof Error ? err.message : String(err);
  renderAll();
}

async function refresh(): Promise<void> {
  if (!state.view) return;
  state.view = await client.getSession(state.view.id);
  renderAll();
}

async function reloadArtifacts(): Promise<void> {
  const view = state.view;
  if (!view) return;
  if (view.artifacts.includes("prompt.json")) {
    state.promptText = (await client.prompt(view.id)).user_text;
  }
  if (view.artifacts.includes("beats.json")) {
    state.beatTimes = (await client.beats(view.id)).beats;
  }
  if (view.artifacts.includes("sim_log.json")) {
    state.playback = loadFrames(state.playback, await client.simFrames(view.id, 30));
  } else {
    state.playback = { ...state.playback, frames: null, playing: false };
  }
  renderAll();
}

async function runAction(action: Action): Promise<void> {
  const view = state.view;
  if (!view) return;
  try {
    switch (action) {
      case "generate":
        state.view = await client.generate(view.id);
        break;
      case "filter":
        state.view = await client.filter(view.id);
        state.view = await pollUntilIdle(client, view.id, (v) => {
          state.view = v;
          renderAll();
        });
        break;
      case "simulate":
        state.view = await client.simulate(view.id);
        state.view = await pollUntilIdle(client, view.id, (v) => {
          state.view = v;
          renderAll();
        });
        break;
      case "export":
        window.open(client.exportUrl(view.id), "_blank");
        break;
      default:
        return;
    }
    if (state.view?.last_error) {
      state.toast = JSON.stringify(state.view.last_error);
    }
    await reloadArtifacts();
  } catch (err) {
    showToast(err);
  }
}

function renderSessionPanel(): void {
  const select = $<HTMLSelectElement>("song-select");
  if (select.options.length !== state.songs.length) {
    select.innerHTML = "";
    for (const song of state.songs) {
      const opt = document.createElement("option");
      opt.value = song.id;
      opt.textContent = `${song.name} (${song.tempo_bpm} BPM, ${song.n_beats} beats)`;
      select.appendChild(opt);
    }
  }
  const badgeRow = $("stage-badges");
  badgeRow.innerHTML = "";
  const badges = stageBadges(state.view);
  for (const s of STAGES) {
    const span = document.createElement("span");
    span.className = `badge badge-${badges[s]}`;
    span.textContent = `${s}${badges[s] === "running" ? " …" : ""}`;
    badgeRow.appendChild(span);
  }
  for (const action of ["generate", "filter", "simulate", "export", "deploy"] as const) {
    $<HTMLButtonElement>(`btn-${action}`).disabled = !actionEnabled(state.view, action);
  }
  $("toast").textContent = state.toast ?? "";
}

function renderChatPanel(): void {
  const list = $("chat-history");
  list.innerHTML = "";
  for (const entry of chatHistory(state.promptText, state.view)) {
    const li = document.createElement("li");
    li.className = `chat-${entry.role}`;
    li.textContent = entry.text;
    list.appendChild(li);
  }
  const input = $<HTMLTextAreaElement>("reprompt-input");
  $<HTMLButtonElement>("btn-reprompt").disabled = !canSubmitReprompt(state.view, input.value);
}

function renderViewer(): void {
  for (const panel of ["filtered", "sim"] as const) {
    const el = $(`status-${panel}`);
    const status = panelStatus(state.view, panel);
    el.textContent = status === "stale" ? "stale" : status === "ready" ? "" : "not yet run";
    el.className = `panel-status panel-${status}`;
  }
  const canvas = $<HTMLCanvasElement>("viewer");
  const ctx = canvas.getContext("2d");
  const placeholder = $("viewer-placeholder");
  if (!ctx) return;
  if (!state.playback.frames) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    placeholder.style.display = "block";
    return;
  }
  placeholder.style.display = "none";
  renderFrame(ctx, state.playback, state.playback.overlays.beats ? state.beatTimes : [], {
    ...DEFAULT_VIEWER,
    width: canvas.width,
    height: canvas.height,
  });
  const scrub = $<HTMLInputElement>("scrub");
  const times = state.playback.frames.times;
  scrub.min = String(times[0] ?? 0);
  scrub.max = String(times[times.length - 1] ?? 0);
  scrub.step = "0.01";
  scrub.value = String(state.playback.cursor);
}

function renderAll(): void {
  renderSessionPanel();
  renderChatPanel();
  renderViewer();
}

function wire(): void {
  $<HTMLButtonElement>("btn-create").addEventListener("click", async () => {
    try {
      const songId = $<HTMLSelectElement>("song-select").value;
      const nDrones = Number($<HTMLInputElement>("drone-count").value);
      const seedRaw = $<HTMLInputElement>("seed").value.trim();
      state.view = await client.createSession(
        songId,
        nDrones,
        seedRaw === "" ? undefined : Number(seedRaw),
      );
      state.toast = null;
      await refresh();
      await reloadArtifacts();
    } catch (err) {
      showToast(err);
    }
  });
  for (const action of ["generate", "filter", "simulate", "export"] as const) {
    $<HTMLButtonElement>(`btn-${action}`).addEventListener("click", () => void runAction(action));
  }
  $<HTMLButtonElement>("btn-deploy").addEventListener("click", async () => {
    if (!state.view) return;
    try {
      await fetch(`/sessions/${state.view.id}/deploy`, { method: "POST" }).then(async (r) => {
        const body = await r.json();
        state.toast = JSON.stringify(body);
        renderAll();
      });
    } catch (err) {
      showToast(err);
    }
  });
  $<HTMLButtonElement>("btn-reprompt").addEventListener("click", async () => {
    const input = $<HTMLTextAreaElement>("reprompt-input");
    if (!state.view || !canSubmitReprompt(state.view, input.value)) return;
    try {
      state.view = await client.reprompt(state.view.id, input.value.trim());
      input.value = "";
      await reloadArtifacts();
    } catch (err) {
      showToast(err);
    }
  });
  $<HTMLTextAreaElement>("reprompt-input").addEventListener("input", renderChatPanel);
  $<HTMLInputElement>("scrub").addEventListener("input", (ev) => {
    state.playback = setCursor(state.playback, Number((ev.target as HTMLInputElement).value));
    renderViewer();
  });
  $<HTMLButtonElement>("btn-play").addEventListener("click", () => {
    state.playback = { ...state.playback, playing: !state.playback.playing };
  });
  for (const key of ["beats", "envelopes", "waypoints"] as const) {
    $<HTMLInputElement>(`overlay-${key}`).addEventListener("change", () => {
      state.playback = toggleOverlay(state.playback, key);
      renderViewer();
    });
  }

  let last = performance.now();
  const loop = (now: number) => {
    const dt = (now - last) / 1000;
    last = now;
    if (state.playback.playing) {
      state.playback = tick(state.playback, dt);
      renderViewer();
    }
    requestAnimationFrame(loop);
  };
  requestAnimationFrame(loop);
}

async function boot(): Promise<void> {
  try {
    state.songs = await client.songs();
  } catch (err) {
    showToast(err);
  }
  wire();
  renderAll();
}

if (typeof document !== "undefined" && document.getElementById("btn-create")) {
  void boot();
}
