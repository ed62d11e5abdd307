import type { ApiClient } from "./api.js";
import { STAGES, type SessionView, type Stage } from "./types.js";

export type Action =
  | "generate"
  | "filter"
  | "simulate"
  | "reprompt"
  | "export"
  | "deploy";

const ACTION_PREREQ: Record<Action, Stage> = {
  generate: "created",
  filter: "generated",
  simulate: "filtered",
  reprompt: "generated",
  export: "filtered",
  deploy: "filtered",
};

export function stageIndex(stage: Stage): number {
  return STAGES.indexOf(stage);
}

/** Whether a button may fire: prerequisite stage reached and nothing running. */
export function actionEnabled(view: SessionView | null, action: Action): boolean {
  if (!view || view.busy !== null) return false;
  return stageIndex(view.stage) >= stageIndex(ACTION_PREREQ[action]);
}

export type PanelStatus = "empty" | "ready" | "stale";

/** Artifact each result panel is rendered from. */
const PANEL_ARTIFACT = {
  script: "clean_script.json",
  filtered: "filtered.json",
  sim: "sim_log.json",
} as const;

export type Panel = keyof typeof PANEL_ARTIFACT;

/**
 * Panel status as a pure function of the session view.
 *
 * Re-prompting regenerates the script and deletes downstream artifacts, so a
 * panel whose artifact is missing while re-prompts exist is shown as stale
 * (its last rendering no longer matches the current script) rather than
 * merely empty.
 */
export function panelStatus(view: SessionView | null, panel: Panel): PanelStatus {
  if (!view) return "empty";
  if (view.artifacts.includes(PANEL_ARTIFACT[panel])) return "ready";
  if (view.reprompts.length > 0 && stageIndex(view.stage) >= stageIndex("generated")) {
    return "stale";
  }
  return "empty";
}

export type StageBadge = "done" | "running" | "pending";

export function stageBadges(view: SessionView | null): Record<Stage, StageBadge> {
  const out = {} as Record<Stage, StageBadge>;
  for (const s of STAGES) {
    if (!view) {
      out[s] = "pending";
    } else if (view.busy && s === nextStage(view.busy)) {
      out[s] = "running";
    } else {
      out[s] = stageIndex(view.stage) >= stageIndex(s) ? "done" : "pending";
    }
  }
  return out;
}

function nextStage(busyAction: string): Stage | null {
  switch (busyAction) {
    case "filter":
      return "filtered";
    case "simulate":
      return "simulated";
    case "generate":
      return "generated";
    default:
      return null;
  }
}

export interface ChatEntry {
  role: "prompt" | "user";
  text: string;
}

/** Initial prompt followed by the ordered re-prompt history. */
export function chatHistory(promptText: string | null, view: SessionView | null): ChatEntry[] {
  const out: ChatEntry[] = [];
  if (promptText !== null) out.push({ role: "prompt", text: promptText });
  for (const text of view?.reprompts ?? []) out.push({ role: "user", text });
  return out;
}

/** Client-side guard: empty re-prompts never reach the service. */
export function canSubmitReprompt(view: SessionView | null, text: string): boolean {
  return text.trim().length > 0 && actionEnabled(view, "reprompt");
}

export interface PollOptions {
  intervalMs?: number;
  sleep?: (ms: number) => Promise<void>;
  maxPolls?: number;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

/**
 * Poll the session at 1 Hz while a background stage runs; resolves with the
 * first idle view. `onView` fires for every intermediate view.
 */
export async function pollUntilIdle(
  client: ApiClient,
  sessionId: string,
  onView: (view: SessionView) => void,
  opts: PollOptions = {},
): Promise<SessionView> {
  const { intervalMs = 1000, sleep = defaultSleep, maxPolls = 600 } = opts;
  for (let i = 0; i < maxPolls; i++) {
    const view = await client.getSession(sessionId);
    onView(view);
    if (view.busy === null) return view;
    await sleep(intervalMs);
  }
  throw new Error(`session ${sessionId} still busy after ${maxPolls} polls`);
}
