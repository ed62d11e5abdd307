/** Wire types for the swarmchor HTTP service. */

export type Stage = "created" | "generated" | "filtered" | "simulated";

export const STAGES: readonly Stage[] = ["created", "generated", "filtered", "simulated"];

export interface Song {
  id: string;
  name: string;
  genre: string;
  mood: string;
  n_beats: number;
  tempo_bpm: number;
}

export interface ServiceError {
  code: string;
  message: string;
  stage: string;
}

export interface StageError extends ServiceError {}

export interface SessionView {
  id: string;
  song: Song;
  n_drones: number;
  seed: number;
  stage: Stage;
  busy: string | null;
  reprompts: string[];
  last_error: StageError | null;
  created_at: number;
  analytics: Record<string, unknown>;
  validation: Record<string, unknown>;
  artifacts: string[];
}

export interface BeatsArtifact {
  beats: number[];
  tempo_bpm: number;
  source: string;
}

export interface SimDrone {
  id: number;
  /** [k][xyz] positions, one row per frame */
  p: number[][];
  /** [k][xyz] commanded reference, one row per frame */
  ref: number[][];
}

export interface SimLogArtifact {
  sim_hz: number;
  fps: number;
  times: number[];
  drones: SimDrone[];
}

export interface PromptArtifact {
  system_text: string;
  user_text: string;
  reprompt_history: string[];
  constraints_echo: Record<string, unknown>;
  beat_times: number[];
  n_drones: number;
  initial_positions: number[][];
}
