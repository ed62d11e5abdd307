import type {
  BeatsArtifact,
  PromptArtifact,
  ServiceError,
  SessionView,
  SimLogArtifact,
  Song,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the service's JSON body verbatim, for the toast region. */
export class ApiError extends Error {
  readonly status: number;
  readonly body: ServiceError;

  constructor(status: number, body: ServiceError) {
    super(`${body.code}: ${body.message}`);
    this.name = "ApiError";
    this.status = status;
    this.body = body;
  }
}

async function asApiError(res: Response): Promise<ApiError> {
  let body: ServiceError;
  try {
    body = (await res.json()) as ServiceError;
  } catch {
    body = { code: `HTTP${res.status}`, message: res.statusText, stage: "" };
  }
  return new ApiError(res.status, body);
}

/** Thin 1:1 client over the service endpoints; every method maps to one route. */
export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, init);
    if (!res.ok) throw await asApiError(res);
    return (await res.json()) as T;
  }

  private post<T>(path: string, body?: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  }

  async songs(): Promise<Song[]> {
    const data = await this.request<{ songs: Song[] }>("/songs");
    return data.songs;
  }

  createSession(songId: string, nDrones: number, seed?: number): Promise<SessionView> {
    return this.post<SessionView>("/sessions", {
      song_id: songId,
      n_drones: nDrones,
      ...(seed === undefined ? {} : { seed }),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${id}`);
  }

  generate(id: string): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/generate`);
  }

  filter(id: string): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/filter`);
  }

  simulate(id: string): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/simulate`);
  }

  reprompt(id: string, text: string): Promise<SessionView> {
    return this.post<SessionView>(`/sessions/${id}/reprompt`, { text });
  }

  artifact<T = unknown>(id: string, name: string, fps?: number): Promise<T> {
    const query = fps === undefined ? "" : `?fps=${fps}`;
    return this.request<T>(`/sessions/${id}/artifacts/${name}${query}`);
  }

  beats(id: string): Promise<BeatsArtifact> {
    return this.artifact<BeatsArtifact>(id, "beats.json");
  }

  prompt(id: string): Promise<PromptArtifact> {
    return this.artifact<PromptArtifact>(id, "prompt.json");
  }

  /** Playback frames, downsampled server-side (default 30 fps). */
  simFrames(id: string, fps = 30): Promise<SimLogArtifact> {
    return this.artifact<SimLogArtifact>(id, "sim_log.json", fps);
  }

  async exportBundle(id: string): Promise<ArrayBuffer> {
    const res = await this.fetchImpl(`${this.baseUrl}/sessions/${id}/export`);
    if (!res.ok) throw await asApiError(res);
    return res.arrayBuffer();
  }

  exportUrl(id: string): string {
    return `${this.baseUrl}/sessions/${id}/export`;
  }
}
