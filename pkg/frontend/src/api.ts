/** Typed client for the annotation service HTTP JSON API.
 *
 * Every response body here is a direct mirror of what the service sends;
 * nothing is reshaped client-side so a refresh can always rebuild the
 * exact view from these calls alone.
 */

export type Phase = "labeling" | "extending" | "done";

export interface ChunkJson {
  id: string;
  transcript_id: string;
  span_start: number;
  span_end: number;
  text: string;
  token_count: number;
  strategy: string;
}

export interface TurnJson {
  speaker: string;
  text: string;
}

export interface ContextJson {
  before: TurnJson | null;
  after: TurnJson | null;
}

export interface CandidateJson {
  chunk: ChunkJson;
  context: ContextJson | null;
  pinned: boolean;
}

export interface StoryStatusJson {
  story_id: string;
  phase: Phase;
  labeled: number;
  positives: number;
  pending: string[];
}

export interface StoryRowJson extends StoryStatusJson {
  id: string;
  text: string;
}

export interface ProgressJson {
  session_id: string;
  annotator: string;
  stories_done: number;
  story_count: number;
  labels_total: number;
  stories: StoryStatusJson[];
}

export interface CandidatesJson {
  story: { id: string; text: string };
  phase: Phase;
  labeled: number;
  positives: number;
  candidates: CandidateJson[];
}

export interface SessionSummaryJson {
  session_id: string;
  annotator: string;
  story_count: number;
}

export interface HealthJson {
  status: string;
  chunks: number;
  stories: number;
}

interface ErrorBody {
  code: string;
  message: string;
  detail: unknown;
}

/** Service rejections and transport failures, in one shape the UI can
 * render inline. `code` is the service's error code, or "network" when
 * the request never completed. */
export class ApiError extends Error {
  readonly code: string;
  readonly status: number | null;
  readonly detail: unknown;

  constructor(code: string, message: string, status: number | null = null, detail: unknown = null) {
    super(message);
    this.name = "ApiError";
    this.code = code;
    this.status = status;
    this.detail = detail;
  }
}

export type FetchFn = typeof fetch;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchFn = globalThis.fetch.bind(globalThis),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError("network", `request to ${path} failed: ${String(err)}`);
    }
    if (!response.ok) {
      let body: Partial<ErrorBody> = {};
      try {
        body = (await response.json()) as ErrorBody;
      } catch {
        // non-JSON error body; fall through to the status line
      }
      throw new ApiError(
        body.code ?? "http_error",
        body.message ?? `${response.status} on ${path}`,
        response.status,
        body.detail ?? null,
      );
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<HealthJson> {
    return this.request("/health");
  }

  listSessions(): Promise<{ sessions: SessionSummaryJson[] }> {
    return this.request("/sessions");
  }

  createSession(
    annotator: string,
    options: { phase1_target?: number; required_positives?: number } = {},
  ): Promise<ProgressJson> {
    return this.post("/sessions", { annotator, ...options });
  }

  progress(sessionId: string): Promise<ProgressJson> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  stories(sessionId: string): Promise<{ stories: StoryRowJson[] }> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/stories`);
  }

  candidates(sessionId: string, storyId: string): Promise<CandidatesJson> {
    return this.request(
      `/sessions/${encodeURIComponent(sessionId)}/stories/${encodeURIComponent(storyId)}/candidates`,
    );
  }

  submitLabel(
    sessionId: string,
    storyId: string,
    chunkId: string,
    label: 0 | 1,
    amend = false,
  ): Promise<StoryStatusJson> {
    return this.post(`/sessions/${encodeURIComponent(sessionId)}/labels`, {
      story_id: storyId,
      chunk_id: chunkId,
      label,
      amend,
    });
  }

  pin(sessionId: string, storyId: string, chunkId: string): Promise<StoryStatusJson> {
    return this.post(`/sessions/${encodeURIComponent(sessionId)}/pins`, {
      story_id: storyId,
      chunk_id: chunkId,
    });
  }

  searchChunks(sessionId: string, query: string, limit = 20): Promise<{ chunks: ChunkJson[] }> {
    const params = new URLSearchParams({ q: query, limit: String(limit) });
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/chunks?${params}`);
  }

  /** The export endpoint returns CSV text, not JSON. */
  async exportCsv(sessionId: string): Promise<string> {
    let response: Response;
    const path = `/sessions/${encodeURIComponent(sessionId)}/export`;
    try {
      response = await this.fetchFn(this.baseUrl + path);
    } catch (err) {
      throw new ApiError("network", `request to ${path} failed: ${String(err)}`);
    }
    if (!response.ok) {
      throw new ApiError("http_error", `${response.status} on ${path}`, response.status);
    }
    return response.text();
  }
}
