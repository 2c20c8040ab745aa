/** Session state: a pure projection of service responses.
 *
 * No label, ranking, or phase is ever computed here; every mutation is a
 * write-through call whose response (or a follow-up fetch) replaces the
 * local view. That is what makes a mid-flow refresh lossless: rebuilding
 * the store from the same session id replays the same GETs.
 */

import {
  ApiClient,
  ApiError,
  CandidateJson,
  CandidatesJson,
  ChunkJson,
  ProgressJson,
  StoryRowJson,
} from "./api.js";

export interface InlineError {
  code: string;
  message: string;
  /** Re-runs the submission that failed; the UI wires this to a Retry button. */
  retry: () => Promise<void>;
}

export type Listener = () => void;

export class SessionStore {
  progress: ProgressJson | null = null;
  stories: StoryRowJson[] = [];
  currentStoryId: string | null = null;
  candidates: CandidatesJson | null = null;
  lastError: InlineError | null = null;
  busy = false;

  private listeners = new Set<Listener>();

  constructor(
    readonly api: ApiClient,
    readonly sessionId: string,
  ) {}

  subscribe(fn: Listener): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) {
      fn();
    }
  }

  // -- derived views --------------------------------------------------------

  currentCandidate(): CandidateJson | null {
    return this.candidates?.candidates[0] ?? null;
  }

  currentStory(): StoryRowJson | null {
    return this.stories.find((s) => s.id === this.currentStoryId) ?? null;
  }

  /** True once the service reports the ranking was extended past the
   * initial target because the story still lacks enough positives. */
  get extensionActive(): boolean {
    return this.candidates?.phase === "extending";
  }

  get allDone(): boolean {
    return this.stories.length > 0 && this.stories.every((s) => s.phase === "done");
  }

  /** JSON-safe view of everything rendered, for refresh comparisons. */
  snapshot(): unknown {
    return JSON.parse(
      JSON.stringify({
        progress: this.progress,
        stories: this.stories,
        currentStoryId: this.currentStoryId,
        candidates: this.candidates,
      }),
    );
  }

  // -- loading --------------------------------------------------------------

  async refresh(): Promise<void> {
    await this.guarded(async () => {
      this.progress = await this.api.progress(this.sessionId);
      this.stories = (await this.api.stories(this.sessionId)).stories;
      if (
        this.currentStoryId === null ||
        !this.stories.some((s) => s.id === this.currentStoryId)
      ) {
        this.currentStoryId = this.nextOpenStoryId();
      }
      await this.reloadCandidates();
    }, () => this.refresh());
  }

  async selectStory(storyId: string): Promise<void> {
    await this.guarded(async () => {
      this.currentStoryId = storyId;
      await this.reloadCandidates();
    }, () => this.selectStory(storyId));
  }

  private nextOpenStoryId(): string | null {
    const open = this.stories.find((s) => s.phase !== "done");
    return (open ?? this.stories[0])?.id ?? null;
  }

  private async reloadCandidates(): Promise<void> {
    this.candidates = this.currentStoryId
      ? await this.api.candidates(this.sessionId, this.currentStoryId)
      : null;
  }

  // -- write-through mutations ----------------------------------------------

  async label(chunkId: string, label: 0 | 1): Promise<void> {
    const storyId = this.currentStoryId;
    if (storyId === null) {
      return;
    }
    await this.guarded(async () => {
      await this.api.submitLabel(this.sessionId, storyId, chunkId, label);
      await this.afterWrite(storyId);
    }, () => this.label(chunkId, label));
  }

  async pinChunk(chunkId: string): Promise<void> {
    const storyId = this.currentStoryId;
    if (storyId === null) {
      return;
    }
    await this.guarded(async () => {
      await this.api.pin(this.sessionId, storyId, chunkId);
      await this.afterWrite(storyId);
    }, () => this.pinChunk(chunkId));
  }

  search(query: string, limit = 20): Promise<{ chunks: ChunkJson[] }> {
    return this.api.searchChunks(this.sessionId, query, limit);
  }

  /** Refetch everything the write may have moved, then advance off a
   * finished story. The next candidate only renders after this settles,
   * so a submission is on disk before anything new appears. */
  private async afterWrite(storyId: string): Promise<void> {
    this.progress = await this.api.progress(this.sessionId);
    this.stories = (await this.api.stories(this.sessionId)).stories;
    const current = this.stories.find((s) => s.id === storyId);
    if (current?.phase === "done" && this.currentStoryId === storyId) {
      this.currentStoryId = this.nextOpenStoryId();
    }
    await this.reloadCandidates();
  }

  private async guarded(
    work: () => Promise<void>,
    retry: () => Promise<void>,
  ): Promise<void> {
    if (this.busy) {
      return;
    }
    this.busy = true;
    this.lastError = null;
    this.emit();
    try {
      await work();
    } catch (err) {
      if (err instanceof ApiError) {
        this.lastError = { code: err.code, message: err.message, retry };
      } else {
        throw err;
      }
    } finally {
      this.busy = false;
      this.emit();
    }
  }
}
