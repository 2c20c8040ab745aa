import { describe, expect, it } from "vitest";

import {
  CandidatesJson,
  ApiClient,
  ProgressJson,
  StoryRowJson,
} from "../src/api.js";
import { SessionStore } from "../src/state.js";

function chunk(id: string, start: number, end: number) {
  return {
    id,
    transcript_id: "tr",
    span_start: start,
    span_end: end,
    text: `text of ${id}`,
    token_count: 4,
    strategy: "turns",
  };
}

function candidate(id: string, start: number, end: number, pinned = false) {
  return { chunk: chunk(id, start, end), context: null, pinned };
}

/** Canned service: responses are plain objects the test mutates, plus an
 * onLabel hook standing in for server-side state transitions. */
class FakeBackend {
  requests: string[] = [];
  labelBodies: unknown[] = [];
  failNextLabel: { status: number; code: string; message: string } | null = null;
  onLabel: (() => void) | null = null;

  progress: ProgressJson = {
    session_id: "sess",
    annotator: "kim",
    stories_done: 0,
    story_count: 2,
    labels_total: 0,
    stories: [],
  };
  stories: StoryRowJson[] = [
    {
      id: "s1",
      text: "As a user, I want exports.",
      story_id: "s1",
      phase: "labeling",
      labeled: 0,
      positives: 0,
      pending: ["c1"],
    },
    {
      id: "s2",
      text: "As an admin, I want logs.",
      story_id: "s2",
      phase: "labeling",
      labeled: 0,
      positives: 0,
      pending: ["c2"],
    },
  ];
  candidatesByStory: Record<string, CandidatesJson> = {
    s1: {
      story: { id: "s1", text: "As a user, I want exports." },
      phase: "labeling",
      labeled: 0,
      positives: 0,
      candidates: [candidate("c1", 0, 2)],
    },
    s2: {
      story: { id: "s2", text: "As an admin, I want logs." },
      phase: "labeling",
      labeled: 0,
      positives: 0,
      candidates: [candidate("c2", 4, 6)],
    },
  };

  private json(body: unknown, status = 200): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { "content-type": "application/json" },
    });
  }

  fetchFn = (async (input: unknown, init?: RequestInit) => {
    const url = String(input);
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    this.requests.push(`${method} ${path}`);

    if (method === "POST" && path === "/sessions/sess/labels") {
      this.labelBodies.push(JSON.parse(String(init?.body)));
      if (this.failNextLabel) {
        const fail = this.failNextLabel;
        this.failNextLabel = null;
        return this.json(
          { code: fail.code, message: fail.message, detail: null },
          fail.status,
        );
      }
      this.onLabel?.();
      return this.json(this.stories[0]);
    }
    if (method === "POST" && path === "/sessions/sess/pins") {
      return this.json(this.stories[0]);
    }
    if (path === "/sessions/sess") {
      return this.json(this.progress);
    }
    if (path === "/sessions/sess/stories") {
      return this.json({ stories: this.stories });
    }
    const candidates = path.match(/^\/sessions\/sess\/stories\/([^/]+)\/candidates$/);
    if (candidates) {
      return this.json(this.candidatesByStory[candidates[1]!]);
    }
    if (path.startsWith("/sessions/sess/chunks")) {
      return this.json({ chunks: [chunk("c9", 8, 10)] });
    }
    return this.json({ code: "not_found", message: path, detail: null }, 404);
  }) as typeof fetch;
}

function makeStore(backend: FakeBackend): SessionStore {
  return new SessionStore(new ApiClient("http://svc", backend.fetchFn), "sess");
}

describe("SessionStore", () => {
  it("refresh projects service state and picks the first open story", async () => {
    const backend = new FakeBackend();
    backend.stories[0]!.phase = "done";
    const store = makeStore(backend);
    await store.refresh();

    expect(store.progress?.session_id).toBe("sess");
    expect(store.currentStoryId).toBe("s2");
    expect(store.currentCandidate()?.chunk.id).toBe("c2");
    expect(store.lastError).toBeNull();

    const first = store.snapshot();
    await store.refresh();
    expect(store.snapshot()).toEqual(first);
  });

  it("labels write through before the next candidate renders", async () => {
    const backend = new FakeBackend();
    backend.onLabel = () => {
      backend.candidatesByStory.s1!.candidates = [candidate("c3", 8, 10)];
      backend.candidatesByStory.s1!.labeled = 1;
    };
    const store = makeStore(backend);
    await store.refresh();
    backend.requests.length = 0;

    await store.label("c1", 0);

    expect(backend.requests[0]).toBe("POST /sessions/sess/labels");
    expect(backend.requests).toContain("GET /sessions/sess/stories/s1/candidates");
    expect(backend.labelBodies[0]).toEqual({
      story_id: "s1",
      chunk_id: "c1",
      label: 0,
      amend: false,
    });
    expect(store.currentCandidate()?.chunk.id).toBe("c3");
  });

  it("keeps the rejected candidate and offers a retry on service errors", async () => {
    const backend = new FakeBackend();
    const store = makeStore(backend);
    await store.refresh();

    backend.failNextLabel = {
      status: 400,
      code: "data_error",
      message: "already labeled",
    };
    await store.label("c1", 1);

    expect(store.lastError?.code).toBe("data_error");
    expect(store.currentCandidate()?.chunk.id).toBe("c1");

    backend.onLabel = () => {
      backend.candidatesByStory.s1!.candidates = [];
      backend.candidatesByStory.s1!.phase = "done";
    };
    await store.lastError!.retry();
    expect(store.lastError).toBeNull();
    expect(backend.labelBodies.length).toBe(2);
  });

  it("advances to the next open story when the current one closes", async () => {
    const backend = new FakeBackend();
    const store = makeStore(backend);
    await store.refresh();
    expect(store.currentStoryId).toBe("s1");

    backend.onLabel = () => {
      backend.stories[0]!.phase = "done";
      backend.progress.stories_done = 1;
      backend.candidatesByStory.s1!.phase = "done";
      backend.candidatesByStory.s1!.candidates = [];
    };
    await store.label("c1", 1);

    expect(store.currentStoryId).toBe("s2");
    expect(store.currentCandidate()?.chunk.id).toBe("c2");
    expect(store.allDone).toBe(false);
  });

  it("flags the extension phase from the service response alone", async () => {
    const backend = new FakeBackend();
    backend.candidatesByStory.s1!.phase = "extending";
    const store = makeStore(backend);
    await store.refresh();
    expect(store.extensionActive).toBe(true);
  });

  it("search is a passthrough that stores nothing", async () => {
    const backend = new FakeBackend();
    const store = makeStore(backend);
    await store.refresh();
    const before = store.snapshot();
    const { chunks } = await store.search("anything");
    expect(chunks[0]?.id).toBe("c9");
    expect(store.snapshot()).toEqual(before);
  });
});
