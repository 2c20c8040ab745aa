/** DOM shell for one annotation session.
 *
 * Keyboard-first: 1 = support, 0 = no support, p = pin search. The whole
 * view re-renders from the store on every change; the store only ever
 * holds service responses, so what you see is what the service has.
 */

import { CandidateJson, ChunkJson, TurnJson } from "./api.js";
import { SessionStore } from "./state.js";
import { speakerColorIndex, storySegments } from "./story.js";

type Child = Node | string | null;

function el(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: Child[]
): HTMLElement {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    if (child === null) {
      continue;
    }
    node.append(child);
  }
  return node;
}

export class App {
  private pinPanelOpen = false;
  private pinQuery = "";
  private pinResults: ChunkJson[] | null = null;
  private pinNotice = "";
  private readonly unsubscribe: () => void;
  private readonly keyHandler: (event: KeyboardEvent) => void;

  constructor(
    private readonly root: HTMLElement,
    private readonly store: SessionStore,
  ) {
    this.unsubscribe = store.subscribe(() => this.render());
    this.keyHandler = (event) => this.onKey(event);
    document.addEventListener("keydown", this.keyHandler);
    this.render();
  }

  dispose(): void {
    this.unsubscribe();
    document.removeEventListener("keydown", this.keyHandler);
    this.root.replaceChildren();
  }

  private onKey(event: KeyboardEvent): void {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) {
      return;
    }
    if (event.key === "1" || event.key === "0") {
      const candidate = this.store.currentCandidate();
      if (candidate && !this.store.busy) {
        void this.store.label(candidate.chunk.id, event.key === "1" ? 1 : 0);
      }
    } else if (event.key === "p") {
      this.togglePinPanel();
    }
  }

  private togglePinPanel(): void {
    this.pinPanelOpen = !this.pinPanelOpen;
    this.pinNotice = "";
    this.pinResults = null;
    this.render();
  }

  private async runSearch(): Promise<void> {
    const query = this.pinQuery.trim();
    if (query === "") {
      this.pinNotice = "Type something to search.";
      this.pinResults = null;
      this.render();
      return;
    }
    const { chunks } = await this.store.search(query);
    this.pinResults = chunks;
    this.pinNotice = chunks.length === 0 ? "No chunks match." : "";
    this.render();
  }

  private async pinResult(chunkId: string): Promise<void> {
    await this.store.pinChunk(chunkId);
    if (this.store.lastError === null) {
      this.pinPanelOpen = false;
      this.pinResults = null;
      this.render();
    }
  }

  // -- rendering ------------------------------------------------------------

  render(): void {
    const store = this.store;
    const pieces: Child[] = [this.header()];
    if (store.lastError !== null) {
      pieces.push(this.errorBanner());
    }
    if (store.extensionActive) {
      pieces.push(
        el(
          "div",
          { class: "banner extension", "data-testid": "extension-banner" },
          "Ranking extended: not enough supporting chunks in the initial ",
          "candidates. Labeling continues one chunk at a time.",
        ),
      );
    }
    pieces.push(this.storyList(), this.workArea());
    if (this.pinPanelOpen) {
      pieces.push(this.pinPanel());
    }
    this.root.replaceChildren(el("div", { class: "app" }, ...pieces));
  }

  private header(): HTMLElement {
    const progress = this.store.progress;
    const summary = progress
      ? `${progress.stories_done} / ${progress.story_count} stories done · ` +
        `${progress.labels_total} labels · session ${progress.session_id} ` +
        `(${progress.annotator})`
      : "loading session...";
    return el(
      "header",
      {},
      el("h1", {}, "story alignment annotation"),
      el("div", { class: "progress", "data-testid": "progress" }, summary),
    );
  }

  private errorBanner(): HTMLElement {
    const error = this.store.lastError!;
    const retry = el("button", { "data-testid": "retry" }, "Retry");
    retry.addEventListener("click", () => void error.retry());
    return el(
      "div",
      { class: "banner error", "data-testid": "error-banner" },
      `${error.code}: ${error.message} `,
      retry,
    );
  }

  private storyList(): HTMLElement {
    const items = this.store.stories.map((story) => {
      const row = el(
        "li",
        {
          class: story.id === this.store.currentStoryId ? "story current" : "story",
          "data-story": story.id,
          "data-phase": story.phase,
        },
        el("span", { class: "story-id" }, story.id),
        el(
          "span",
          { class: "story-meta" },
          ` ${story.phase} · ${story.positives}+ of ${story.labeled} labeled`,
        ),
      );
      row.addEventListener("click", () => void this.store.selectStory(story.id));
      return row;
    });
    return el("ul", { class: "stories", "data-testid": "story-list" }, ...items);
  }

  private workArea(): HTMLElement {
    const candidates = this.store.candidates;
    if (candidates === null) {
      return el("section", { class: "work" }, "no story selected");
    }
    const storyText = el("p", { class: "story-text", "data-testid": "story-text" });
    for (const segment of storySegments(candidates.story.text)) {
      storyText.append(
        segment.kind === "plain"
          ? segment.text
          : el("mark", { class: segment.kind }, segment.text),
      );
    }
    const body: Child[] = [
      el("h2", {}, candidates.story.id),
      storyText,
      el(
        "div",
        { class: "story-counts" },
        `${candidates.labeled} labeled, ${candidates.positives} supporting`,
      ),
    ];
    const candidate = this.store.currentCandidate();
    if (candidate) {
      body.push(this.candidateCard(candidate));
    } else if (candidates.phase === "done") {
      body.push(
        el(
          "div",
          { class: "done", "data-testid": "story-done" },
          this.store.allDone ? "All stories labeled." : "Story done.",
        ),
      );
    }
    return el("section", { class: "work" }, ...body);
  }

  private turnRow(turn: TurnJson | null, cls: string): HTMLElement | null {
    if (turn === null) {
      return null;
    }
    return el(
      "div",
      { class: `turn context ${cls}` },
      el(
        "span",
        { class: `speaker speaker-${speakerColorIndex(turn.speaker)}` },
        turn.speaker,
      ),
      ": ",
      turn.text,
    );
  }

  private candidateCard(candidate: CandidateJson): HTMLElement {
    const chunk = candidate.chunk;
    const header = el(
      "div",
      { class: "chunk-meta" },
      `${chunk.transcript_id} · ${chunk.strategy} ${chunk.span_start}-${chunk.span_end}` +
        ` · ${chunk.token_count} tokens` +
        (candidate.pinned ? " · pinned" : ""),
    );
    const windowBlock = el(
      "div",
      { class: "turn window", "data-testid": "chunk-text" },
      chunk.text,
    );
    const support = el("button", { "data-testid": "support" }, "Support (1)");
    support.addEventListener("click", () => void this.store.label(chunk.id, 1));
    const reject = el("button", { "data-testid": "no-support" }, "No support (0)");
    reject.addEventListener("click", () => void this.store.label(chunk.id, 0));
    const pin = el("button", { "data-testid": "open-pin" }, "Pin search (p)");
    pin.addEventListener("click", () => this.togglePinPanel());

    return el(
      "div",
      {
        class: candidate.pinned ? "candidate pinned" : "candidate",
        "data-testid": "candidate",
        "data-chunk": chunk.id,
      },
      header,
      this.turnRow(candidate.context?.before ?? null, "before"),
      windowBlock,
      this.turnRow(candidate.context?.after ?? null, "after"),
      el("div", { class: "actions" }, support, " ", reject, " ", pin),
    );
  }

  private pinPanel(): HTMLElement {
    const input = el("input", {
      type: "text",
      placeholder: "search chunk text",
      "data-testid": "pin-query",
      value: this.pinQuery,
    }) as HTMLInputElement;
    input.value = this.pinQuery;
    input.addEventListener("input", () => {
      this.pinQuery = input.value;
    });
    input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        void this.runSearch();
      }
    });
    const go = el("button", { "data-testid": "pin-search" }, "Search");
    go.addEventListener("click", () => void this.runSearch());

    const results = el("ul", { class: "pin-results", "data-testid": "pin-results" });
    for (const chunk of this.pinResults ?? []) {
      const pinButton = el("button", { "data-pin": chunk.id }, "Pin");
      pinButton.addEventListener("click", () => void this.pinResult(chunk.id));
      results.append(
        el(
          "li",
          { class: "pin-hit" },
          el(
            "span",
            { class: "chunk-meta" },
            `${chunk.id} (${chunk.strategy} ${chunk.span_start}-${chunk.span_end}) `,
          ),
          el("span", { class: "pin-text" }, chunk.text),
          " ",
          pinButton,
        ),
      );
    }
    return el(
      "div",
      { class: "pin-panel", "data-testid": "pin-panel" },
      el("h3", {}, "Pin a chunk"),
      input,
      " ",
      go,
      this.pinNotice === ""
        ? null
        : el("div", { class: "pin-notice", "data-testid": "pin-notice" }, this.pinNotice),
      results,
    );
  }
}
