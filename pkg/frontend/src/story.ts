/** Split story text into display segments, highlighting the role / goal /
 * benefit parts of "As a <role>, I want <goal>, so that <benefit>." when
 * the text follows that shape. Anything else renders as one plain segment,
 * character for character.
 */

export type SegmentKind = "plain" | "role" | "goal" | "benefit";

export interface StorySegment {
  kind: SegmentKind;
  text: string;
}

const TEMPLATE_RE =
  /^\s*as\s+an?\s+(.+?)\s*,\s*i\s+want\s+(?:to\s+)?(.+?)(?:\s*,\s*so\s+that\s+(.+?))?\s*\.?\s*$/dis;

export function storySegments(text: string): StorySegment[] {
  const match = TEMPLATE_RE.exec(text);
  const indices = match?.indices;
  if (!match || !indices) {
    return [{ kind: "plain", text }];
  }
  const parts: { kind: SegmentKind; range: [number, number] }[] = [];
  const kinds: SegmentKind[] = ["role", "goal", "benefit"];
  kinds.forEach((kind, i) => {
    const range = indices[i + 1];
    if (range) {
      parts.push({ kind, range });
    }
  });

  const segments: StorySegment[] = [];
  let cursor = 0;
  for (const { kind, range } of parts) {
    const [start, end] = range;
    if (start > cursor) {
      segments.push({ kind: "plain", text: text.slice(cursor, start) });
    }
    segments.push({ kind, text: text.slice(start, end) });
    cursor = end;
  }
  if (cursor < text.length) {
    segments.push({ kind: "plain", text: text.slice(cursor) });
  }
  return segments;
}

/** Stable speaker -> palette index so the same name always gets the same
 * color within and across sessions. */
export function speakerColorIndex(speaker: string, palette = 6): number {
  let hash = 0;
  for (const ch of speaker) {
    hash = (hash * 31 + ch.codePointAt(0)!) >>> 0;
  }
  return hash % palette;
}
