"""Domain types: transcripts, turns, chunks, and user stories.

Everything here is an immutable dataclass validated on construction, so the
rest of the package can treat instances as values and share them freely across
threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import DataError

_CONNEXTRA_RE = re.compile(
    r"^\s*as\s+an?\s+(?P<role>.+?)\s*,\s*i\s+want\s+(?:to\s+)?(?P<goal>.+?)"
    r"(?:\s*,\s*so\s+that\s+(?P<benefit>.+?))?\s*\.?\s*$",
    re.IGNORECASE,
)


@dataclass(frozen=True)
class Turn:
    """A single speaker turn in a transcript."""

    index: int
    speaker: str
    text: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise DataError(f"turn index must be >= 0, got {self.index}")
        if not self.speaker.strip():
            raise DataError(f"turn {self.index}: speaker is empty")
        if not self.text.strip():
            raise DataError(f"turn {self.index}: text is empty")

    def render(self) -> str:
        return f"{self.speaker}: {self.text}"


@dataclass(frozen=True)
class Transcript:
    """An ordered sequence of turns from one source document."""

    id: str
    turns: tuple[Turn, ...]
    source_kind: str = "interview"

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("transcript id is empty")
        if not self.turns:
            raise DataError(f"transcript {self.id!r} has no turns")
        for position, turn in enumerate(self.turns):
            if turn.index != position:
                raise DataError(
                    f"transcript {self.id!r}: turn indices must be consecutive "
                    f"from 0, found {turn.index} at position {position}"
                )

    def render(self) -> str:
        """Full text with one ``speaker: text`` line per turn."""
        return "\n".join(turn.render() for turn in self.turns)


@dataclass(frozen=True)
class Chunk:
    """A contiguous slice of source text, the unit judged against stories.

    ``span_start``/``span_end`` are inclusive indices into whatever the
    strategy slices (turns, tokens, or lines).
    """

    id: str
    transcript_id: str
    span_start: int
    span_end: int
    text: str
    token_count: int
    strategy: str = "turns"

    def __post_init__(self) -> None:
        if self.span_start < 0 or self.span_end < self.span_start:
            raise DataError(
                f"chunk {self.id!r}: bad span ({self.span_start}, {self.span_end})"
            )
        if not self.text.strip():
            raise DataError(f"chunk {self.id!r}: text is empty")
        if self.token_count <= 0:
            raise DataError(f"chunk {self.id!r}: token_count must be positive")


@dataclass(frozen=True)
class UserStory:
    """A requirement in (or near) the "As a ..., I want ..." template.

    ``role``/``goal``/``benefit`` are filled when the text parses; free-form
    story text is kept with all three left as None, never rejected.
    """

    id: str
    text: str
    role: str | None = field(default=None, compare=False)
    goal: str | None = field(default=None, compare=False)
    benefit: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.id:
            raise DataError("story id is empty")
        if not self.text.strip():
            raise DataError(f"story {self.id!r}: text is empty")

    @classmethod
    def from_text(cls, story_id: str, text: str) -> "UserStory":
        parts = parse_story_template(text)
        return cls(id=story_id, text=text, **parts)

    @property
    def is_templated(self) -> bool:
        return self.goal is not None


def parse_story_template(text: str) -> dict[str, str | None]:
    """Extract role/goal/benefit from Connextra-style story text.

    Lenient by design: anything that does not match yields all-None parts.
    """
    match = _CONNEXTRA_RE.match(text.strip())
    if match is None:
        return {"role": None, "goal": None, "benefit": None}
    benefit = match.group("benefit")
    return {
        "role": match.group("role").strip(),
        "goal": match.group("goal").strip(),
        "benefit": benefit.strip() if benefit else None,
    }


def normalize_story_text(text: str) -> str:
    """Casefolded, whitespace-collapsed story text without the trailing period.

    Template variations that carry no content ("as an" vs "as a", "I want to"
    vs "I want") are collapsed too, so parsed parts re-concatenate to the
    same normal form as the text they came from.
    """
    collapsed = " ".join(text.split()).rstrip(".").casefold()
    if collapsed.startswith("as an "):
        collapsed = "as a " + collapsed[len("as an "):]
    return collapsed.replace(", i want to ", ", i want ", 1)


def render_story_parts(role: str, goal: str, benefit: str | None) -> str:
    """Rebuild template text from parsed parts."""
    rendered = f"As a {role}, I want to {goal}"
    if benefit is not None:
        rendered += f", so that {benefit}"
    return rendered + "."
