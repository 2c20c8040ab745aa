import json

import pytest

from storyalign.errors import DataError
from storyalign.io import (
    load_gold_labels,
    load_stories,
    load_transcript,
    read_chunks_jsonl,
    read_labels_csv,
    write_chunks_jsonl,
    write_labels_csv,
    write_stories,
)
from storyalign.chunking import chunk_by_turns

from helpers import make_transcript


def test_plain_transcript_round(tmp_path):
    p = tmp_path / "kickoff.txt"
    p.write_text(
        "Interviewer: What do you need?\n"
        "Stakeholder: A way to export reports.\n"
        "Ideally as CSV.\n"
        "\n"
        "Interviewer: Anything else?\n",
        encoding="utf-8",
    )
    t = load_transcript(p)
    assert t.id == "kickoff"
    assert len(t.turns) == 3
    assert t.turns[1].speaker == "Stakeholder"
    # continuation line was folded into the previous turn
    assert t.turns[1].text == "A way to export reports. Ideally as CSV."
    assert t.turns[2].index == 2


def test_plain_transcript_continuation_before_any_turn(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("just some text with no speaker\n", encoding="utf-8")
    with pytest.raises(DataError, match="bad.txt:1"):
        load_transcript(p)


def test_plain_transcript_empty_file(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("", encoding="utf-8")
    with pytest.raises(DataError, match="no turns"):
        load_transcript(p)


def test_transcript_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_transcript(tmp_path / "nope.txt")


def test_jsonl_transcript(tmp_path):
    p = tmp_path / "session.jsonl"
    rows = [
        {"speaker": "PM", "text": "We need login."},
        {"speaker": "Dev", "text": "Email or SSO?"},
    ]
    p.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    t = load_transcript(p)
    assert [turn.speaker for turn in t.turns] == ["PM", "Dev"]
    assert t.turns[0].index == 0


def test_jsonl_transcript_bad_line_reports_line_number(tmp_path):
    p = tmp_path / "session.jsonl"
    p.write_text('{"speaker": "PM", "text": "ok"}\nnot json\n', encoding="utf-8")
    with pytest.raises(DataError, match="session.jsonl:2"):
        load_transcript(p)


def test_jsonl_transcript_missing_speaker(tmp_path):
    p = tmp_path / "session.jsonl"
    p.write_text('{"text": "ok"}\n', encoding="utf-8")
    with pytest.raises(DataError, match="speaker"):
        load_transcript(p)


def test_unknown_transcript_format(tmp_path):
    p = tmp_path / "x.txt"
    p.write_text("A: b\n", encoding="utf-8")
    with pytest.raises(DataError, match="unknown transcript format"):
        load_transcript(p, fmt="xml")


def test_stories_from_lines(tmp_path):
    p = tmp_path / "stories.txt"
    p.write_text(
        "As a user, I want to log in, so that I can see my data.\n"
        "\n"
        "As an admin, I want to reset passwords.\n",
        encoding="utf-8",
    )
    stories = load_stories(p)
    assert [s.id for s in stories] == ["s1", "s2"]
    assert stories[0].role == "user"
    assert stories[1].role == "admin"


def test_stories_from_jsonl_with_ids(tmp_path):
    p = tmp_path / "stories.jsonl"
    p.write_text(
        '{"id": "login", "text": "As a user, I want to log in."}\n'
        '{"text": "As a user, I want to log out."}\n',
        encoding="utf-8",
    )
    stories = load_stories(p)
    assert stories[0].id == "login"
    # missing id falls back to ordinal naming
    assert stories[1].id == "s2"


def test_stories_duplicate_ids_rejected(tmp_path):
    p = tmp_path / "stories.jsonl"
    p.write_text(
        '{"id": "a", "text": "As a user, I want x."}\n'
        '{"id": "a", "text": "As a user, I want y."}\n',
        encoding="utf-8",
    )
    with pytest.raises(DataError, match="duplicate story id"):
        load_stories(p)


def test_stories_empty_rejected(tmp_path):
    p = tmp_path / "stories.txt"
    p.write_text("\n\n", encoding="utf-8")
    with pytest.raises(DataError, match="no stories"):
        load_stories(p)


def test_write_stories_round_trip(tmp_path):
    stories = load_stories_from_texts(
        tmp_path,
        ["As a user, I want to log in.", "As an admin, I want audit logs."],
    )
    out = tmp_path / "out.jsonl"
    write_stories(stories, out, fmt="jsonl")
    again = load_stories(out)
    assert [(s.id, s.text) for s in again] == [(s.id, s.text) for s in stories]


def load_stories_from_texts(tmp_path, texts):
    p = tmp_path / "seed.txt"
    p.write_text("".join(t + "\n" for t in texts), encoding="utf-8")
    return load_stories(p)


def test_labels_csv_round_trip(tmp_path):
    labels = {
        ("t1#turns:0-3", "s1"): 1,
        ("t1#turns:1-4", "s1"): 0,
        ("t1#turns:0-3", "s2"): 1,
    }
    p = tmp_path / "labels.csv"
    write_labels_csv(labels, p)
    assert read_labels_csv(p) == labels
    first_line = p.read_text(encoding="utf-8").splitlines()[0]
    assert first_line == "story_id,chunk_id,label"


def test_labels_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("chunk,story,label\na,b,1\n", encoding="utf-8")
    with pytest.raises(DataError, match="expected header"):
        read_labels_csv(p)


def test_labels_csv_rejects_duplicate_rows(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text(
        "story_id,chunk_id,label\ns1,t1#turns:0-3,1\ns1,t1#turns:0-3,0\n",
        encoding="utf-8",
    )
    with pytest.raises(DataError, match="duplicate label"):
        read_labels_csv(p)


def test_labels_csv_rejects_non_binary_label(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("story_id,chunk_id,label\ns1,c1,maybe\n", encoding="utf-8")
    with pytest.raises(DataError, match="label must be 0 or 1"):
        read_labels_csv(p)


def test_labels_csv_rejects_short_row(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("story_id,chunk_id,label\ns1,c1\n", encoding="utf-8")
    with pytest.raises(DataError, match="expected 3 columns"):
        read_labels_csv(p)


def test_gold_labels_validate_universe(tmp_path):
    p = tmp_path / "labels.csv"
    p.write_text("story_id,chunk_id,label\ns1,c1,1\n", encoding="utf-8")
    assert load_gold_labels(p, known_chunks=["c1"], known_stories=["s1"])
    with pytest.raises(DataError, match="unknown chunk id"):
        load_gold_labels(p, known_chunks=["c2"], known_stories=["s1"])
    with pytest.raises(DataError, match="unknown story id"):
        load_gold_labels(p, known_chunks=["c1"], known_stories=["s9"])


def test_chunks_jsonl_round_trip(tmp_path):
    transcript = make_transcript([f"utterance number {i}" for i in range(7)])
    chunks = chunk_by_turns(transcript, window=3, stride=1)
    p = tmp_path / "chunks.jsonl"
    write_chunks_jsonl(chunks, p)
    again = read_chunks_jsonl(p)
    assert again == chunks
    # strategy is not stored as a field; it comes back out of the id
    assert all(c.strategy == "turns" for c in again)


def test_chunks_jsonl_malformed_record(tmp_path):
    p = tmp_path / "chunks.jsonl"
    p.write_text('{"id": "t#turns:0-3"}\n', encoding="utf-8")
    with pytest.raises(DataError, match="chunks.jsonl:1"):
        read_chunks_jsonl(p)
