"""Tokenization helpers.

The default tokenizer is whitespace splitting. Anything smarter (tiktoken,
sentencepiece) can be passed as a plain ``Callable[[str], list[str]]`` wherever
a ``tokenizer`` argument is accepted; nothing in the package assumes more than
"text in, list of tokens out".
"""

from __future__ import annotations

from typing import Callable

Tokenizer = Callable[[str], "list[str]"]

# Small fixed stopword list tuned for requirements text: articles, glue, and
# the story-template scaffolding ("as a ..., i want to ..., so that ...").
# Deliberately excludes domain-bearing words however common ("new", "report").
STOPWORDS = frozenset(
    """
    a an the i we you he she it they them his her their our your my me us
    and or but nor so that this these those there here
    is are was were be been being am do does did done has have had having
    will would shall should can could may might must
    to of in on at by for with from into onto about over under between
    as if then than because while when where which who whom whose what
    want wants wanted need needs needed like likes liked
    not no yes also just really very quite some any all each every
    """.split()
)


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


def content_words(text: str) -> set[str]:
    """Lowercased alphanumeric words minus stopwords; the vocabulary two
    texts are compared on by the keyword matcher and the mock judge."""
    words = set()
    for raw in text.lower().split():
        word = raw.strip(".,;:!?()[]{}\"'`")
        if word and word not in STOPWORDS:
            words.add(word)
    return words


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    """Token count of ``text`` under ``tokenizer`` (whitespace by default)."""
    tok = tokenizer or whitespace_tokenize
    return len(tok(text))
