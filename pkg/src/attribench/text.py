"""Shared text utilities: tokenization, sentence segmentation, citation markers.

Everything here is deterministic and language-agnostic on purpose: the same
tokenizer feeds the lexical index and the n-gram metrics, and the same
segmenter is used when parsing generations and gold answers, so results are
reproducible across runs and machines.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

# Runs of Unicode alphanumerics (underscore excluded). No stemming, no
# stopword removal: keeps scores reproducible across languages.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Candidate sentence boundary: terminal punctuation, whitespace, then an
# uppercase letter or digit.
_BOUNDARY_RE = re.compile(r"(?<=[.!?])\s+(?=[A-Z0-9])")

# Inline citation marker, optionally preceded by whitespace: " [3]".
_MARKER_RE = re.compile(r"\s*\[(\d+)\]")

# Tokens ending in a period that do not terminate a sentence. Small and
# deliberately incomplete; extend via Analyzer if a dataset needs more.
ABBREVIATIONS = frozenset(
    {
        "approx.",
        "al.",
        "cf.",
        "dr.",
        "e.g.",
        "etc.",
        "fig.",
        "i.e.",
        "inc.",
        "jr.",
        "ltd.",
        "mr.",
        "mrs.",
        "ms.",
        "no.",
        "prof.",
        "sr.",
        "st.",
        "vs.",
    }
)


@dataclass(frozen=True)
class Analyzer:
    """Tokenizer configuration shared by retrieval and n-gram metrics."""

    lowercase: bool = True

    def tokens(self, text: str) -> list[str]:
        if self.lowercase:
            text = text.lower()
        return _TOKEN_RE.findall(text)


DEFAULT_ANALYZER = Analyzer()


def tokenize(text: str) -> list[str]:
    """Tokenize with the default analyzer (lowercase, alphanumeric runs)."""
    return DEFAULT_ANALYZER.tokens(text)


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Return (start, end) character spans of sentences in ``text``.

    A boundary is terminal punctuation followed by whitespace and an
    uppercase letter or digit, unless the word carrying the punctuation is a
    known abbreviation ("approx. 5 m" does not split). Spans cover all
    non-whitespace characters, so joining the spans reproduces the text up
    to whitespace.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for match in _BOUNDARY_RE.finditer(text):
        head = text[: match.start()].strip()
        last_word = head.rsplit(None, 1)[-1] if head else ""
        if last_word.lower() in ABBREVIATIONS:
            continue
        spans.append((start, match.start()))
        start = match.end()
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def segment_statements(text: str) -> list[str]:
    """Split ``text`` into sentence-level statements."""
    return [text[s:e].strip() for s, e in sentence_spans(text)]


def strip_citation_markers(text: str) -> str:
    """Remove bracketed integer markers (and the whitespace gluing them on)."""
    return _MARKER_RE.sub("", text)


def parse_cited_statements(
    text: str, passage_ids: list[str] | tuple[str, ...]
) -> tuple[list[tuple[str, tuple[str, ...]]], int]:
    """Split ``text`` into statements and resolve their citation markers.

    Markers are bracketed 1-based indices into ``passage_ids``. A marker
    attaches to the sentence containing it in the marker-stripped text;
    markers trailing the final sentence attach to the last statement.
    Out-of-range markers are dropped and counted.

    Returns ``(statements, n_dropped)`` where each statement is
    ``(sentence_text, cited_passage_ids)`` with duplicates removed in order
    of first appearance.
    """
    cleaned_parts: list[str] = []
    anchors: list[tuple[int, int]] = []  # (offset in cleaned text, marker value)
    cursor = 0
    cleaned_len = 0
    for match in _MARKER_RE.finditer(text):
        chunk = text[cursor : match.start()]
        cleaned_parts.append(chunk)
        cleaned_len += len(chunk)
        anchors.append((cleaned_len, int(match.group(1))))
        cursor = match.end()
    cleaned_parts.append(text[cursor:])
    cleaned = "".join(cleaned_parts)

    spans = sentence_spans(cleaned)
    if not spans:
        return [], len(anchors)

    per_sentence: list[list[str]] = [[] for _ in spans]
    dropped = 0
    ends = [end for _, end in spans]
    for offset, marker in anchors:
        slot = len(spans) - 1
        for i, end in enumerate(ends):
            if offset < end:
                slot = i
                break
        if 1 <= marker <= len(passage_ids):
            cited = per_sentence[slot]
            pid = passage_ids[marker - 1]
            if pid not in cited:
                cited.append(pid)
        else:
            dropped += 1

    statements = [
        (cleaned[s:e].strip(), tuple(per_sentence[i]))
        for i, (s, e) in enumerate(spans)
    ]
    return statements, dropped
