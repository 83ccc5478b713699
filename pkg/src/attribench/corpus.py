"""Data model and ingestion for passages, queries, and gold attributed answers.

The interchange format is line-delimited JSON (UTF-8). Field names are not
hard-coded: a mapping object names the fields, so differently-shaped dataset
dumps load without preprocessing. Loaded values are immutable and safe for
concurrent reads.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .text import parse_cited_statements

logger = logging.getLogger(__name__)


class CorpusError(ValueError):
    """Raised for malformed or contradictory corpus/dataset files."""


@dataclass(frozen=True)
class Passage:
    """One retrievable unit of the collection."""

    id: str
    text: str
    title: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("passage id must be non-empty")
        if not self.text.strip():
            raise CorpusError(f"passage {self.id!r} has empty text")


class Corpus:
    """Immutable id-keyed collection of passages."""

    def __init__(self, passages: Iterable[Passage]):
        store: dict[str, Passage] = {}
        for passage in passages:
            if passage.id in store:
                raise CorpusError(f"duplicate passage id {passage.id!r}")
            store[passage.id] = passage
        self._passages = store

    @property
    def size(self) -> int:
        return len(self._passages)

    def __len__(self) -> int:
        return len(self._passages)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._passages

    def __getitem__(self, passage_id: str) -> Passage:
        return self._passages[passage_id]

    def get(self, passage_id: str) -> Passage | None:
        return self._passages.get(passage_id)

    def ids(self) -> list[str]:
        return list(self._passages)

    def __iter__(self):
        return iter(self._passages.values())


@dataclass(frozen=True)
class Statement:
    """One sentence-level unit of an answer with its citation set."""

    text: str
    citations: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise CorpusError("statement text must be non-empty")
        if len(set(self.citations)) != len(self.citations):
            raise CorpusError("statement citations contain duplicates")


@dataclass(frozen=True)
class AttributedAnswer:
    """Ordered statements plus the raw generation they were parsed from.

    An answer without attribution is the degenerate case where every
    citation set is empty.
    """

    statements: tuple[Statement, ...]
    raw_text: str

    @property
    def text(self) -> str:
        """Marker-free answer text (statement concatenation)."""
        return " ".join(s.text for s in self.statements)

    def cited_ids(self) -> set[str]:
        """Union of all citation sets."""
        return {pid for s in self.statements for pid in s.citations}

    def has_citations(self) -> bool:
        return any(s.citations for s in self.statements)


@dataclass(frozen=True)
class GoldPassage:
    """A relevance-labelled passage attached to a query."""

    id: str
    grade: int = 1
    text: str | None = None


@dataclass(frozen=True)
class AnswerAnnotations:
    informative: bool | None = None
    attributable: bool | None = None


@dataclass(frozen=True)
class EvalQuery:
    """A user query with its gold passages, gold answers, and annotations.

    ``annotations`` is aligned index-for-index with ``gold_answers``.
    """

    id: str
    text: str
    gold_passages: tuple[GoldPassage, ...] = ()
    gold_answers: tuple[AttributedAnswer, ...] = ()
    annotations: tuple[AnswerAnnotations | None, ...] = ()

    def gold_passage_ids(self) -> list[str]:
        return [g.id for g in self.gold_passages]

    def relevance(self) -> dict[str, int]:
        return {g.id: g.grade for g in self.gold_passages}

    def gold_citation_ids(self) -> set[str]:
        """Union of citation sets over all gold answers."""
        return {pid for a in self.gold_answers for pid in a.cited_ids()}


@dataclass(frozen=True)
class DatasetStats:
    n_queries: int = 0
    n_answers: int = 0
    n_informative: int = 0
    n_attributable: int = 0
    avg_gold_passages: float = 0.0
    avg_citations: float = 0.0

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "n_answers": self.n_answers,
            "n_informative": self.n_informative,
            "n_attributable": self.n_attributable,
            "avg_gold_passages": self.avg_gold_passages,
            "avg_citations": self.avg_citations,
        }


@dataclass(frozen=True)
class CorpusMapping:
    """Field names for corpus records."""

    id: str = "docid"
    text: str = "text"
    title: str | None = "title"


@dataclass(frozen=True)
class DatasetMapping:
    """Field names for dataset records.

    ``gold_passage_grade`` may name a missing field; ``default_grade`` is
    used when the field is absent from a record.
    """

    query_id: str = "query_id"
    query: str = "query"
    gold_passages: str = "gold_passages"
    gold_passage_id: str = "docid"
    gold_passage_grade: str = "rel"
    gold_passage_text: str = "text"
    answers: str = "answers"
    answer_text: str = "text"
    informative: str = "informative"
    attributable: str = "attributable"
    default_grade: int = 1


# Preset for the common quote-style layout (gold passages embed their text).
QUOTES_MAPPING = DatasetMapping(
    gold_passages="quotes",
    answer_text="answer",
)


@dataclass
class LoadDiagnostics:
    """Non-fatal issues observed while loading a dataset."""

    dropped_citations: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def extend(self, other: "LoadDiagnostics") -> None:
        self.dropped_citations.extend(other.dropped_citations)
        self.warnings.extend(other.warnings)


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc


def load_corpus(path: str | Path, mapping: CorpusMapping = CorpusMapping()) -> Corpus:
    """Load a line-delimited JSON corpus file.

    Raises :class:`CorpusError` with the offending line number for malformed
    records, missing mapped fields, empty texts, and duplicate ids.
    """
    passages: list[Passage] = []
    seen: set[str] = set()
    for lineno, record in _iter_jsonl(path):
        if mapping.id not in record:
            raise CorpusError(f"{path}:{lineno}: missing id field {mapping.id!r}")
        if mapping.text not in record:
            raise CorpusError(f"{path}:{lineno}: missing text field {mapping.text!r}")
        pid = str(record[mapping.id])
        if pid in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate passage id {pid!r}")
        seen.add(pid)
        title = record.get(mapping.title) if mapping.title else None
        try:
            passages.append(
                Passage(id=pid, text=str(record[mapping.text]).strip(), title=title)
            )
        except CorpusError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
    return Corpus(passages)


def attributed_answer_from_text(
    raw_text: str, passage_ids: list[str] | tuple[str, ...]
) -> tuple[AttributedAnswer, int]:
    """Parse a raw generation with inline markers into an AttributedAnswer.

    Returns the answer and the number of out-of-range markers dropped.
    """
    parsed, dropped = parse_cited_statements(raw_text, passage_ids)
    statements = tuple(
        Statement(text=text, citations=cites) for text, cites in parsed if text
    )
    return AttributedAnswer(statements=statements, raw_text=raw_text), dropped


def _coerce_flag(value) -> bool | None:
    if value is None:
        return None
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    if isinstance(value, str):
        return value.strip().lower() in {"1", "true", "yes", "y"}
    return None


def load_dataset(
    path: str | Path, mapping: DatasetMapping = DatasetMapping()
) -> tuple[list[EvalQuery], LoadDiagnostics]:
    """Load a line-delimited JSON evaluation dataset.

    Gold answers are parsed into statements and citations; citation markers
    are bracketed 1-based indices into the per-query gold-passage list.
    Out-of-range markers are dropped and recorded in the diagnostics rather
    than failing the load.
    """
    queries: list[EvalQuery] = []
    diagnostics = LoadDiagnostics()
    for lineno, record in _iter_jsonl(path):
        if mapping.query_id not in record or mapping.query not in record:
            raise CorpusError(
                f"{path}:{lineno}: missing {mapping.query_id!r} or {mapping.query!r}"
            )
        qid = str(record[mapping.query_id])
        golds = []
        for item in record.get(mapping.gold_passages, []) or []:
            grade = item.get(mapping.gold_passage_grade, mapping.default_grade)
            golds.append(
                GoldPassage(
                    id=str(item[mapping.gold_passage_id]),
                    grade=int(grade),
                    text=item.get(mapping.gold_passage_text),
                )
            )
        gold_ids = [g.id for g in golds]
        answers = []
        annotations = []
        for idx, item in enumerate(record.get(mapping.answers, []) or []):
            raw = str(item.get(mapping.answer_text, ""))
            answer, dropped = attributed_answer_from_text(raw, gold_ids)
            if dropped:
                diagnostics.dropped_citations.append(
                    {"query_id": qid, "answer_index": idx, "count": dropped}
                )
            answers.append(answer)
            informative = _coerce_flag(item.get(mapping.informative))
            attributable = _coerce_flag(item.get(mapping.attributable))
            if informative is None and attributable is None:
                annotations.append(None)
            else:
                annotations.append(
                    AnswerAnnotations(informative=informative, attributable=attributable)
                )
        queries.append(
            EvalQuery(
                id=qid,
                text=str(record[mapping.query]),
                gold_passages=tuple(golds),
                gold_answers=tuple(answers),
                annotations=tuple(annotations),
            )
        )
    if not queries:
        diagnostics.warnings.append(f"{path}: empty dataset")
        logger.warning("%s: empty dataset", path)
    return queries, diagnostics


def query_to_record(
    query: EvalQuery, mapping: DatasetMapping = DatasetMapping()
) -> dict:
    """Serialize an EvalQuery back to its interchange record.

    Round-trips with :func:`load_dataset`: the raw answer text (markers
    included) is stored verbatim and re-parsed on load.
    """
    golds = []
    for g in query.gold_passages:
        item = {mapping.gold_passage_id: g.id, mapping.gold_passage_grade: g.grade}
        if g.text is not None:
            item[mapping.gold_passage_text] = g.text
        golds.append(item)
    answers = []
    for i, answer in enumerate(query.gold_answers):
        item: dict = {mapping.answer_text: answer.raw_text}
        note = query.annotations[i] if i < len(query.annotations) else None
        if note is not None:
            if note.informative is not None:
                item[mapping.informative] = note.informative
            if note.attributable is not None:
                item[mapping.attributable] = note.attributable
        answers.append(item)
    return {
        mapping.query_id: query.id,
        mapping.query: query.text,
        mapping.gold_passages: golds,
        mapping.answers: answers,
    }


def save_dataset(
    queries: Iterable[EvalQuery],
    path: str | Path,
    mapping: DatasetMapping = DatasetMapping(),
) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for query in queries:
            handle.write(json.dumps(query_to_record(query, mapping), ensure_ascii=False))
            handle.write("\n")


def dataset_stats(queries: list[EvalQuery]) -> DatasetStats:
    """Counts and averages over a loaded dataset.

    ``avg_citations`` averages, over answers, the number of distinct
    passages cited by the answer. Empty input yields all zeros.
    """
    n_queries = len(queries)
    answers = [a for q in queries for a in q.gold_answers]
    flags = [n for q in queries for n in q.annotations]
    n_informative = sum(1 for n in flags if n is not None and n.informative)
    n_attributable = sum(1 for n in flags if n is not None and n.attributable)
    avg_gold = (
        sum(len(q.gold_passages) for q in queries) / n_queries if n_queries else 0.0
    )
    avg_cit = (
        sum(len(a.cited_ids()) for a in answers) / len(answers) if answers else 0.0
    )
    return DatasetStats(
        n_queries=n_queries,
        n_answers=len(answers),
        n_informative=n_informative,
        n_attributable=n_attributable,
        avg_gold_passages=avg_gold,
        avg_citations=avg_cit,
    )


@dataclass
class ValidationReport:
    """Cross-checks between a dataset and a corpus. Pure data."""

    unresolved_ids: list[dict] = field(default_factory=list)
    empty_answers: list[dict] = field(default_factory=list)
    missing_gold: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.unresolved_ids or self.empty_answers or self.missing_gold)

    def to_dict(self) -> dict:
        return {
            "unresolved_ids": self.unresolved_ids,
            "empty_answers": self.empty_answers,
            "missing_gold": self.missing_gold,
        }


def validate(queries: list[EvalQuery], corpus: Corpus) -> ValidationReport:
    """Report unresolved passage ids, empty answers, and gold-less queries."""
    report = ValidationReport()
    for query in queries:
        if not query.gold_answers:
            report.missing_gold.append(query.id)
        checked: set[str] = set()
        for gold in query.gold_passages:
            if gold.id not in corpus and gold.id not in checked:
                checked.add(gold.id)
                report.unresolved_ids.append({"query_id": query.id, "id": gold.id})
        for idx, answer in enumerate(query.gold_answers):
            if not answer.statements:
                report.empty_answers.append({"query_id": query.id, "answer_index": idx})
            for pid in sorted(answer.cited_ids()):
                if pid not in corpus and pid not in checked:
                    checked.add(pid)
                    report.unresolved_ids.append({"query_id": query.id, "id": pid})
    return report
