"""Lexical first-stage retrieval, gateway reranking, and ranked-list metrics.

The index is a plain in-memory inverted index scored with BM25 (defaults
k1=0.9, b=0.4, non-negative idf). Builds are deterministic: the serialized
form is byte-stable for a fixed corpus and analyzer, and ties are broken by
ascending passage id everywhere so runs are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Corpus
from .modelio import ScoreGateway, ScorePair
from .text import Analyzer, DEFAULT_ANALYZER

INDEX_FORMAT = "attribench-index"
INDEX_VERSION = 1


class RetrievalError(ValueError):
    pass


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4


@dataclass(frozen=True)
class RankedList:
    """Scored passages sorted by (score desc, id asc), capped at ``k``.

    Construct through :meth:`from_scores`, which enforces the ordering,
    deduplication, and capacity invariants.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    k: int

    @classmethod
    def from_scores(
        cls,
        query_id: str,
        scores: Iterable[tuple[str, float]] | Mapping[str, float],
        k: int,
    ) -> "RankedList":
        if k < 1:
            raise RetrievalError("k must be >= 1")
        items = scores.items() if isinstance(scores, Mapping) else list(scores)
        seen: dict[str, float] = {}
        for doc_id, score in items:
            if doc_id in seen:
                raise RetrievalError(f"duplicate doc id {doc_id!r} in ranked list")
            seen[doc_id] = float(score)
        ordered = sorted(seen.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(query_id=query_id, entries=tuple(ordered[:k]), k=k)

    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.entries]

    def scores(self) -> dict[str, float]:
        return dict(self.entries)

    def truncated(self, k: int) -> "RankedList":
        return RankedList(query_id=self.query_id, entries=self.entries[:k], k=k)

    def __len__(self) -> int:
        return len(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)


class Index:
    """Immutable inverted index over a corpus."""

    def __init__(
        self,
        postings: dict[str, list[tuple[str, int]]],
        doc_lengths: dict[str, int],
        analyzer: Analyzer,
        params: BM25Params,
    ):
        self.postings = postings
        self.doc_lengths = doc_lengths
        self.analyzer = analyzer
        self.params = params
        self.n_docs = len(doc_lengths)
        self.avg_doc_length = (
            sum(doc_lengths.values()) / self.n_docs if self.n_docs else 0.0
        )

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        value = math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))
        return max(0.0, value)

    def to_dict(self) -> dict:
        return {
            "format": INDEX_FORMAT,
            "version": INDEX_VERSION,
            "analyzer": {"lowercase": self.analyzer.lowercase},
            "params": {"k1": self.params.k1, "b": self.params.b},
            "doc_lengths": {d: self.doc_lengths[d] for d in sorted(self.doc_lengths)},
            "postings": {
                t: sorted(self.postings[t]) for t in sorted(self.postings)
            },
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, sort_keys=True, separators=(",", ":"))
            handle.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "Index":
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        if data.get("format") != INDEX_FORMAT:
            raise RetrievalError(f"{path}: not an index file")
        if data.get("version") != INDEX_VERSION:
            raise RetrievalError(f"{path}: unsupported index version {data.get('version')}")
        return cls(
            postings={t: [tuple(p) for p in plist] for t, plist in data["postings"].items()},
            doc_lengths=data["doc_lengths"],
            analyzer=Analyzer(lowercase=data["analyzer"]["lowercase"]),
            params=BM25Params(**data["params"]),
        )


def build_index(
    corpus: Corpus,
    analyzer: Analyzer = DEFAULT_ANALYZER,
    params: BM25Params = BM25Params(),
) -> Index:
    """Build an inverted index; deterministic for a fixed corpus+analyzer."""
    if len(corpus) == 0:
        raise RetrievalError("cannot index an empty corpus")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for passage in sorted(corpus, key=lambda p: p.id):
        tokens = analyzer.tokens(passage.text)
        doc_lengths[passage.id] = len(tokens)
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((passage.id, tf))
    return Index(postings=postings, doc_lengths=doc_lengths, analyzer=analyzer, params=params)


def bm25_score(
    index: Index,
    query_tokens: Sequence[str],
    doc_id: str,
    params: BM25Params | None = None,
) -> float:
    """BM25 score of one document for a tokenized query.

    idf(t) = ln(1 + (N - df + 0.5)/(df + 0.5)), floored at zero per term, so
    scores are non-negative. Terms absent from the document contribute 0.
    """
    if doc_id not in index.doc_lengths:
        raise RetrievalError(f"unknown doc id {doc_id!r}")
    p = params or index.params
    dl = index.doc_lengths[doc_id]
    norm = p.k1 * (1.0 - p.b + p.b * dl / index.avg_doc_length)
    score = 0.0
    for term in query_tokens:
        tf = 0
        for candidate, freq in index.postings.get(term, ()):
            if candidate == doc_id:
                tf = freq
                break
        if tf == 0:
            continue
        score += index.idf(term) * tf * (p.k1 + 1.0) / (tf + norm)
    return score


def search(
    index: Index,
    query: str,
    k: int,
    query_id: str | None = None,
    params: BM25Params | None = None,
) -> RankedList:
    """Top-k BM25 search. Only positive-scoring passages are returned."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    p = params or index.params
    tokens = index.analyzer.tokens(query)
    counts: dict[str, int] = {}
    for token in tokens:
        counts[token] = counts.get(token, 0) + 1
    accum: dict[str, float] = {}
    for term, qf in counts.items():
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            dl = index.doc_lengths[doc_id]
            norm = p.k1 * (1.0 - p.b + p.b * dl / index.avg_doc_length)
            contrib = idf * tf * (p.k1 + 1.0) / (tf + norm)
            accum[doc_id] = accum.get(doc_id, 0.0) + qf * contrib
    positive = {d: s for d, s in accum.items() if s > 0.0}
    return RankedList.from_scores(query_id if query_id is not None else query, positive, k)


def rerank(
    ranked: RankedList,
    query: str,
    scorer: ScoreGateway,
    corpus: Corpus,
    depth: int | None = None,
) -> RankedList:
    """Rescore the top ``depth`` entries with the gateway's rerank task.

    The output contains only the rescored entries (entries past ``depth``
    are dropped so all scores share the [0,1] scale). Scoring order does not
    affect the result: results are positionally aligned, then re-sorted.
    """
    if not ranked.entries:
        return ranked
    depth = len(ranked.entries) if depth is None else min(depth, len(ranked.entries))
    head = ranked.entries[:depth]
    pairs = [
        ScorePair(task="rerank", a=query, b=passage_text(corpus, doc_id))
        for doc_id, _ in head
    ]
    results = scorer.score_pairs(pairs)
    rescored = {
        doc_id: min(1.0, max(0.0, res.value))
        for (doc_id, _), res in zip(head, results)
    }
    return RankedList.from_scores(ranked.query_id, rescored, ranked.k)


def passage_text(corpus: Corpus, doc_id: str) -> str:
    """Title and text of a passage, newline-joined; empty when unresolved."""
    passage = corpus.get(doc_id)
    if passage is None:
        return ""
    if passage.title:
        return f"{passage.title}\n{passage.text}"
    return passage.text


def eval_ranked_list(
    ranked: RankedList,
    gold: Mapping[str, int],
    cutoffs: Sequence[int] = (1, 10),
) -> dict[str, float | None]:
    """Precision/recall/nDCG at each cutoff against graded labels.

    Labels are binarized at grade >= 1. With no relevant documents, recall
    and nDCG are undefined and reported as ``None`` (skipped); precision is
    still 0 by definition.
    """
    relevant = {doc_id for doc_id, grade in gold.items() if grade >= 1}
    ids = ranked.ids()
    out: dict[str, float | None] = {}
    for k in cutoffs:
        top = ids[:k]
        hits = sum(1 for doc_id in top if doc_id in relevant)
        out[f"P@{k}"] = hits / k
        if not relevant:
            out[f"R@{k}"] = None
            out[f"nDCG@{k}"] = None
            continue
        out[f"R@{k}"] = hits / len(relevant)
        dcg = sum(
            1.0 / math.log2(rank + 1)
            for rank, doc_id in enumerate(top, 1)
            if doc_id in relevant
        )
        ideal_hits = min(len(relevant), k)
        idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, ideal_hits + 1))
        out[f"nDCG@{k}"] = dcg / idcg if idcg > 0 else None
    return out


# ---------------------------------------------------------------------------
# TREC-format run and qrels files


def write_run(lists: Iterable[RankedList], path: str | Path, tag: str = "attribench") -> None:
    """Write ranked lists in TREC run format: qid Q0 docid rank score tag."""
    with open(path, "w", encoding="utf-8") as handle:
        for ranked in lists:
            for rank, (doc_id, score) in enumerate(ranked.entries, 1):
                handle.write(f"{ranked.query_id} Q0 {doc_id} {rank} {score:.6f} {tag}\n")


def read_run(path: str | Path) -> dict[str, RankedList]:
    """Read a TREC run file into per-query ranked lists."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 6:
                raise RetrievalError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _, doc_id, rank, score, _ = parts[:6]
            rows.setdefault(qid, []).append((int(rank), doc_id, float(score)))
    out = {}
    for qid, entries in rows.items():
        entries.sort()
        out[qid] = RankedList.from_scores(
            qid, [(doc_id, score) for _, doc_id, score in entries], k=len(entries)
        )
    return out


def read_qrels(path: str | Path) -> dict[str, dict[str, int]]:
    """Read TREC qrels: qid 0 docid grade."""
    qrels: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise RetrievalError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            qid, _, doc_id, grade = parts
            qrels.setdefault(qid, {})[doc_id] = int(grade)
    return qrels


def write_qrels(qrels: Mapping[str, Mapping[str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for qid in sorted(qrels):
            for doc_id in sorted(qrels[qid]):
                handle.write(f"{qid} 0 {doc_id} {qrels[qid][doc_id]}\n")
