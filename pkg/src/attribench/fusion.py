"""Rank fusion: merge per-subquery ranked lists into one supporting list.

Methods: ``sort`` (max-score union), ``combsum``, ``combmnz``, ``pm2``
(proportional-representation diversification across subquery "aspects"),
and ``rerank`` (rescore the union against the original query through the
scoring gateway). Plus the MAX oracle: an elementwise upper bound over
per-list evaluations.

All methods are invariant to the order in which input lists are supplied:
cross-list sums use ``math.fsum`` (order-independent rounding) and every
tie-break is on stable identity (list weight, then list query id; passage
id among candidates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import Corpus
from .modelio import ScoreGateway, ScorePair
from .retrieval import RankedList, passage_text

FUSION_METHODS = ("sort", "combsum", "combmnz", "pm2", "rerank")


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionInput:
    """Ranked lists to fuse, one per query, with optional per-list weights.

    ``origin_query_id`` names the query the fused list answers (defaults to
    the smallest list id so the result is input-order independent).
    """

    lists: tuple[RankedList, ...]
    weights: tuple[float, ...] | None = None
    origin_query_id: str | None = None

    def __post_init__(self) -> None:
        if not self.lists:
            raise FusionError("fusion needs at least one list")
        if self.weights is not None and len(self.weights) != len(self.lists):
            raise FusionError("weights must align with lists")

    def effective_weights(self) -> tuple[float, ...]:
        return self.weights if self.weights is not None else (1.0,) * len(self.lists)

    def query_id(self) -> str:
        if self.origin_query_id is not None:
            return self.origin_query_id
        return min(ranked.query_id for ranked in self.lists)

    def normalized(self) -> "FusionInput":
        return FusionInput(
            lists=tuple(normalize(ranked) for ranked in self.lists),
            weights=self.weights,
            origin_query_id=self.origin_query_id,
        )


def normalize(ranked: RankedList) -> RankedList:
    """Min-max scale scores to [0,1], preserving order.

    Degenerate ranges (single entry or constant scores) map every score to
    1.0 so a singleton list still contributes to fusion.
    """
    if not ranked.entries:
        return ranked
    values = [score for _, score in ranked.entries]
    low, high = min(values), max(values)
    if high == low:
        entries = tuple((doc_id, 1.0) for doc_id, _ in ranked.entries)
    else:
        entries = tuple(
            (doc_id, (score - low) / (high - low)) for doc_id, score in ranked.entries
        )
    return RankedList(query_id=ranked.query_id, entries=entries, k=ranked.k)


def _sorted_lists(inp: FusionInput) -> list[tuple[float, RankedList]]:
    """Lists keyed for order-invariant iteration: weight desc, id asc."""
    pairs = list(zip(inp.effective_weights(), inp.lists))
    pairs.sort(key=lambda pair: (-pair[0], pair[1].query_id))
    return pairs


def _candidate_scores(inp: FusionInput) -> dict[str, list[float]]:
    """Per-candidate score contributions in canonical list order."""
    contributions: dict[str, list[float]] = {}
    for _, ranked in _sorted_lists(inp):
        for doc_id, score in ranked.entries:
            contributions.setdefault(doc_id, []).append(score)
    return contributions


def fuse_sort(inp: FusionInput, k: int) -> RankedList:
    """Union of entries; duplicates keep their maximum normalized score."""
    scores = {doc_id: max(vals) for doc_id, vals in _candidate_scores(inp).items()}
    return RankedList.from_scores(inp.query_id(), scores, k)


def comb_sum_scores(inp: FusionInput) -> dict[str, float]:
    return {
        doc_id: math.fsum(vals) for doc_id, vals in _candidate_scores(inp).items()
    }


def fuse_comb_sum(inp: FusionInput, k: int) -> RankedList:
    """Fused score is the sum of per-list scores (0 when absent)."""
    return RankedList.from_scores(inp.query_id(), comb_sum_scores(inp), k)


def comb_mnz_scores(inp: FusionInput) -> dict[str, float]:
    return {
        doc_id: len(vals) * math.fsum(vals)
        for doc_id, vals in _candidate_scores(inp).items()
    }


def fuse_comb_mnz(inp: FusionInput, k: int) -> RankedList:
    """CombSum boosted by the number of lists containing the document."""
    return RankedList.from_scores(inp.query_id(), comb_mnz_scores(inp), k)


def fuse_pm2(inp: FusionInput, k: int, lam: float = 0.5) -> RankedList:
    """Proportional seat allocation across the input lists.

    Each list is an aspect with votes equal to its weight. For every output
    seat: Sainte-Lague quotients qt[i] = v_i / (2 s_i + 1) pick the neediest
    aspect (ties: weight desc, list id asc); the document maximizing
    ``lam * qt[i*] * rel(d|i*) + (1 - lam) * sum_{i != i*} qt[i] * rel(d|i)``
    takes the seat (ties: ascending passage id); seat credit is shared as
    s_i += rel(d|i) / sum_j rel(d|j). Selection stops early once every
    remaining candidate has zero relevance in every list.

    Output scores are 1/(seat+1): synthetic, strictly decreasing, so the
    RankedList ordering invariant encodes exactly the selection order.
    """
    if not 0.0 <= lam <= 1.0:
        raise FusionError("pm2 lambda must be in [0,1]")
    ordered = _sorted_lists(inp)
    votes = [weight for weight, _ in ordered]
    rel_maps = [ranked.scores() for _, ranked in ordered]
    candidates = sorted({doc_id for rel in rel_maps for doc_id in rel})

    total_rel = {
        doc_id: math.fsum(rel.get(doc_id, 0.0) for rel in rel_maps)
        for doc_id in candidates
    }
    seats: list[str] = []
    credit = [0.0] * len(ordered)
    remaining = set(candidates)
    while remaining and len(seats) < k:
        viable = [doc_id for doc_id in sorted(remaining) if total_rel[doc_id] > 0.0]
        if not viable:
            break
        quotients = [votes[i] / (2.0 * credit[i] + 1.0) for i in range(len(ordered))]
        target = max(range(len(ordered)), key=lambda i: (quotients[i], -i))
        best_doc = viable[0]
        best_score = -1.0
        for doc_id in viable:
            own = quotients[target] * rel_maps[target].get(doc_id, 0.0)
            others = math.fsum(
                quotients[i] * rel_maps[i].get(doc_id, 0.0)
                for i in range(len(ordered))
                if i != target
            )
            score = lam * own + (1.0 - lam) * others
            if score > best_score:
                best_doc, best_score = doc_id, score
        for i, rel in enumerate(rel_maps):
            credit[i] += rel.get(best_doc, 0.0) / total_rel[best_doc]
        seats.append(best_doc)
        remaining.discard(best_doc)

    entries = tuple(
        (doc_id, 1.0 / (seat + 1)) for seat, doc_id in enumerate(seats)
    )
    return RankedList(query_id=inp.query_id(), entries=entries, k=k)


def fuse_rerank(
    inp: FusionInput,
    original_query: str,
    scorer: ScoreGateway,
    corpus: Corpus,
    k: int,
) -> RankedList:
    """Rescore the deduplicated union against the original user query."""
    candidates = sorted(_candidate_scores(inp))
    if not candidates:
        return RankedList(query_id=inp.query_id(), entries=(), k=k)
    pairs = [
        ScorePair(task="rerank", a=original_query, b=passage_text(corpus, doc_id))
        for doc_id in candidates
    ]
    results = scorer.score_pairs(pairs)
    scores = {
        doc_id: min(1.0, max(0.0, res.value))
        for doc_id, res in zip(candidates, results)
    }
    return RankedList.from_scores(inp.query_id(), scores, k)


def fuse(
    method: str,
    inp: FusionInput,
    k: int,
    original_query: str | None = None,
    scorer: ScoreGateway | None = None,
    corpus: Corpus | None = None,
    pm2_lambda: float = 0.5,
    normalize_inputs: bool = True,
) -> RankedList:
    """Dispatch a fusion method by name, min-max normalizing inputs first."""
    if method not in FUSION_METHODS:
        raise FusionError(f"unknown fusion method {method!r}")
    if normalize_inputs:
        inp = inp.normalized()
    if method == "sort":
        return fuse_sort(inp, k)
    if method == "combsum":
        return fuse_comb_sum(inp, k)
    if method == "combmnz":
        return fuse_comb_mnz(inp, k)
    if method == "pm2":
        return fuse_pm2(inp, k, pm2_lambda)
    if original_query is None or scorer is None or corpus is None:
        raise FusionError("rerank fusion needs the original query, a scorer, and a corpus")
    return fuse_rerank(inp, original_query, scorer, corpus, k)


def max_oracle(
    per_list_metrics: Sequence[tuple[str, Mapping[str, float | None]]]
) -> dict[str, float | None]:
    """Elementwise maximum over per-list metric maps.

    All maps must share the same metric keys. ``None`` values (skipped
    metrics) are ignored; a metric skipped everywhere stays ``None``.
    """
    if not per_list_metrics:
        raise FusionError("max_oracle needs at least one metric map")
    keys = set(per_list_metrics[0][1])
    for list_id, metrics in per_list_metrics[1:]:
        if set(metrics) != keys:
            raise FusionError(f"metric keys differ for list {list_id!r}")
    out: dict[str, float | None] = {}
    for key in keys:
        values = [m[key] for _, m in per_list_metrics if m[key] is not None]
        out[key] = max(values) if values else None
    return out
