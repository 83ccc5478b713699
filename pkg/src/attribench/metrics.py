"""Answer-correctness and citation-quality metrics.

Correctness: whole-answer ROUGE-L (token LCS), sentence BLEU-4 with add-1
smoothed modified precisions, and a gateway-backed semantic similarity
triplet. With multiple gold answers the best score per metric is reported;
for triplet metrics "best" maximizes f and reports its accompanying
precision/recall (no per-field max).

Citation quality, all built on a binarized entailment judgment
NLI(premise, hypothesis) from the scoring gateway:

* ``autoais_cit``: mean over statements of "some citation entails it".
* ``autoais_pssg``: mean over statements of "some supporting passage
  entails it", ignoring citations entirely.
* ``nli_citation_recall``: mean over statements of "the concatenation of
  its citations entails it"; an uncited statement scores 0.
* ``nli_citation_precision``: a citation is irrelevant iff it does not
  entail its statement on its own and removing it leaves a concatenation
  that still does. A lone citation is never irrelevant: removing it leaves
  an empty set, which cannot preserve the attribution.
* ``citation_overlap``: set precision/recall between generated and gold
  citation unions.

The NLI premise for a passage is its title and text, newline-joined.
Metrics whose denominator is undefined return ``None`` ("skipped") rather
than guessing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import AttributedAnswer, Corpus
from .modelio import ScoreGateway, ScorePair
from .retrieval import RankedList, passage_text
from .text import Analyzer, DEFAULT_ANALYZER

BLEU_MAX_ORDER = 4


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f: float

    def to_dict(self) -> dict[str, float]:
        return {"precision": self.precision, "recall": self.recall, "f": self.f}


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # Bottom-up DP over the shorter side to bound memory.
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, 1):
            if x == y:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    return prev[-1]


def rouge_l(
    candidate: str, reference: str, analyzer: Analyzer = DEFAULT_ANALYZER
) -> PRF:
    """Whole-answer ROUGE-L over the shared analyzer's tokens."""
    cand = analyzer.tokens(candidate)
    ref = analyzer.tokens(reference)
    if not cand or not ref:
        return PRF(0.0, 0.0, 0.0)
    lcs = _lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF(precision, recall, f)


def bleu(
    candidate: str, reference: str, analyzer: Analyzer = DEFAULT_ANALYZER
) -> float:
    """Sentence BLEU-4, add-1 smoothing on every order.

    Orders longer than the candidate contribute precision (0+1)/(0+1)=1.
    Brevity penalty exp(1 - |ref|/|cand|) applies when the candidate is
    shorter than the reference. Empty candidate or reference scores 0.
    """
    cand = analyzer.tokens(candidate)
    ref = analyzer.tokens(reference)
    if not cand or not ref:
        return 0.0
    log_sum = 0.0
    for order in range(1, BLEU_MAX_ORDER + 1):
        cand_counts: dict[tuple[str, ...], int] = {}
        for i in range(len(cand) - order + 1):
            gram = tuple(cand[i : i + order])
            cand_counts[gram] = cand_counts.get(gram, 0) + 1
        ref_counts: dict[tuple[str, ...], int] = {}
        for i in range(len(ref) - order + 1):
            gram = tuple(ref[i : i + order])
            ref_counts[gram] = ref_counts.get(gram, 0) + 1
        matches = sum(
            min(count, ref_counts.get(gram, 0)) for gram, count in cand_counts.items()
        )
        total = sum(cand_counts.values())
        log_sum += math.log((matches + 1) / (total + 1)) / BLEU_MAX_ORDER
    brevity = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum)


def similarity(candidate: str, reference: str, scorer: ScoreGateway) -> PRF:
    """Semantic similarity triplet from the gateway's similarity task."""
    result = scorer.score_pairs(
        [ScorePair(task="similarity", a=candidate, b=reference)]
    )[0]
    aux = result.aux or {}
    return PRF(
        precision=float(aux.get("precision", result.value)),
        recall=float(aux.get("recall", result.value)),
        f=float(aux.get("f1", result.value)),
    )


def best_over_candidates(
    candidate: str,
    golds: Sequence[str],
    metric: str,
    scorer: ScoreGateway | None = None,
    analyzer: Analyzer = DEFAULT_ANALYZER,
) -> float | PRF:
    """Best score of ``candidate`` against any gold reference.

    ``metric`` is one of ``bleu``, ``rouge_l``, ``similarity``. Triplet
    metrics select the gold maximizing f (first one on ties).
    """
    if not golds:
        raise MetricError("best_over_candidates needs at least one gold")
    if metric == "bleu":
        return max(bleu(candidate, gold, analyzer) for gold in golds)
    if metric == "rouge_l":
        scored = [rouge_l(candidate, gold, analyzer) for gold in golds]
        return max(scored, key=lambda prf: prf.f)
    if metric == "similarity":
        if scorer is None:
            raise MetricError("similarity needs a scoring gateway")
        scored = [similarity(candidate, gold, scorer) for gold in golds]
        return max(scored, key=lambda prf: prf.f)
    raise MetricError(f"unknown metric {metric!r}")


# ---------------------------------------------------------------------------
# NLI-based citation metrics


def _premise(corpus: Corpus, doc_id: str) -> str:
    return passage_text(corpus, doc_id)


def _nli_batch(
    scorer: ScoreGateway, pairs: list[tuple[str, str]], threshold: float
) -> list[int]:
    if not pairs:
        return []
    results = scorer.score_pairs(
        [ScorePair(task="nli", a=premise, b=hypothesis) for premise, hypothesis in pairs]
    )
    return [1 if r.value >= threshold else 0 for r in results]


def autoais_cit(
    answer: AttributedAnswer,
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
) -> float:
    """Mean over statements of max entailment from any of its citations.

    A statement with no citations contributes 0. Raises on an answer with
    zero statements (the mean is undefined).
    """
    if not answer.statements:
        raise MetricError("autoais_cit undefined for an empty answer")
    pairs = []
    slots = []
    for i, stmt in enumerate(answer.statements):
        for doc_id in stmt.citations:
            pairs.append((_premise(corpus, doc_id), stmt.text))
            slots.append(i)
    verdicts = _nli_batch(scorer, pairs, threshold)
    per_statement = [0] * len(answer.statements)
    for slot, verdict in zip(slots, verdicts):
        per_statement[slot] = max(per_statement[slot], verdict)
    return sum(per_statement) / len(per_statement)


def autoais_pssg(
    answer: AttributedAnswer,
    support: RankedList,
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
) -> float:
    """Mean over statements of max entailment from any supporting passage."""
    if not answer.statements:
        raise MetricError("autoais_pssg undefined for an empty answer")
    if not support:
        raise MetricError("autoais_pssg undefined for empty support")
    groups = [support.ids() for _ in answer.statements]
    return autoais_pssg_grouped(answer, groups, corpus, scorer, threshold)


def autoais_pssg_grouped(
    answer: AttributedAnswer,
    supports: Sequence[Sequence[str]],
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
) -> float:
    """Passage-attributability with a per-statement support list.

    Used for generate-then-retrieve outputs, where each statement has its
    own retrieved list; a statement with empty support contributes 0.
    """
    if not answer.statements:
        raise MetricError("autoais_pssg undefined for an empty answer")
    if len(supports) != len(answer.statements):
        raise MetricError("supports must align with statements")
    pairs = []
    slots = []
    for i, (stmt, docs) in enumerate(zip(answer.statements, supports)):
        for doc_id in docs:
            pairs.append((_premise(corpus, doc_id), stmt.text))
            slots.append(i)
    verdicts = _nli_batch(scorer, pairs, threshold)
    per_statement = [0] * len(answer.statements)
    for slot, verdict in zip(slots, verdicts):
        per_statement[slot] = max(per_statement[slot], verdict)
    return sum(per_statement) / len(per_statement)


def _concat_premise(corpus: Corpus, doc_ids: Iterable[str]) -> str:
    return "\n".join(_premise(corpus, doc_id) for doc_id in doc_ids)


def nli_citation_recall(
    answer: AttributedAnswer,
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
) -> float:
    """Mean over statements of entailment by the citation concatenation.

    Citations are concatenated in the order they appear in the statement,
    newline-joined. Statements with no citations score 0.
    """
    if not answer.statements:
        raise MetricError("nli_citation_recall undefined for an empty answer")
    pairs = []
    slots = []
    for i, stmt in enumerate(answer.statements):
        if stmt.citations:
            pairs.append((_concat_premise(corpus, stmt.citations), stmt.text))
            slots.append(i)
    verdicts = _nli_batch(scorer, pairs, threshold)
    per_statement = [0] * len(answer.statements)
    for slot, verdict in zip(slots, verdicts):
        per_statement[slot] = verdict
    return sum(per_statement) / len(per_statement)


def nli_citation_precision(
    answer: AttributedAnswer,
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
) -> float | None:
    """1 minus the fraction of irrelevant citations; ``None`` if uncited.

    A citation is irrelevant iff it does not entail its statement alone and
    the concatenation of the remaining citations still does.
    """
    total = sum(len(stmt.citations) for stmt in answer.statements)
    if total == 0:
        return None
    irrelevant = 0
    for stmt in answer.statements:
        if not stmt.citations:
            continue
        alone = _nli_batch(
            scorer,
            [(_premise(corpus, doc_id), stmt.text) for doc_id in stmt.citations],
            threshold,
        )
        for j, doc_id in enumerate(stmt.citations):
            if alone[j]:
                continue
            rest = [d for d in stmt.citations if d != doc_id]
            if not rest:
                continue
            without = _nli_batch(
                scorer, [(_concat_premise(corpus, rest), stmt.text)], threshold
            )[0]
            if without:
                irrelevant += 1
    return 1.0 - irrelevant / total


@dataclass(frozen=True)
class OverlapScore:
    precision: float | None
    recall: float | None


def citation_overlap(
    answer: AttributedAnswer,
    gold: AttributedAnswer | Iterable[AttributedAnswer],
) -> OverlapScore:
    """Set overlap between generated and gold citation unions.

    ``gold`` may be a single gold answer or several; the gold citation set
    is the union over them. A zero denominator is reported as ``None``.
    """
    generated = answer.cited_ids()
    if isinstance(gold, AttributedAnswer):
        golds: Iterable[AttributedAnswer] = (gold,)
    else:
        golds = gold
    gold_ids = {pid for g in golds for pid in g.cited_ids()}
    common = len(generated & gold_ids)
    return OverlapScore(
        precision=common / len(generated) if generated else None,
        recall=common / len(gold_ids) if gold_ids else None,
    )
