"""The three answer-generation scenarios and their prompt/parse plumbing.

* ``g``: closed-book generation, no citations.
* ``rtg_gold`` / ``rtg_vanilla`` / ``rtg_query_gen``: retrieve supporting
  passages (gold list, two-stage search, or fused subquery retrieval), feed
  them to the model numbered ``[1]..[k]``, and parse the cited answer. The
  marker-to-passage mapping is positional.
* ``gtr``: generate first, then retrieve supporting passages per statement
  and attach them as citations.

Prompt templates are data files shipped with the package (one bundle per
``prompt_set`` name) so runs are reproducible against a fixed bundle.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

from .corpus import (
    AttributedAnswer,
    Corpus,
    EvalQuery,
    Statement,
    attributed_answer_from_text,
)
from .fusion import FUSION_METHODS, FusionInput, fuse
from .modelio import ChatGateway, ChatRequest, ScoreGateway
from .retrieval import Index, RankedList, passage_text, rerank, search
from .text import segment_statements, strip_citation_markers

__all__ = [
    "SCENARIOS",
    "ScenarioConfig",
    "SubqueryBatch",
    "PromptSet",
    "PipelineOutput",
    "segment_statements",
    "parse_attributed_answer",
    "generate_subqueries",
    "run_g",
    "run_rtg",
    "run_gtr",
    "run_scenario",
]

SCENARIOS = ("g", "rtg_gold", "rtg_vanilla", "rtg_query_gen", "gtr")


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for one scenario run."""

    scenario: str
    k_docs: int = 2
    m_subqueries: int = 3
    fusion: str = "rerank"
    k_per_statement: int = 1
    prompt_set: str = "default"
    first_stage_depth: int = 100
    pm2_lambda: float = 0.5

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise PipelineError(f"unknown scenario {self.scenario!r}")
        if self.fusion not in FUSION_METHODS:
            raise PipelineError(f"unknown fusion method {self.fusion!r}")
        if self.scenario.startswith("rtg") and self.k_docs < 1:
            raise PipelineError("k_docs must be >= 1 for RTG scenarios")
        if self.m_subqueries < 0:
            raise PipelineError("m_subqueries must be >= 0")
        if self.scenario == "gtr" and self.k_per_statement < 1:
            raise PipelineError("k_per_statement must be >= 1 for GTR")


@dataclass(frozen=True)
class SubqueryBatch:
    """Generated reformulations of one query, deduplicated, no empties."""

    origin: str
    queries: tuple[str, ...]


@dataclass(frozen=True)
class PromptSet:
    """Templates for generation, retrieval-augmented generation, and rewrites."""

    g: str
    rtg: str
    query_gen: str

    @classmethod
    def load(cls, name: str = "default") -> "PromptSet":
        root = resources.files("attribench").joinpath("prompts", name)
        try:
            return cls(
                g=root.joinpath("g.txt").read_text(encoding="utf-8"),
                rtg=root.joinpath("rtg.txt").read_text(encoding="utf-8"),
                query_gen=root.joinpath("query_gen.txt").read_text(encoding="utf-8"),
            )
        except FileNotFoundError as exc:
            raise PipelineError(f"unknown prompt set {name!r}") from exc


@dataclass
class PipelineOutput:
    """Everything one scenario run produced for one query."""

    query_id: str
    scenario: str
    answer: AttributedAnswer
    support: RankedList | None = None
    subqueries: tuple[str, ...] = ()
    diagnostics: list[str] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "scenario": self.scenario,
            "answer_raw": self.answer.raw_text,
            "statements": [
                {"text": s.text, "citations": list(s.citations)}
                for s in self.answer.statements
            ],
            "support": self.support.ids() if self.support is not None else [],
            "subqueries": list(self.subqueries),
            "diagnostics": list(self.diagnostics),
        }


def parse_attributed_answer(
    text: str, passage_ids: list[str] | tuple[str, ...]
) -> AttributedAnswer:
    """Parse a generation whose markers index 1-based into ``passage_ids``."""
    answer, _ = attributed_answer_from_text(text, passage_ids)
    return answer


def _format_passages(corpus: Corpus, support: RankedList, query: EvalQuery) -> str:
    lines = []
    for number, doc_id in enumerate(support.ids(), 1):
        text = passage_text(corpus, doc_id)
        if not text:
            text = _gold_text_fallback(query, doc_id)
        lines.append(f"[{number}] " + " ".join(text.split()))
    return "\n".join(lines)


def _gold_text_fallback(query: EvalQuery, doc_id: str) -> str:
    for gold in query.gold_passages:
        if gold.id == doc_id and gold.text:
            return gold.text
    return ""


def _chat(
    gateway: ChatGateway, prompt: str, query: EvalQuery, seed: int | None
) -> str:
    request = ChatRequest(
        messages=(("user", prompt),),
        temperature=0.0,
        seed=seed,
        tag=query.id,
    )
    return gateway.chat(request)


def run_g(
    query: EvalQuery,
    chat: ChatGateway,
    prompts: PromptSet | None = None,
    seed: int | None = None,
) -> PipelineOutput:
    """Closed-book generation; the answer carries no citations."""
    prompts = prompts or PromptSet.load()
    raw = _chat(chat, prompts.g.format(query=query.text), query, seed)
    answer = parse_attributed_answer(raw, [])
    out = PipelineOutput(query_id=query.id, scenario="g", answer=answer)
    if not answer.statements:
        out.diagnostics.append("empty_generation")
    return out


def generate_subqueries(
    query: EvalQuery,
    m: int,
    chat: ChatGateway,
    prompts: PromptSet | None = None,
    seed: int | None = None,
) -> tuple[SubqueryBatch, list[str]]:
    """Ask the model for ``m`` reformulations, one per line.

    Lines are trimmed, stripped of list markers, and deduplicated keeping
    first occurrence; the batch may be shorter than ``m``. Unparseable
    output yields an empty batch plus a diagnostic, and the caller falls
    back to the original query alone.
    """
    if m == 0:
        return SubqueryBatch(origin=query.id, queries=()), []
    prompts = prompts or PromptSet.load()
    raw = _chat(chat, prompts.query_gen.format(query=query.text, m=m), query, seed)
    seen: list[str] = []
    for line in raw.splitlines():
        line = re.sub(r"^\s*(?:\d+[.)]\s*|[-*]\s+)", "", line).strip()
        if line and line not in seen:
            seen.append(line)
    diagnostics = [] if seen else ["unparseable_subqueries"]
    return SubqueryBatch(origin=query.id, queries=tuple(seen[:m])), diagnostics


def _two_stage(
    query_text: str,
    query_id: str,
    config: ScenarioConfig,
    index: Index,
    corpus: Corpus,
    scorer: ScoreGateway,
) -> RankedList:
    first = search(index, query_text, config.first_stage_depth, query_id=query_id)
    return rerank(first, query_text, scorer, corpus, depth=config.first_stage_depth)


def _gold_support(query: EvalQuery, k_docs: int) -> RankedList:
    # Gold passages keep their dataset order via strictly decreasing scores.
    n = len(query.gold_passages)
    if n == 0:
        return RankedList(query_id=query.id, entries=(), k=k_docs)
    entries = tuple(
        (gold.id, (n - i) / n) for i, gold in enumerate(query.gold_passages)
    )
    return RankedList(query_id=query.id, entries=entries, k=n).truncated(k_docs)


def run_rtg(
    query: EvalQuery,
    config: ScenarioConfig,
    index: Index | None,
    corpus: Corpus,
    chat: ChatGateway,
    scorer: ScoreGateway,
    prompts: PromptSet | None = None,
    seed: int | None = None,
) -> PipelineOutput:
    """Retrieve-then-generate in its gold, vanilla, or query-gen variant."""
    prompts = prompts or PromptSet.load()
    out = PipelineOutput(
        query_id=query.id,
        scenario=config.scenario,
        answer=AttributedAnswer(statements=(), raw_text=""),
    )

    if config.scenario == "rtg_gold":
        support = _gold_support(query, config.k_docs)
        if not support:
            out.diagnostics.append("skipped:no_gold_passages")
            out.support = support
            return out
    else:
        if index is None:
            raise PipelineError(f"{config.scenario} requires an index")
        if config.scenario == "rtg_vanilla":
            support = _two_stage(
                query.text, query.id, config, index, corpus, scorer
            ).truncated(config.k_docs)
        else:
            batch, diags = generate_subqueries(query, config.m_subqueries, chat, prompts, seed)
            out.diagnostics.extend(diags)
            out.subqueries = batch.queries
            lists = [_two_stage(query.text, query.id, config, index, corpus, scorer)]
            for i, subquery in enumerate(batch.queries, 1):
                lists.append(
                    _two_stage(
                        subquery, f"{query.id}#g{i}", config, index, corpus, scorer
                    )
                )
            support = fuse(
                config.fusion,
                FusionInput(lists=tuple(lists), origin_query_id=query.id),
                config.k_docs,
                original_query=query.text,
                scorer=scorer,
                corpus=corpus,
                pm2_lambda=config.pm2_lambda,
            )
        if not support:
            out.diagnostics.append("empty_retrieval")

    prompt = prompts.rtg.format(
        passages=_format_passages(corpus, support, query), query=query.text
    )
    raw = _chat(chat, prompt, query, seed)
    answer, dropped = attributed_answer_from_text(raw, support.ids())
    if dropped:
        out.diagnostics.append(f"dropped_citation_markers:{dropped}")
    if not answer.statements:
        out.diagnostics.append("empty_generation")
    out.answer = answer
    out.support = support
    return out


def run_gtr(
    query: EvalQuery,
    config: ScenarioConfig,
    index: Index,
    corpus: Corpus,
    chat: ChatGateway,
    scorer: ScoreGateway,
    prompts: PromptSet | None = None,
    seed: int | None = None,
) -> PipelineOutput:
    """Generate-then-retrieve: cite each statement with its own retrieval."""
    prompts = prompts or PromptSet.load()
    base = run_g(query, chat, prompts, seed)
    statements = []
    diagnostics = list(base.diagnostics)
    for stmt in base.answer.statements:
        ranked = _two_stage(
            strip_citation_markers(stmt.text), query.id, config, index, corpus, scorer
        ).truncated(config.k_per_statement)
        if not ranked:
            diagnostics.append(f"no_support_for_statement:{stmt.text[:40]}")
        statements.append(Statement(text=stmt.text, citations=tuple(ranked.ids())))
    answer = AttributedAnswer(
        statements=tuple(statements), raw_text=base.answer.raw_text
    )
    return PipelineOutput(
        query_id=query.id,
        scenario="gtr",
        answer=answer,
        diagnostics=diagnostics,
    )


def run_scenario(
    query: EvalQuery,
    config: ScenarioConfig,
    index: Index | None,
    corpus: Corpus,
    chat: ChatGateway,
    scorer: ScoreGateway,
    prompts: PromptSet | None = None,
    seed: int | None = None,
) -> PipelineOutput:
    """Dispatch one query through the configured scenario."""
    if config.scenario == "g":
        return run_g(query, chat, prompts, seed)
    if config.scenario == "gtr":
        if index is None:
            raise PipelineError("gtr requires an index")
        return run_gtr(query, config, index, corpus, chat, scorer, prompts, seed)
    return run_rtg(query, config, index, corpus, chat, scorer, prompts, seed)
