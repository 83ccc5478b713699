"""Experiment orchestration: run scenarios, aggregate metrics, emit reports.

Per-query work fans out to a bounded thread pool; aggregation is a
deterministic fold over dataset order, so a run with mock backends and a
fixed seed produces byte-identical output files. Wall-clock timestamps go
to ``run.log`` only, never into report files.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from . import metrics as M
from .corpus import (
    AttributedAnswer,
    Corpus,
    DatasetMapping,
    EvalQuery,
    Passage,
    QUOTES_MAPPING,
    Statement,
    load_corpus,
    load_dataset,
)
from .fusion import max_oracle
from .modelio import (
    ChatGateway,
    EndpointConfig,
    ScoreGateway,
    build_chat_backend,
    build_score_backend,
)
from .pipelines import PipelineOutput, PromptSet, ScenarioConfig, run_scenario
from .retrieval import (
    BM25Params,
    Index,
    RankedList,
    build_index,
    eval_ranked_list,
    read_qrels,
    read_run,
)

logger = logging.getLogger(__name__)

CORRECTNESS_KEYS = (
    "bleu",
    "rouge_l_precision",
    "rouge_l_recall",
    "rouge_l_f",
    "similarity_precision",
    "similarity_recall",
    "similarity_f",
)
CITATION_KEYS = (
    "autoais_cit",
    "autoais_pssg",
    "nli_precision",
    "nli_recall",
    "overlap_precision",
    "overlap_recall",
)

DATASET_MAPPINGS = {"default": DatasetMapping(), "quotes": QUOTES_MAPPING}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    corpus_path: str
    dataset_path: str
    scenario: ScenarioConfig
    out_dir: str | None = None
    index_path: str | None = None
    dataset_mapping: str = "default"
    cutoffs: tuple[int, ...] = (1, 10)
    parallelism: int = 4
    seed: int = 0
    k1: float = 0.9
    b: float = 0.4
    nli_threshold: float = 0.5
    chat_backend: str = "cite-echo"
    score_backend: str = "lexical"
    chat_base: str | None = None
    score_base: str | None = None
    model: str = "default"

    def __post_init__(self) -> None:
        if self.dataset_mapping not in DATASET_MAPPINGS:
            raise ConfigError(f"unknown dataset mapping {self.dataset_mapping!r}")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")

    def hash(self) -> str:
        """Digest of every experiment-defining field (out_dir excluded)."""
        payload = dataclasses.asdict(self)
        payload.pop("out_dir")
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _read_toml(path: str | Path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    with open(path, "rb") as handle:
        return tomllib.load(handle)


def config_from_toml(
    path: str | Path,
    *,
    scenario: str | None = None,
    k_docs: int | None = None,
    m_subqueries: int | None = None,
    fusion: str | None = None,
    seed: int | None = None,
    out_dir: str | None = None,
    mock: bool = False,
) -> ExperimentConfig:
    """Build an ExperimentConfig from a TOML file plus CLI-style overrides.

    Sections: [dataset] corpus/dataset/mapping, [retrieval] k1/b/depth,
    [scenario] name/k_docs/m_subqueries/fusion/k_per_statement/prompt_set/
    pm2_lambda, [gateway] chat/scorer/chat_base/scorer_base/model/
    nli_threshold, [harness] out/seed/parallelism/cutoffs. ``mock`` forces
    the built-in deterministic backends regardless of the gateway section.
    """
    data = _read_toml(path)
    d_dataset = data.get("dataset", {})
    d_retrieval = data.get("retrieval", {})
    d_scenario = data.get("scenario", {})
    d_gateway = data.get("gateway", {})
    d_harness = data.get("harness", {})

    def pick(override, section, key, default):
        if override is not None:
            return override
        return section.get(key, default)

    scenario_config = ScenarioConfig(
        scenario=pick(scenario, d_scenario, "name", "rtg_vanilla"),
        k_docs=int(pick(k_docs, d_scenario, "k_docs", 2)),
        m_subqueries=int(pick(m_subqueries, d_scenario, "m_subqueries", 3)),
        fusion=pick(fusion, d_scenario, "fusion", "rerank"),
        k_per_statement=int(d_scenario.get("k_per_statement", 1)),
        prompt_set=d_scenario.get("prompt_set", "default"),
        first_stage_depth=int(d_retrieval.get("depth", 100)),
        pm2_lambda=float(d_scenario.get("pm2_lambda", 0.5)),
    )
    try:
        return ExperimentConfig(
            corpus_path=d_dataset["corpus"],
            dataset_path=d_dataset["dataset"],
            scenario=scenario_config,
            out_dir=out_dir if out_dir is not None else d_harness.get("out"),
            index_path=d_dataset.get("index"),
            dataset_mapping=d_dataset.get("mapping", "default"),
            cutoffs=tuple(d_harness.get("cutoffs", [1, 10])),
            parallelism=int(d_harness.get("parallelism", 4)),
            seed=int(pick(seed, d_harness, "seed", 0)),
            k1=float(d_retrieval.get("k1", 0.9)),
            b=float(d_retrieval.get("b", 0.4)),
            nli_threshold=float(d_gateway.get("nli_threshold", 0.5)),
            chat_backend="cite-echo" if mock else d_gateway.get("chat", "cite-echo"),
            score_backend="lexical" if mock else d_gateway.get("scorer", "lexical"),
            chat_base=None if mock else d_gateway.get("chat_base"),
            score_base=None if mock else d_gateway.get("scorer_base"),
            model=d_gateway.get("model", "default"),
        )
    except KeyError as exc:
        raise ConfigError(f"{path}: missing config key {exc}") from exc


@dataclass
class ScoreReport:
    """Per-query records plus the macro-averaged table and run metadata."""

    metadata: dict
    table: dict[str, float]
    skipped_counts: dict[str, int]
    per_query: list[dict] = field(default_factory=list)
    outputs: list[dict] = field(default_factory=list)
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "status": self.status,
            "table": self.table,
            "skipped_counts": self.skipped_counts,
        }


def _macro(per_query: Sequence[Mapping[str, float | None]], keys: Sequence[str]):
    table: dict[str, float] = {}
    skipped: dict[str, int] = {}
    for key in keys:
        values = []
        skip = 0
        for record in per_query:
            if key not in record:
                continue
            value = record[key]
            if value is None:
                skip += 1
            else:
                values.append(value)
        if values:
            table[key] = statistics.fmean(values)
        if skip:
            skipped[key] = skip
    return table, skipped


def _build_backends(config: ExperimentConfig) -> tuple[ChatGateway, ScoreGateway]:
    chat_endpoint = (
        EndpointConfig(base_url=config.chat_base, model=config.model)
        if config.chat_base
        else None
    )
    score_endpoint = (
        EndpointConfig(base_url=config.score_base, model=config.model)
        if config.score_base
        else None
    )
    chat = build_chat_backend(config.chat_backend, endpoint=chat_endpoint)
    scorer = build_score_backend(config.score_backend, endpoint=score_endpoint)
    return chat, scorer


def score_query(
    query: EvalQuery,
    output: PipelineOutput,
    corpus: Corpus,
    scorer: ScoreGateway,
    scenario: str,
    threshold: float = 0.5,
) -> dict:
    """All applicable metrics for one query's pipeline output.

    Citation metrics are omitted entirely for the closed-book scenario; for
    generate-then-retrieve, passage attributability uses each statement's
    own retrieved support (its citation set).
    """
    record: dict = {"query_id": query.id, "correctness": {}, "skipped": []}
    answer = output.answer
    candidate = answer.text
    golds = [g.text for g in query.gold_answers if g.statements]
    correctness = record["correctness"]
    if golds:
        correctness["bleu"] = M.best_over_candidates(candidate, golds, "bleu")
        rouge = M.best_over_candidates(candidate, golds, "rouge_l")
        correctness["rouge_l_precision"] = rouge.precision
        correctness["rouge_l_recall"] = rouge.recall
        correctness["rouge_l_f"] = rouge.f
        sim = M.best_over_candidates(candidate, golds, "similarity", scorer=scorer)
        correctness["similarity_precision"] = sim.precision
        correctness["similarity_recall"] = sim.recall
        correctness["similarity_f"] = sim.f
    else:
        record["skipped"].append("correctness:no_gold_answers")

    if scenario == "g":
        return record

    citations: dict[str, float | None] = {}
    record["citations"] = citations
    if not answer.statements:
        for key in CITATION_KEYS:
            citations[key] = None
        record["skipped"].extend(f"{k}:empty_answer" for k in CITATION_KEYS)
        return record

    citations["autoais_cit"] = M.autoais_cit(answer, corpus, scorer, threshold)
    if scenario == "gtr":
        groups = [list(stmt.citations) for stmt in answer.statements]
        citations["autoais_pssg"] = M.autoais_pssg_grouped(
            answer, groups, corpus, scorer, threshold
        )
    elif output.support is not None and output.support:
        citations["autoais_pssg"] = M.autoais_pssg(
            answer, output.support, corpus, scorer, threshold
        )
    else:
        citations["autoais_pssg"] = None
        record["skipped"].append("autoais_pssg:empty_support")
    citations["nli_recall"] = M.nli_citation_recall(answer, corpus, scorer, threshold)
    precision = M.nli_citation_precision(answer, corpus, scorer, threshold)
    citations["nli_precision"] = precision
    if precision is None:
        record["skipped"].append("nli_precision:no_citations")
    overlap = M.citation_overlap(answer, query.gold_answers)
    citations["overlap_precision"] = overlap.precision
    citations["overlap_recall"] = overlap.recall
    if overlap.precision is None:
        record["skipped"].append("overlap_precision:no_generated_citations")
    if overlap.recall is None:
        record["skipped"].append("overlap_recall:no_gold_citations")
    return record


def run_experiment(config: ExperimentConfig) -> ScoreReport:
    """Execute the configured scenario over the dataset and aggregate.

    Per-query failures are recorded and the run continues; if more than
    half the queries fail, the run is marked failed.
    """
    log_lines = [f"started {datetime.now(timezone.utc).isoformat()}"]
    corpus = load_corpus(config.corpus_path)
    mapping = DATASET_MAPPINGS[config.dataset_mapping]
    queries, load_diag = load_dataset(config.dataset_path, mapping)
    needs_index = config.scenario.scenario in ("rtg_vanilla", "rtg_query_gen", "gtr")
    index: Index | None = None
    if needs_index:
        if config.index_path:
            index = Index.load(config.index_path)
        else:
            index = build_index(corpus, params=BM25Params(k1=config.k1, b=config.b))
    chat, scorer = _build_backends(config)
    prompts = PromptSet.load(config.scenario.prompt_set)

    def work(query: EvalQuery):
        output = run_scenario(
            query, config.scenario, index, corpus, chat, scorer, prompts, seed=config.seed
        )
        if any(d.startswith("skipped:") for d in output.diagnostics):
            return output, None
        record = score_query(
            query, output, corpus, scorer,
            scenario=config.scenario.scenario, threshold=config.nli_threshold,
        )
        return output, record

    results: dict[str, tuple[PipelineOutput | None, dict | None, str | None]] = {}
    with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
        futures = {query.id: pool.submit(work, query) for query in queries}
        for query in queries:
            try:
                output, record = futures[query.id].result()
                results[query.id] = (output, record, None)
            except Exception as exc:  # noqa: BLE001 - per-query isolation
                logger.exception("query %s failed", query.id)
                results[query.id] = (None, None, f"{type(exc).__name__}: {exc}")

    outputs: list[dict] = []
    per_query: list[dict] = []
    failures: list[str] = []
    skipped_queries = 0
    for query in queries:
        output, record, error = results[query.id]
        if error is not None:
            failures.append(f"{query.id}: {error}")
            log_lines.append(f"FAIL {query.id}: {error}")
            continue
        outputs.append(output.to_record())
        if record is None:
            skipped_queries += 1
            continue
        per_query.append(record)

    flat = []
    for record in per_query:
        row = dict(record.get("correctness", {}))
        row.update(record.get("citations", {}))
        flat.append(row)
    keys = list(CORRECTNESS_KEYS)
    if config.scenario.scenario != "g":
        keys += list(CITATION_KEYS)
    table, skipped_counts = _macro(flat, keys)

    status = "ok"
    if queries and len(failures) * 2 > len(queries):
        status = "failed"
    metadata = {
        "config_hash": config.hash(),
        "scenario": config.scenario.scenario,
        "seed": config.seed,
        "chat_backend": config.chat_backend,
        "score_backend": config.score_backend,
        "n_queries": len(queries),
        "n_scored": len(per_query),
        "n_failed": len(failures),
        "n_skipped": skipped_queries,
        "n_dropped_citations": len(load_diag.dropped_citations),
    }
    report = ScoreReport(
        metadata=metadata,
        table=table,
        skipped_counts=skipped_counts,
        per_query=per_query,
        outputs=outputs,
        status=status,
    )
    log_lines.append(f"finished {datetime.now(timezone.utc).isoformat()}")
    if config.out_dir:
        _write_report(report, config.out_dir, log_lines)
    return report


def _write_jsonl(rows: Sequence[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, sort_keys=True, ensure_ascii=False))
            handle.write("\n")


def _write_report(report: ScoreReport, out_dir: str | Path, log_lines: list[str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(report.outputs, out / "outputs.jsonl")
    _write_jsonl(report.per_query, out / "metrics.jsonl")
    with open(out / "report.json", "w", encoding="utf-8") as handle:
        json.dump(report.to_dict(), handle, sort_keys=True, indent=2)
        handle.write("\n")
    with open(out / "run.log", "w", encoding="utf-8") as handle:
        handle.write("\n".join(log_lines) + "\n")


def sweep_k(config: ExperimentConfig, ks: Sequence[int]) -> list[tuple[int, ScoreReport]]:
    """Run the experiment at each supporting-document count.

    Writes a long-format ``sweep.csv`` (k, metric, value) under the config's
    output directory, plus one run directory per k.
    """
    if not config.scenario.scenario.startswith("rtg"):
        raise ConfigError("sweep_k applies to RTG scenarios")
    rows: list[tuple[int, str, float]] = []
    reports: list[tuple[int, ScoreReport]] = []
    for k in ks:
        scenario = dataclasses.replace(config.scenario, k_docs=k)
        sub_out = str(Path(config.out_dir) / f"k={k}") if config.out_dir else None
        run_config = dataclasses.replace(config, scenario=scenario, out_dir=sub_out)
        report = run_experiment(run_config)
        reports.append((k, report))
        for metric, value in sorted(report.table.items()):
            rows.append((k, metric, value))
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["k", "metric", "value"])
            writer.writerows(rows)
    return reports


def evaluate_retrieval(
    run_paths: Sequence[str | Path],
    qrels_path: str | Path,
    cutoffs: Sequence[int] = (1, 10),
) -> dict:
    """Macro-averaged ranked-list metrics for one or more TREC run files.

    Returns per-run tables keyed by file stem; with several runs an
    additional ``MAX`` row gives, per query, the elementwise best over the
    runs (an upper bound for any fusion of them), macro-averaged.
    """
    qrels = read_qrels(qrels_path)
    per_run_tables: dict[str, dict] = {}
    per_query_maps: dict[str, dict[str, dict[str, float | None]]] = {}
    for path in run_paths:
        name = Path(path).stem
        run = read_run(path)
        query_maps: dict[str, dict[str, float | None]] = {}
        missing = 0
        for qid, ranked in sorted(run.items()):
            if qid not in qrels:
                missing += 1
                continue
            query_maps[qid] = eval_ranked_list(ranked, qrels[qid], cutoffs)
        table, skipped = _macro(list(query_maps.values()), _metric_keys(cutoffs))
        per_run_tables[name] = {
            "table": table,
            "skipped_counts": skipped,
            "n_queries": len(query_maps),
            "n_missing_qrels": missing,
        }
        per_query_maps[name] = query_maps

    result = {"runs": per_run_tables}
    if len(run_paths) > 1:
        all_qids = sorted({qid for maps in per_query_maps.values() for qid in maps})
        max_maps = []
        for qid in all_qids:
            entries = [
                (name, maps[qid])
                for name, maps in per_query_maps.items()
                if qid in maps
            ]
            max_maps.append(max_oracle(entries))
        table, skipped = _macro(max_maps, _metric_keys(cutoffs))
        result["max"] = {
            "table": table,
            "skipped_counts": skipped,
            "n_queries": len(all_qids),
        }
    return result


def _metric_keys(cutoffs: Sequence[int]) -> list[str]:
    keys = []
    for k in cutoffs:
        keys += [f"P@{k}", f"R@{k}", f"nDCG@{k}"]
    return keys


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float | None:
    """Product-moment correlation; ``None`` when either side is constant."""
    if len(xs) != len(ys):
        raise ValueError("pearson needs equal-length vectors")
    if len(xs) < 2:
        raise ValueError("pearson needs at least two points")
    mx = statistics.fmean(xs)
    my = statistics.fmean(ys)
    cov = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    vx = math.fsum((x - mx) ** 2 for x in xs)
    vy = math.fsum((y - my) ** 2 for y in ys)
    if vx == 0.0 or vy == 0.0:
        return None
    return cov / math.sqrt(vx * vy)


def corpus_from_gold(queries: Sequence[EvalQuery]) -> Corpus:
    """Build a passage collection from gold passages that embed their text."""
    passages: dict[str, Passage] = {}
    for query in queries:
        for gold in query.gold_passages:
            if gold.text and gold.id not in passages:
                passages[gold.id] = Passage(id=gold.id, text=gold.text)
    return Corpus(passages.values())


def correlate_with_annotations(
    queries: Sequence[EvalQuery],
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
) -> dict:
    """Correlate NLI-based citation metrics with attributability labels.

    Computes autoais_cit, nli_precision, and nli_recall on every gold
    answer carrying an ``attributable`` annotation and reports the Pearson
    correlation of each metric against the binary flag. Metrics skipped for
    an answer (e.g. precision with no citations) drop that answer from that
    metric's vector. Zero-variance vectors are reported as ``None``.
    """
    labels: list[float] = []
    vectors: dict[str, list[tuple[float, float]]] = {
        "autoais_cit": [],
        "nli_precision": [],
        "nli_recall": [],
    }
    for query in queries:
        for answer, note in zip(query.gold_answers, query.annotations):
            if note is None or note.attributable is None or not answer.statements:
                continue
            flag = 1.0 if note.attributable else 0.0
            labels.append(flag)
            vectors["autoais_cit"].append(
                (M.autoais_cit(answer, corpus, scorer, threshold), flag)
            )
            vectors["nli_recall"].append(
                (M.nli_citation_recall(answer, corpus, scorer, threshold), flag)
            )
            precision = M.nli_citation_precision(answer, corpus, scorer, threshold)
            if precision is not None:
                vectors["nli_precision"].append((precision, flag))
    if not labels:
        raise ValueError("dataset carries no attributability annotations")
    out: dict = {"n_answers": len(labels)}
    for name, pairs in vectors.items():
        if len(pairs) < 2:
            out[name] = None
            continue
        xs = [x for x, _ in pairs]
        ys = [y for _, y in pairs]
        out[name] = pearson(xs, ys)
    return out


def evaluate_answers(
    pred_path: str | Path,
    queries: Sequence[EvalQuery],
    corpus: Corpus,
    scorer: ScoreGateway,
    threshold: float = 0.5,
    out_dir: str | Path | None = None,
) -> ScoreReport:
    """Re-score stored pipeline outputs against a dataset.

    ``pred_path`` is an outputs.jsonl file as written by the run command.
    Records whose query id is absent from the dataset are skipped with a
    diagnostic count.
    """
    by_id = {query.id: query for query in queries}
    per_query: list[dict] = []
    scenario = "g"
    unknown = 0
    with open(pred_path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            query = by_id.get(record["query_id"])
            if query is None:
                unknown += 1
                continue
            scenario = record.get("scenario", "g")
            statements = tuple(
                Statement(text=s["text"], citations=tuple(s.get("citations", ())))
                for s in record.get("statements", [])
                if s.get("text", "").strip()
            )
            answer = AttributedAnswer(
                statements=statements, raw_text=record.get("answer_raw", "")
            )
            support_ids = record.get("support", [])
            support = None
            if support_ids:
                n = len(support_ids)
                support = RankedList(
                    query_id=query.id,
                    entries=tuple(
                        (doc_id, (n - i) / n) for i, doc_id in enumerate(support_ids)
                    ),
                    k=n,
                )
            output = PipelineOutput(
                query_id=query.id, scenario=scenario, answer=answer, support=support
            )
            per_query.append(
                score_query(query, output, corpus, scorer, scenario, threshold)
            )

    flat = []
    for record in per_query:
        row = dict(record.get("correctness", {}))
        row.update(record.get("citations", {}))
        flat.append(row)
    keys = list(CORRECTNESS_KEYS)
    if scenario != "g":
        keys += list(CITATION_KEYS)
    table, skipped_counts = _macro(flat, keys)
    report = ScoreReport(
        metadata={
            "scenario": scenario,
            "n_scored": len(per_query),
            "n_unknown_queries": unknown,
        },
        table=table,
        skipped_counts=skipped_counts,
        per_query=per_query,
    )
    if out_dir is not None:
        _write_report(report, out_dir, ["evaluate_answers"])
    return report


def render_table(table: Mapping[str, float], title: str = "") -> str:
    """Aligned two-column text rendering of a metric table."""
    lines = []
    if title:
        lines.append(title)
    width = max((len(k) for k in table), default=6)
    for key in sorted(table):
        lines.append(f"{key:<{width}}  {table[key]:.4f}")
    return "\n".join(lines)
