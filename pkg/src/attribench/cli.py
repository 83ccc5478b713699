"""Command-line surface.

Subcommands: ``index build``, ``run``, ``eval answers``, ``eval retrieval``,
``sweep-k``, ``correlate``, ``report``. Exit codes: 0 success, 1 run failed,
2 bad configuration or input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import harness
from .corpus import CorpusError, load_corpus, load_dataset
from .fusion import FUSION_METHODS
from .modelio import GatewayError, build_score_backend
from .pipelines import PipelineError
from .retrieval import BM25Params, RetrievalError, build_index

SCENARIO_FLAGS = {
    "g": "g",
    "rtg-gold": "rtg_gold",
    "rtg-vanilla": "rtg_vanilla",
    "rtg-query-gen": "rtg_query_gen",
    "gtr": "gtr",
}


def _parse_ints(raw: str) -> list[int]:
    return [int(part) for part in raw.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attribench",
        description="Benchmark harness for attributed information seeking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    index = sub.add_parser("index", help="index management")
    index_sub = index.add_subparsers(dest="index_command", required=True)
    build = index_sub.add_parser("build", help="build a lexical index from a corpus")
    build.add_argument("--corpus", required=True)
    build.add_argument("--out", required=True)
    build.add_argument("--k1", type=float, default=0.9)
    build.add_argument("--b", type=float, default=0.4)

    run = sub.add_parser("run", help="run a scenario over a dataset")
    run.add_argument("--config", required=True)
    run.add_argument("--scenario", choices=sorted(SCENARIO_FLAGS), required=True)
    run.add_argument("--k", type=int, default=None, help="supporting documents")
    run.add_argument("--m", type=int, default=None, help="generated subqueries")
    run.add_argument("--fusion", choices=FUSION_METHODS, default=None)
    run.add_argument("--mock", action="store_true", help="use deterministic mock backends")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--out", required=True)

    evaluate = sub.add_parser("eval", help="evaluate stored outputs")
    eval_sub = evaluate.add_subparsers(dest="eval_command", required=True)
    answers = eval_sub.add_parser("answers", help="score stored answer records")
    answers.add_argument("--pred", required=True)
    answers.add_argument("--dataset", required=True)
    answers.add_argument("--corpus", default=None, help="passage texts for NLI metrics")
    answers.add_argument("--out", required=True)
    answers.add_argument("--mapping", default="default", choices=sorted(harness.DATASET_MAPPINGS))
    answers.add_argument("--scorer", default="lexical", help="score backend (lexical|http)")
    retrieval = eval_sub.add_parser("retrieval", help="evaluate TREC run files")
    retrieval.add_argument("--run", action="append", required=True, dest="runs")
    retrieval.add_argument("--qrels", required=True)
    retrieval.add_argument("--cutoffs", default="1,10")
    retrieval.add_argument("--out", default=None)

    sweep = sub.add_parser("sweep-k", help="re-run an RTG scenario over several k")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--ks", required=True)
    sweep.add_argument("--scenario", choices=sorted(SCENARIO_FLAGS), default=None)
    sweep.add_argument("--mock", action="store_true")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default=None)

    correlate = sub.add_parser("correlate", help="correlate metrics with annotations")
    correlate.add_argument("--dataset", required=True)
    correlate.add_argument("--corpus", default=None, help="optional corpus for citation texts")
    correlate.add_argument("--out", required=True)
    correlate.add_argument("--mapping", default="default", choices=sorted(harness.DATASET_MAPPINGS))
    correlate.add_argument("--scorer", default="lexical")

    report = sub.add_parser("report", help="render a stored report")
    report.add_argument("--dir", required=True)
    report.add_argument("--format", choices=("table", "csv", "json"), default="table")

    return parser


def _cmd_index_build(args) -> int:
    corpus = load_corpus(args.corpus)
    index = build_index(corpus, params=BM25Params(k1=args.k1, b=args.b))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index.save(out / "index.json")
    print(f"indexed {index.n_docs} passages -> {out / 'index.json'}")
    return 0


def _cmd_run(args) -> int:
    config = harness.config_from_toml(
        args.config,
        scenario=SCENARIO_FLAGS[args.scenario],
        k_docs=args.k,
        m_subqueries=args.m,
        fusion=args.fusion,
        seed=args.seed,
        out_dir=args.out,
        mock=args.mock,
    )
    report = harness.run_experiment(config)
    print(harness.render_table(report.table, title=f"scenario={args.scenario}"))
    if report.status != "ok":
        print(f"run failed: {report.metadata['n_failed']} queries errored", file=sys.stderr)
        return 1
    return 0


def _cmd_eval_answers(args) -> int:
    queries, _ = load_dataset(args.dataset, harness.DATASET_MAPPINGS[args.mapping])
    if args.corpus:
        corpus = load_corpus(args.corpus)
    else:
        corpus = harness.corpus_from_gold(queries)
        if len(corpus) == 0 and _predictions_carry_citations(args.pred):
            print(
                "predictions carry citations but no passage texts are available: "
                "pass --corpus or use a dataset whose gold passages embed text",
                file=sys.stderr,
            )
            return 2
    scorer = build_score_backend(args.scorer)
    report = harness.evaluate_answers(
        args.pred, queries, corpus, scorer, out_dir=args.out
    )
    print(harness.render_table(report.table))
    return 0


def _predictions_carry_citations(pred_path: str) -> bool:
    with open(pred_path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("support") or any(
                s.get("citations") for s in record.get("statements", [])
            ):
                return True
    return False


def _cmd_eval_retrieval(args) -> int:
    cutoffs = _parse_ints(args.cutoffs)
    result = harness.evaluate_retrieval(args.runs, args.qrels, cutoffs)
    for name, data in result["runs"].items():
        print(harness.render_table(data["table"], title=f"run={name} (n={data['n_queries']})"))
    if "max" in result:
        print(harness.render_table(result["max"]["table"], title="MAX"))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump(result, handle, sort_keys=True, indent=2)
            handle.write("\n")
    return 0


def _cmd_sweep(args) -> int:
    config = harness.config_from_toml(
        args.config,
        scenario=SCENARIO_FLAGS[args.scenario] if args.scenario else None,
        seed=args.seed,
        out_dir=args.out,
        mock=args.mock,
    )
    reports = harness.sweep_k(config, _parse_ints(args.ks))
    for k, report in reports:
        print(harness.render_table(report.table, title=f"k={k}"))
    return 0


def _cmd_correlate(args) -> int:
    queries, _ = load_dataset(args.dataset, harness.DATASET_MAPPINGS[args.mapping])
    if args.corpus:
        corpus = load_corpus(args.corpus)
    else:
        corpus = harness.corpus_from_gold(queries)
        if len(corpus) == 0:
            print(
                "no passage texts available: pass --corpus or embed texts in gold passages",
                file=sys.stderr,
            )
            return 2
    scorer = build_score_backend(args.scorer)
    result = harness.correlate_with_annotations(queries, corpus, scorer)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "correlation.json", "w", encoding="utf-8") as handle:
        json.dump(result, handle, sort_keys=True, indent=2)
        handle.write("\n")
    for key, value in sorted(result.items()):
        print(f"{key}: {value if value is not None else 'skipped'}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.dir) / "report.json"
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    if args.format == "json":
        print(json.dumps(data, sort_keys=True, indent=2))
    elif args.format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(["metric", "value"])
        for key in sorted(data["table"]):
            writer.writerow([key, data["table"][key]])
    else:
        print(harness.render_table(data["table"], title=f"report {args.dir}"))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "index":
            return _cmd_index_build(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "eval" and args.eval_command == "answers":
            return _cmd_eval_answers(args)
        if args.command == "eval" and args.eval_command == "retrieval":
            return _cmd_eval_retrieval(args)
        if args.command == "sweep-k":
            return _cmd_sweep(args)
        if args.command == "correlate":
            return _cmd_correlate(args)
        if args.command == "report":
            return _cmd_report(args)
        parser.error(f"unknown command {args.command!r}")
    except (harness.ConfigError, CorpusError, PipelineError, RetrievalError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GatewayError as exc:
        print(f"gateway error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
