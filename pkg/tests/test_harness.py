import dataclasses
import random

import pytest

from attribench.harness import (
    CITATION_KEYS,
    ConfigError,
    ExperimentConfig,
    config_from_toml,
    correlate_with_annotations,
    corpus_from_gold,
    evaluate_answers,
    evaluate_retrieval,
    pearson,
    render_table,
    run_experiment,
    sweep_k,
    _macro,
)
from attribench.pipelines import ScenarioConfig
from attribench.retrieval import RankedList, write_qrels, write_run
from conftest import write_jsonl
from oracles import ref_pearson


def make_config(toy_corpus_path, toy_dataset_path, scenario="rtg_gold", **kwargs):
    return ExperimentConfig(
        corpus_path=str(toy_corpus_path),
        dataset_path=str(toy_dataset_path),
        scenario=ScenarioConfig(scenario=scenario, **kwargs.pop("scenario_kwargs", {})),
        **kwargs,
    )


class TestConfig:
    def test_hash_stable_for_equal_configs(self, toy_corpus_path, toy_dataset_path):
        a = make_config(toy_corpus_path, toy_dataset_path)
        b = make_config(toy_corpus_path, toy_dataset_path)
        assert a.hash() == b.hash()

    def test_hash_changes_with_any_field(self, toy_corpus_path, toy_dataset_path):
        base = make_config(toy_corpus_path, toy_dataset_path)
        assert base.hash() != dataclasses.replace(base, seed=1).hash()
        assert base.hash() != dataclasses.replace(base, k1=1.2).hash()
        assert (
            base.hash()
            != dataclasses.replace(
                base, scenario=ScenarioConfig(scenario="rtg_gold", k_docs=3)
            ).hash()
        )

    def test_hash_ignores_out_dir(self, toy_corpus_path, toy_dataset_path):
        base = make_config(toy_corpus_path, toy_dataset_path)
        assert base.hash() == dataclasses.replace(base, out_dir="/elsewhere").hash()

    def test_toml_round_trip(self, toy_config_path):
        config = config_from_toml(toy_config_path, scenario="rtg_gold", mock=True)
        assert config.scenario.scenario == "rtg_gold"
        assert config.chat_backend == "cite-echo"
        assert config.cutoffs == (1, 10)

    def test_bad_mapping_rejected(self, toy_corpus_path, toy_dataset_path):
        with pytest.raises(ConfigError):
            make_config(toy_corpus_path, toy_dataset_path, dataset_mapping="nope")


class TestMacro:
    def test_skips_excluded_from_mean(self):
        rows = [{"m": 1.0}, {"m": None}, {"m": 0.0}]
        table, skipped = _macro(rows, ["m"])
        assert table["m"] == 0.5
        assert skipped["m"] == 1

    def test_permutation_invariant(self):
        rows = [{"m": v} for v in (0.1, 0.9, 0.4, None, 0.7)]
        shuffled = list(rows)
        random.Random(3).shuffle(shuffled)
        assert _macro(rows, ["m"]) == _macro(shuffled, ["m"])


class TestPearson:
    def test_identity(self):
        assert pearson([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0)

    def test_reversed(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_hand_case(self):
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(
            ref_pearson([1, 2, 3], [1, 3, 2])
        )

    def test_zero_variance_skipped(self):
        assert pearson([1, 1, 1], [1, 2, 3]) is None

    def test_validation(self):
        with pytest.raises(ValueError):
            pearson([1], [1])
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])


class TestRunExperiment:
    def test_gold_run_perfect_citations(self, toy_corpus_path, toy_dataset_path, tmp_path):
        config = make_config(
            toy_corpus_path, toy_dataset_path, out_dir=str(tmp_path / "run")
        )
        report = run_experiment(config)
        assert report.status == "ok"
        assert report.table["overlap_precision"] == 1.0
        assert report.table["overlap_recall"] == 1.0
        assert report.table["autoais_cit"] == 1.0
        assert (tmp_path / "run" / "report.json").exists()
        assert (tmp_path / "run" / "outputs.jsonl").exists()
        assert (tmp_path / "run" / "metrics.jsonl").exists()

    def test_g_scenario_has_no_citation_metrics(self, toy_corpus_path, toy_dataset_path):
        report = run_experiment(make_config(toy_corpus_path, toy_dataset_path, scenario="g"))
        assert not set(report.table) & set(CITATION_KEYS)
        for record in report.per_query:
            assert "citations" not in record

    def test_gtr_cit_equals_pssg_per_query(self, toy_corpus_path, toy_dataset_path):
        config = make_config(toy_corpus_path, toy_dataset_path, scenario="gtr")
        report = run_experiment(config)
        assert report.per_query
        for record in report.per_query:
            cits = record["citations"]
            assert cits["autoais_cit"] == cits["autoais_pssg"]

    def test_failures_over_half_mark_run_failed(self, toy_corpus_path, toy_dataset_path):
        # The scripted backend has no fixtures, so every chat call errors.
        config = make_config(
            toy_corpus_path, toy_dataset_path, scenario="g", chat_backend="scripted"
        )
        report = run_experiment(config)
        assert report.status == "failed"
        assert report.metadata["n_failed"] == 10

    def test_metric_record_schema(self, toy_corpus_path, toy_dataset_path):
        report = run_experiment(make_config(toy_corpus_path, toy_dataset_path))
        record = report.per_query[0]
        assert set(record) == {"query_id", "correctness", "citations", "skipped"}


class TestEvaluateAnswers:
    def test_round_trips_run_metrics(self, toy_corpus_path, toy_dataset_path, toy_corpus, toy_queries, lexical_scorer, tmp_path):
        config = make_config(
            toy_corpus_path, toy_dataset_path, out_dir=str(tmp_path / "run")
        )
        live = run_experiment(config)
        replay = evaluate_answers(
            tmp_path / "run" / "outputs.jsonl", list(toy_queries), toy_corpus, lexical_scorer
        )
        assert replay.table == live.table


class TestSweep:
    def test_single_k_equals_run_experiment(self, toy_corpus_path, toy_dataset_path):
        config = make_config(toy_corpus_path, toy_dataset_path, scenario="rtg_vanilla")
        [(_, swept)] = sweep_k(config, [2])
        direct = run_experiment(
            dataclasses.replace(
                config, scenario=dataclasses.replace(config.scenario, k_docs=2)
            )
        )
        assert swept.table == direct.table

    def test_csv_long_format(self, toy_corpus_path, toy_dataset_path, tmp_path):
        config = make_config(
            toy_corpus_path,
            toy_dataset_path,
            scenario="rtg_vanilla",
            out_dir=str(tmp_path / "sweep"),
        )
        reports = sweep_k(config, [1, 2, 4])
        lines = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
        assert lines[0] == "k,metric,value"
        ks = {row.split(",")[0] for row in lines[1:]}
        assert ks == {"1", "2", "4"}
        metrics_per_k = len(reports[0][1].table)
        assert len(lines) - 1 == sum(len(r.table) for _, r in reports)
        assert metrics_per_k > 0

    def test_requires_rtg(self, toy_corpus_path, toy_dataset_path):
        with pytest.raises(ConfigError):
            sweep_k(make_config(toy_corpus_path, toy_dataset_path, scenario="g"), [1])


class TestEvaluateRetrieval:
    @pytest.fixture()
    def qrels_path(self, tmp_path):
        path = tmp_path / "qrels.txt"
        write_qrels({"q1": {"a": 1, "b": 1}, "q2": {"c": 1}}, path)
        return path

    def test_hand_built_two_query_fixture(self, tmp_path, qrels_path):
        run_path = tmp_path / "run.txt"
        write_run(
            [
                RankedList.from_scores("q1", [("a", 3.0), ("x", 2.0), ("b", 1.0)], k=10),
                RankedList.from_scores("q2", [("x", 2.0), ("c", 1.0)], k=10),
            ],
            run_path,
        )
        result = evaluate_retrieval([run_path], qrels_path, cutoffs=[1, 10])
        table = result["runs"]["run"]["table"]
        # q1: P@1=1, R@10=1; q2: P@1=0, R@10=1.
        assert table["P@1"] == 0.5
        assert table["R@10"] == 1.0
        # nDCG@10: q1 = (1 + 1/log2(4)) / (1 + 1/log2(3)); q2 = (1/log2(3)) / 1.
        import math

        q1 = (1 + 1 / math.log2(4)) / (1 + 1 / math.log2(3))
        q2 = (1 / math.log2(3)) / 1.0
        assert table["nDCG@10"] == pytest.approx((q1 + q2) / 2, abs=1e-12)

    def test_perfect_run_p1(self, tmp_path, qrels_path):
        run_path = tmp_path / "run.txt"
        write_run(
            [
                RankedList.from_scores("q1", [("a", 2.0), ("b", 1.0)], k=10),
                RankedList.from_scores("q2", [("c", 1.0)], k=10),
            ],
            run_path,
        )
        result = evaluate_retrieval([run_path], qrels_path, cutoffs=[1, 10])
        assert result["runs"]["run"]["table"]["P@1"] == 1.0
        assert result["runs"]["run"]["table"]["nDCG@10"] == 1.0

    def test_unknown_qid_skipped(self, tmp_path, qrels_path):
        run_path = tmp_path / "run.txt"
        write_run([RankedList.from_scores("q9", [("a", 1.0)], k=10)], run_path)
        result = evaluate_retrieval([run_path], qrels_path, cutoffs=[1])
        assert result["runs"]["run"]["n_missing_qrels"] == 1
        assert result["runs"]["run"]["n_queries"] == 0

    def test_max_row_dominates(self, tmp_path, qrels_path):
        run_a = tmp_path / "a.txt"
        run_b = tmp_path / "b.txt"
        write_run(
            [
                RankedList.from_scores("q1", [("x", 2.0), ("a", 1.0)], k=10),
                RankedList.from_scores("q2", [("c", 1.0)], k=10),
            ],
            run_a,
        )
        write_run(
            [
                RankedList.from_scores("q1", [("a", 2.0), ("b", 1.0)], k=10),
                RankedList.from_scores("q2", [("x", 1.0)], k=10),
            ],
            run_b,
        )
        result = evaluate_retrieval([run_a, run_b], qrels_path, cutoffs=[1])
        max_table = result["max"]["table"]
        for name in ("a", "b"):
            for key, value in result["runs"][name]["table"].items():
                assert max_table[key] >= value
        # Per query q1: best P@1 = 1 (run b); q2: best P@1 = 1 (run a).
        assert max_table["P@1"] == 1.0


class TestCorrelate:
    def _dataset(self, tmp_path, flags_follow_support):
        rows = []
        for i, attributable in enumerate([True, False, True, False]):
            supported = attributable if flags_follow_support else True
            text = "Alpha bravo [1]." if supported else "Quebec romeo [1]."
            rows.append(
                {
                    "query_id": f"q{i}",
                    "query": "x?",
                    "gold_passages": [
                        {"docid": "pa", "rel": 1, "text": "alpha bravo charlie delta"}
                    ],
                    "answers": [{"text": text, "attributable": attributable}],
                }
            )
        return write_jsonl(tmp_path / "corr.jsonl", rows)

    def test_perfect_agreement(self, tmp_path, lexical_scorer):
        from attribench.corpus import load_dataset

        queries, _ = load_dataset(self._dataset(tmp_path, flags_follow_support=True))
        corpus = corpus_from_gold(queries)
        result = correlate_with_annotations(queries, corpus, lexical_scorer)
        assert result["autoais_cit"] == pytest.approx(1.0)
        assert result["nli_recall"] == pytest.approx(1.0)

    def test_constant_metric_skipped(self, tmp_path, lexical_scorer):
        from attribench.corpus import load_dataset

        queries, _ = load_dataset(self._dataset(tmp_path, flags_follow_support=False))
        corpus = corpus_from_gold(queries)
        result = correlate_with_annotations(queries, corpus, lexical_scorer)
        assert result["autoais_cit"] is None  # all answers score 1.0

    def test_missing_annotations_rejected(self, toy_corpus, lexical_scorer, tmp_path):
        rows = [
            {
                "query_id": "q1",
                "query": "x?",
                "gold_passages": [{"docid": "pa", "rel": 1, "text": "alpha"}],
                "answers": [{"text": "Alpha."}],
            }
        ]
        from attribench.corpus import load_dataset

        queries, _ = load_dataset(write_jsonl(tmp_path / "d.jsonl", rows))
        with pytest.raises(ValueError):
            correlate_with_annotations(queries, toy_corpus, lexical_scorer)


def test_render_table_alignment():
    text = render_table({"bleu": 0.5, "rouge_l_f": 0.25}, title="t")
    lines = text.splitlines()
    assert lines[0] == "t"
    assert lines[1].startswith("bleu")
    assert "0.2500" in lines[2]
