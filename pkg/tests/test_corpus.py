import json
import random

import pytest

from attribench.corpus import (
    CorpusError,
    DatasetStats,
    Passage,
    Statement,
    attributed_answer_from_text,
    dataset_stats,
    load_corpus,
    load_dataset,
    query_to_record,
    save_dataset,
    validate,
)
from conftest import FIXTURES, write_jsonl


class TestLoadCorpus:
    def test_three_records(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [
                {"docid": "a", "text": "alpha text", "title": "A"},
                {"docid": "b", "text": "beta text"},
                {"docid": "c", "text": "gamma text"},
            ],
        )
        corpus = load_corpus(path)
        assert corpus.size == 3
        assert corpus["a"].title == "A"
        assert corpus["b"].title is None

    def test_missing_id_field_reports_line(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [{"docid": "a", "text": "x"}, {"text": "no id"}],
        )
        with pytest.raises(CorpusError, match=r":2.*docid"):
            load_corpus(path)

    def test_duplicate_id_named(self, tmp_path):
        path = write_jsonl(
            tmp_path / "c.jsonl",
            [{"docid": "p1", "text": "x"}, {"docid": "p1", "text": "y"}],
        )
        with pytest.raises(CorpusError, match="p1"):
            load_corpus(path)

    def test_empty_text_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "c.jsonl", [{"docid": "a", "text": "   "}])
        with pytest.raises(CorpusError, match=r":1"):
            load_corpus(path)

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text('{"docid": "a", "text": "x"}\n{broken\n')
        with pytest.raises(CorpusError, match=r":2"):
            load_corpus(path)

    def test_order_independent(self, tmp_path):
        rows = [{"docid": f"d{i}", "text": f"text {i}"} for i in range(5)]
        a = load_corpus(write_jsonl(tmp_path / "a.jsonl", rows))
        b = load_corpus(write_jsonl(tmp_path / "b.jsonl", rows[::-1]))
        assert sorted(a.ids()) == sorted(b.ids())


class TestTypes:
    def test_passage_invariants(self):
        with pytest.raises(CorpusError):
            Passage(id="", text="x")
        with pytest.raises(CorpusError):
            Passage(id="a", text="  ")

    def test_statement_invariants(self):
        with pytest.raises(CorpusError):
            Statement(text=" ")
        with pytest.raises(CorpusError):
            Statement(text="x", citations=("p1", "p1"))

    def test_degenerate_uncited_answer(self):
        answer, dropped = attributed_answer_from_text("No cites here. None at all.", [])
        assert dropped == 0
        assert not answer.has_citations()
        assert answer.cited_ids() == set()


class TestLoadDataset:
    def test_toy_dataset(self, toy_queries):
        assert len(toy_queries) == 10
        assert all(q.gold_answers for q in toy_queries)
        # Every surviving citation resolves within that query's gold list.
        for query in toy_queries:
            gold_ids = set(query.gold_passage_ids())
            for answer in query.gold_answers:
                assert answer.cited_ids() <= gold_ids

    def test_out_of_range_citation_dropped_not_fatal(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [
                {
                    "query_id": "q1",
                    "query": "what?",
                    "gold_passages": [{"docid": "p1", "rel": 1}],
                    "answers": [{"text": "Fine [1]. Broken [9].", "informative": True}],
                }
            ],
        )
        queries, diag = load_dataset(path)
        assert len(queries) == 1
        assert diag.dropped_citations == [{"query_id": "q1", "answer_index": 0, "count": 1}]
        answer = queries[0].gold_answers[0]
        assert answer.statements[0].citations == ("p1",)
        assert answer.statements[1].citations == ()

    def test_empty_file_warns(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        queries, diag = load_dataset(path)
        assert queries == []
        assert diag.warnings

    def test_annotation_coercion(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [
                {
                    "query_id": "q1",
                    "query": "x?",
                    "gold_passages": [],
                    "answers": [
                        {"text": "One.", "informative": "yes", "attributable": 0},
                        {"text": "Two."},
                    ],
                }
            ],
        )
        queries, _ = load_dataset(path)
        notes = queries[0].annotations
        assert notes[0].informative is True
        assert notes[0].attributable is False
        assert notes[1] is None


class TestRoundTrip:
    def test_toy_dataset_round_trips(self, toy_queries, tmp_path):
        out = tmp_path / "rt.jsonl"
        save_dataset(toy_queries, out)
        reloaded, _ = load_dataset(out)
        assert reloaded == list(toy_queries)

    def test_record_form_is_stable(self, toy_queries):
        record = query_to_record(toy_queries[0])
        assert json.loads(json.dumps(record)) == record


class TestDatasetStats:
    def test_distinct_citations_counted_per_answer(self, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [
                {
                    "query_id": "q1",
                    "query": "x?",
                    "gold_passages": [{"docid": "p1", "rel": 1}, {"docid": "p2", "rel": 1}],
                    "answers": [{"text": "A [1]. B [1][2]."}],
                }
            ],
        )
        queries, _ = load_dataset(path)
        stats = dataset_stats(queries)
        assert stats.avg_citations == 2
        assert stats.n_queries == 1
        assert stats.n_answers == 1

    def test_empty_input_all_zero(self):
        assert dataset_stats([]) == DatasetStats()

    def test_permutation_invariance(self, toy_queries):
        shuffled = list(toy_queries)
        random.Random(13).shuffle(shuffled)
        assert dataset_stats(shuffled) == dataset_stats(list(toy_queries))

    def test_sample50_matches_committed_stats(self):
        queries, _ = load_dataset(FIXTURES / "sample50.jsonl")
        stats = dataset_stats(queries).to_dict()
        committed = json.loads((FIXTURES / "sample50.stats.json").read_text())
        assert stats == committed


class TestValidate:
    def test_all_resolved_is_empty(self, toy_queries, toy_corpus):
        report = validate(list(toy_queries), toy_corpus)
        assert report.is_empty()

    def test_unresolved_citation_reported(self, toy_corpus, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [
                {
                    "query_id": "q1",
                    "query": "x?",
                    "gold_passages": [{"docid": "p99", "rel": 1}],
                    "answers": [{"text": "A [1]."}],
                }
            ],
        )
        queries, _ = load_dataset(path)
        report = validate(queries, toy_corpus)
        assert {"query_id": "q1", "id": "p99"} in report.unresolved_ids

    def test_query_without_gold_answers_flagged(self, toy_corpus, tmp_path):
        path = write_jsonl(
            tmp_path / "d.jsonl",
            [{"query_id": "q1", "query": "x?", "gold_passages": [], "answers": []}],
        )
        queries, _ = load_dataset(path)
        report = validate(queries, toy_corpus)
        assert report.missing_gold == ["q1"]

    def test_report_schema(self, toy_queries, toy_corpus):
        report = validate(list(toy_queries), toy_corpus)
        assert set(report.to_dict()) == {"unresolved_ids", "empty_answers", "missing_gold"}
