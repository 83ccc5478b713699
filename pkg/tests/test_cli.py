import json

import pytest

from attribench.cli import main
from attribench.retrieval import RankedList, write_qrels, write_run


class TestExitCodes:
    def test_missing_config_is_bad_config(self, tmp_path):
        code = main(
            [
                "run",
                "--config",
                str(tmp_path / "nope.toml"),
                "--scenario",
                "g",
                "--mock",
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 2

    def test_successful_run_is_zero(self, toy_config_path, tmp_path):
        code = main(
            [
                "run",
                "--config",
                str(toy_config_path),
                "--scenario",
                "rtg-gold",
                "--mock",
                "--seed",
                "3",
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 0

    def test_failed_run_is_one(self, toy_corpus_path, toy_dataset_path, tmp_path):
        # A config whose gateway is scripted with no fixtures: every query fails.
        config = tmp_path / "bad.toml"
        config.write_text(
            "\n".join(
                [
                    "[dataset]",
                    f'corpus = "{toy_corpus_path}"',
                    f'dataset = "{toy_dataset_path}"',
                    "[gateway]",
                    'chat = "scripted"',
                    'scorer = "lexical"',
                ]
            )
        )
        code = main(
            [
                "run",
                "--config",
                str(config),
                "--scenario",
                "g",
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 1


class TestIndexBuild:
    def test_writes_index_file(self, toy_corpus_path, tmp_path, capsys):
        code = main(
            ["index", "build", "--corpus", str(toy_corpus_path), "--out", str(tmp_path)]
        )
        assert code == 0
        assert (tmp_path / "index.json").exists()
        assert "indexed 50 passages" in capsys.readouterr().out


class TestReportCommand:
    @pytest.fixture()
    def run_dir(self, toy_config_path, tmp_path):
        out = tmp_path / "out"
        main(
            [
                "run",
                "--config",
                str(toy_config_path),
                "--scenario",
                "rtg-gold",
                "--mock",
                "--out",
                str(out),
            ]
        )
        return out

    def test_formats(self, run_dir, capsys):
        assert main(["report", "--dir", str(run_dir), "--format", "json"]) == 0
        parsed = json.loads(capsys.readouterr().out)
        assert parsed["table"]["overlap_precision"] == 1.0

        assert main(["report", "--dir", str(run_dir), "--format", "csv"]) == 0
        assert "metric,value" in capsys.readouterr().out

        assert main(["report", "--dir", str(run_dir), "--format", "table"]) == 0
        assert "overlap_precision" in capsys.readouterr().out


class TestEvalRetrievalCommand:
    def test_prints_tables_and_max(self, tmp_path, capsys):
        qrels = tmp_path / "qrels.txt"
        write_qrels({"q1": {"a": 1}}, qrels)
        run_a, run_b = tmp_path / "a.txt", tmp_path / "b.txt"
        write_run([RankedList.from_scores("q1", [("a", 1.0)], k=5)], run_a)
        write_run([RankedList.from_scores("q1", [("x", 1.0)], k=5)], run_b)
        code = main(
            [
                "eval",
                "retrieval",
                "--run",
                str(run_a),
                "--run",
                str(run_b),
                "--qrels",
                str(qrels),
                "--cutoffs",
                "1",
            ]
        )
        out = capsys.readouterr().out
        assert code == 0
        assert "run=a" in out and "run=b" in out and "MAX" in out


class TestCorrelateCommand:
    def test_writes_json(self, tmp_path, capsys):
        rows = [
            {
                "query_id": f"q{i}",
                "query": "x?",
                "gold_passages": [
                    {"docid": "pa", "rel": 1, "text": "alpha bravo charlie"}
                ],
                "answers": [
                    {
                        "text": "Alpha bravo [1]." if flag else "Quebec romeo [1].",
                        "attributable": flag,
                    }
                ],
            }
            for i, flag in enumerate([True, False, True, False])
        ]
        dataset = tmp_path / "d.jsonl"
        with open(dataset, "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        code = main(
            ["correlate", "--dataset", str(dataset), "--out", str(tmp_path / "corr")]
        )
        assert code == 0
        saved = json.loads((tmp_path / "corr" / "correlation.json").read_text())
        assert saved["autoais_cit"] == pytest.approx(1.0)
