import json
from pathlib import Path

import pytest

from attribench.corpus import Corpus, Passage, load_corpus, load_dataset
from attribench.modelio import LexicalScoreMock

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def toy_corpus_path() -> Path:
    return FIXTURES / "toy_corpus.jsonl"


@pytest.fixture(scope="session")
def toy_dataset_path() -> Path:
    return FIXTURES / "toy_dataset.jsonl"


@pytest.fixture(scope="session")
def toy_config_path() -> Path:
    return FIXTURES / "toy_config.toml"


@pytest.fixture(scope="session")
def toy_corpus(toy_corpus_path):
    return load_corpus(toy_corpus_path)


@pytest.fixture(scope="session")
def toy_queries(toy_dataset_path):
    queries, _ = load_dataset(toy_dataset_path)
    return queries


@pytest.fixture(scope="session")
def lexical_scorer():
    return LexicalScoreMock()


# Letter-vocabulary micro corpus for exact citation-metric arithmetic.
MICRO_PASSAGES = {
    "pa": "alpha bravo charlie delta",
    "pb": "echo foxtrot golf hotel",
    "pc": "india juliet kilo lima",
    "pd": "mike november oscar papa",
    "pe": "alpha echo india mike",
    "pf": "quebec romeo sierra tango",
}


@pytest.fixture(scope="session")
def micro_corpus() -> Corpus:
    return Corpus(Passage(id=pid, text=text) for pid, text in MICRO_PASSAGES.items())


def write_jsonl(path: Path, rows) -> Path:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    return path
