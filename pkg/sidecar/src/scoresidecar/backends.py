"""Scoring backends: one per task, selected by model id.

``embedded`` is a dependency-free lexical scorer whose arithmetic matches
the harness's built-in mock token for token, so the shared golden fixtures
pin both sides to one behavior. Any other model id selects a
transformers-backed implementation (requires the ``models`` extra).
"""

from __future__ import annotations

import re
from typing import Protocol, Sequence

TASKS = ("nli", "rerank", "similarity")

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


class BackendError(RuntimeError):
    pass


class ScoreBackend(Protocol):
    model_id: str

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[dict]: ...


class EmbeddedLexicalBackend:
    """Deterministic token-overlap scorer, identical to the harness mock.

    nli: fraction of hypothesis tokens present in the premise.
    rerank: fraction of query tokens present in the passage.
    similarity: set precision/recall/f1, f1 as the value.
    An empty side scores 0.
    """

    model_id = "embedded"

    def __init__(self, task: str):
        if task not in TASKS:
            raise BackendError(f"unknown task {task!r}")
        self.task = task

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[dict]:
        return [self._score(a, b) for a, b in pairs]

    def _score(self, a: str, b: str) -> dict:
        ta, tb = _tokens(a), _tokens(b)
        common = len(ta & tb)
        if self.task == "nli":
            return {"value": common / len(tb) if tb else 0.0, "aux": None}
        if self.task == "rerank":
            return {"value": common / len(ta) if ta else 0.0, "aux": None}
        precision = common / len(ta) if ta else 0.0
        recall = common / len(tb) if tb else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        return {
            "value": f1,
            "aux": {"precision": precision, "recall": recall, "f1": f1},
        }


def _require_models(model_id: str):
    try:
        import torch  # noqa: F401
        import transformers  # noqa: F401
    except ImportError as exc:
        raise BackendError(
            f"model {model_id!r} needs the 'models' extra (torch + transformers)"
        ) from exc


class NliEntailmentBackend:
    """Sequence-classification entailment probability.

    The value is the softmax probability of the entailment class (located by
    label name, falling back to the last label). Binarization stays client
    side.
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        _require_models(model_id)
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self.model_id = model_id
        self.device = device
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self._model.to(device)
        self._model.eval()
        labels = getattr(self._model.config, "id2label", {}) or {}
        self._entail_index = self._model.config.num_labels - 1
        for index, label in labels.items():
            if "entail" in str(label).lower():
                self._entail_index = int(index)
                break

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[dict]:
        encoded = self._tokenizer(
            [a for a, _ in pairs],
            [b for _, b in pairs],
            padding=True,
            truncation=True,
            max_length=512,
            return_tensors="pt",
        ).to(self.device)
        with self._torch.inference_mode():
            logits = self._model(**encoded).logits
        probs = logits.softmax(dim=-1)[:, self._entail_index]
        return [{"value": float(p), "aux": None} for p in probs]


class CrossEncoderRerankBackend:
    """Cross-encoder relevance: sigmoid of a single logit, or the positive
    class probability for two-headed models."""

    def __init__(self, model_id: str, device: str = "cpu"):
        _require_models(model_id)
        import torch
        from transformers import AutoModelForSequenceClassification, AutoTokenizer

        self.model_id = model_id
        self.device = device
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForSequenceClassification.from_pretrained(model_id)
        self._model.to(device)
        self._model.eval()

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[dict]:
        encoded = self._tokenizer(
            [a for a, _ in pairs],
            [b for _, b in pairs],
            padding=True,
            truncation=True,
            max_length=512,
            return_tensors="pt",
        ).to(self.device)
        with self._torch.inference_mode():
            logits = self._model(**encoded).logits
        if logits.shape[-1] == 1:
            scores = logits.squeeze(-1).sigmoid()
        else:
            scores = logits.softmax(dim=-1)[:, -1]
        return [{"value": float(s), "aux": None} for s in scores]


class GreedyMatchingSimilarityBackend:
    """Token-embedding similarity with greedy max-cosine matching.

    Precision greedily matches candidate tokens against the reference,
    recall the reverse; f1 is their harmonic mean and the reported value.
    """

    def __init__(self, model_id: str, device: str = "cpu"):
        _require_models(model_id)
        import torch
        from transformers import AutoModel, AutoTokenizer

        self.model_id = model_id
        self.device = device
        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModel.from_pretrained(model_id)
        self._model.to(device)
        self._model.eval()

    def _embed(self, text: str):
        encoded = self._tokenizer(
            text, truncation=True, max_length=512, return_tensors="pt"
        ).to(self.device)
        with self._torch.inference_mode():
            states = self._model(**encoded).last_hidden_state[0]
        mask = encoded["attention_mask"][0].bool()
        states = states[mask]
        return states / states.norm(dim=-1, keepdim=True).clamp_min(1e-12)

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[dict]:
        results = []
        for a, b in pairs:
            ea, eb = self._embed(a), self._embed(b)
            cosine = ea @ eb.T
            precision = float(cosine.max(dim=1).values.mean())
            recall = float(cosine.max(dim=0).values.mean())
            f1 = (
                2 * precision * recall / (precision + recall)
                if precision + recall > 0
                else 0.0
            )
            results.append(
                {
                    "value": f1,
                    "aux": {"precision": precision, "recall": recall, "f1": f1},
                }
            )
        return results


def build_backend(task: str, model_id: str, device: str = "cpu") -> ScoreBackend:
    """Select a backend for one task by model id."""
    if task not in TASKS:
        raise BackendError(f"unknown task {task!r}")
    if model_id == "embedded":
        return EmbeddedLexicalBackend(task)
    if task == "nli":
        return NliEntailmentBackend(model_id, device)
    if task == "rerank":
        return CrossEncoderRerankBackend(model_id, device)
    return GreedyMatchingSimilarityBackend(model_id, device)
