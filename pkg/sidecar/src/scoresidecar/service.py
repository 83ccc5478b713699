"""Request handling: validation, batching, clamping, alignment.

The service owns one backend per task. Inference is serialized through a
lock (one device, one batch at a time) while request handling itself may be
concurrent; responses align positionally with the request pairs and values
are clamped to [0,1].
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Mapping

from .backends import TASKS, ScoreBackend, build_backend


class RequestError(ValueError):
    """Client-side problem: malformed body, unknown task, bad pair shape."""


@dataclass(frozen=True)
class SidecarConfig:
    nli_model: str = "embedded"
    rerank_model: str = "embedded"
    similarity_model: str = "embedded"
    device: str = "cpu"
    batch_size: int = 32
    port: int = 8081

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    def model_for(self, task: str) -> str:
        return {
            "nli": self.nli_model,
            "rerank": self.rerank_model,
            "similarity": self.similarity_model,
        }[task]


class ScoreService:
    def __init__(self, config: SidecarConfig, backends: Mapping[str, ScoreBackend] | None = None):
        self.config = config
        self._lock = threading.Lock()
        self._backends = dict(backends) if backends is not None else {
            task: build_backend(task, config.model_for(task), config.device)
            for task in TASKS
        }

    def describe(self) -> dict:
        """Health payload: status plus the model id serving each task."""
        return {
            "status": "ok",
            "models": {task: self._backends[task].model_id for task in TASKS},
            "batch_size": self.config.batch_size,
        }

    def score(self, body: dict) -> dict:
        """Handle one /v1/score body, returning the response payload."""
        if not isinstance(body, dict):
            raise RequestError("body must be a JSON object")
        task = body.get("task")
        if task not in TASKS:
            raise RequestError(f"task must be one of {list(TASKS)}, got {task!r}")
        raw_pairs = body.get("pairs")
        if not isinstance(raw_pairs, list):
            raise RequestError("pairs must be a list")
        pairs = []
        for i, item in enumerate(raw_pairs):
            if not isinstance(item, dict) or "a" not in item or "b" not in item:
                raise RequestError(f"pairs[{i}] must be an object with 'a' and 'b'")
            pairs.append((str(item["a"]), str(item["b"])))

        backend = self._backends[task]
        results: list[dict] = []
        size = self.config.batch_size
        for start in range(0, len(pairs), size):
            chunk = pairs[start : start + size]
            with self._lock:
                scored = backend.score_batch(chunk)
            if len(scored) != len(chunk):
                raise RuntimeError(
                    f"backend returned {len(scored)} results for {len(chunk)} pairs"
                )
            for item in scored:
                value = min(1.0, max(0.0, float(item["value"])))
                results.append({"value": value, "aux": item.get("aux")})
        return {"results": results}
