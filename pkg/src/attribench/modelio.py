"""Gateways to generative and scoring models, plus deterministic mocks.

Two wire protocols cover every model interaction in the framework:

* Chat: ``POST {base}/v1/chat/completions`` with a standard chat-completion
  body; the response text is ``choices[0].message.content``.
* Scoring: ``POST {base}/v1/score`` with ``{"task": ..., "pairs": [{"a","b"}]}``
  returning ``{"results": [{"value", "aux"}]}``, positionally aligned.

The ``task`` discriminator selects the interpretation of a pair:

=============  ======================  =====================
task           a                       b
=============  ======================  =====================
``nli``        premise                 hypothesis
``rerank``     query                   passage
``similarity`` candidate               reference
=============  ======================  =====================

The built-in mocks (``scripted``, ``cite-echo``, ``lexical``) are pure
functions of their inputs, which makes end-to-end runs reproducible down to
the byte without any network access.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import requests

from .text import sentence_spans, tokenize

SCORE_TASKS = ("nli", "rerank", "similarity")

ENV_LLM_BASE = "ATTRIB_LLM_BASE"
ENV_SCORER_BASE = "ATTRIB_SCORER_BASE"
ENV_API_KEY = "ATTRIB_API_KEY"


class GatewayError(RuntimeError):
    """Raised when a backend call fails after retries.

    Carries the originating query id (the request tag) when known.
    """

    def __init__(self, message: str, tag: str | None = None):
        super().__init__(message if tag is None else f"{message} (query {tag})")
        self.tag = tag


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call.

    ``tag`` is a correlation id (typically the query id). It is never sent
    on the wire; it keys scripted mocks and labels errors.
    """

    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 512
    seed: int | None = None
    tag: str | None = None

    def __post_init__(self) -> None:
        roles = {"system", "user", "assistant"}
        for role, _ in self.messages:
            if role not in roles:
                raise ValueError(f"invalid message role {role!r}")
        if not any(role == "user" for role, _ in self.messages):
            raise ValueError("chat request needs at least one user message")

    def last_user_content(self) -> str:
        for role, content in reversed(self.messages):
            if role == "user":
                return content
        raise ValueError("no user message")


@dataclass(frozen=True)
class ScorePair:
    task: str
    a: str
    b: str

    def __post_init__(self) -> None:
        if self.task not in SCORE_TASKS:
            raise ValueError(f"unknown scoring task {self.task!r}")


@dataclass(frozen=True)
class ScoreResult:
    value: float
    aux: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"score {self.value} outside [0,1]")


class ChatGateway(Protocol):
    def chat(self, request: ChatRequest) -> str: ...


class ScoreGateway(Protocol):
    def score_pairs(self, pairs: Sequence[ScorePair]) -> list[ScoreResult]: ...


def _check_single_task(pairs: Sequence[ScorePair]) -> None:
    tasks = {pair.task for pair in pairs}
    if len(tasks) > 1:
        raise ValueError(f"score_pairs called with mixed tasks {sorted(tasks)}")


def nli_binary(
    scorer: ScoreGateway, premise: str, hypothesis: str, threshold: float = 0.5
) -> int:
    """Binarized entailment: 1 iff the scorer's nli value is >= threshold."""
    result = scorer.score_pairs([ScorePair(task="nli", a=premise, b=hypothesis)])[0]
    return 1 if result.value >= threshold else 0


# ---------------------------------------------------------------------------
# HTTP gateways


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str = "default"
    api_key: str | None = None
    timeout: float = 60.0
    max_attempts: int = 3
    backoff: float = 0.25
    batch_size: int = 64


def endpoint_from_env(kind: str, model: str = "default") -> EndpointConfig:
    """Build an endpoint from ATTRIB_LLM_BASE / ATTRIB_SCORER_BASE."""
    var = ENV_LLM_BASE if kind == "chat" else ENV_SCORER_BASE
    base = os.environ.get(var)
    if not base:
        raise GatewayError(f"environment variable {var} is not set")
    return EndpointConfig(base_url=base, model=model, api_key=os.environ.get(ENV_API_KEY))


class _HttpClient:
    def __init__(self, config: EndpointConfig, session: requests.Session | None = None):
        self.config = config
        self.session = session or requests.Session()

    def post_json(self, path: str, body: dict, tag: str | None = None) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.config.max_attempts):
            if attempt and self.config.backoff:
                time.sleep(self.config.backoff * (2 ** (attempt - 1)))
            try:
                response = self.session.post(
                    url, json=body, headers=headers, timeout=self.config.timeout
                )
                response.raise_for_status()
                return response.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
        raise GatewayError(
            f"{url} failed after {self.config.max_attempts} attempts: {last_error}", tag
        )


class HttpChatGateway:
    """Chat-completion client for any server speaking the standard shape."""

    def __init__(self, config: EndpointConfig, session: requests.Session | None = None):
        self._client = _HttpClient(config, session)
        self.config = config

    def chat(self, request: ChatRequest) -> str:
        body = {
            "model": self.config.model,
            "messages": [{"role": r, "content": c} for r, c in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        data = self._client.post_json("/v1/chat/completions", body, tag=request.tag)
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response: {data!r}", request.tag) from exc


class HttpScoreGateway:
    """Scoring client; batches transparently at the configured size."""

    def __init__(self, config: EndpointConfig, session: requests.Session | None = None):
        self._client = _HttpClient(config, session)
        self.config = config

    def score_pairs(self, pairs: Sequence[ScorePair]) -> list[ScoreResult]:
        if not pairs:
            return []
        _check_single_task(pairs)
        results: list[ScoreResult] = []
        size = max(1, self.config.batch_size)
        for start in range(0, len(pairs), size):
            chunk = pairs[start : start + size]
            body = {
                "task": chunk[0].task,
                "pairs": [{"a": p.a, "b": p.b} for p in chunk],
            }
            data = self._client.post_json("/v1/score", body)
            raw = data.get("results")
            if not isinstance(raw, list) or len(raw) != len(chunk):
                raise GatewayError(f"misaligned score response: {data!r}")
            for item in raw:
                results.append(ScoreResult(value=float(item["value"]), aux=item.get("aux")))
        return results


# ---------------------------------------------------------------------------
# Deterministic mock backends


@dataclass
class ScriptedChatMock:
    """Chat mock returning canned texts keyed by the request tag."""

    fixtures: Mapping[str, str]
    default: str | None = None
    calls: list[ChatRequest] = field(default_factory=list)

    def chat(self, request: ChatRequest) -> str:
        self.calls.append(request)
        if request.tag in self.fixtures:
            return self.fixtures[request.tag]
        if self.default is not None:
            return self.default
        raise GatewayError("no scripted fixture for request", request.tag)


_CONTEXT_LINE_RE = re.compile(r"^\[(\d+)\]\s*(.+)$")
_SUBQUERY_COUNT_RE = re.compile(r"as (\d+) different search queries")
_QUESTION_RE = re.compile(r"^Question:\s*(.+)$", re.MULTILINE)


class CiteEchoChatMock:
    """Chat mock that echoes prompt content deterministically.

    * Prompt with numbered context passages: one statement per passage, the
      passage's first sentence with its bracket number inlined before the
      terminal period ("... red color [1].").
    * Prompt asking for search-query rewrites: the requested number of
      deterministic variants of the question, one per line.
    * Anything else: the question restated as a single uncited sentence.
    """

    def chat(self, request: ChatRequest) -> str:
        prompt = request.last_user_content()
        question_matches = _QUESTION_RE.findall(prompt)
        question = question_matches[-1].strip() if question_matches else ""

        blocks = self._context_blocks(prompt)
        if blocks:
            statements = []
            for number, content in blocks:
                first = self._first_sentence(content)
                statements.append(f"{first.rstrip('.!?').rstrip()} [{number}].")
            return " ".join(statements)

        count = _SUBQUERY_COUNT_RE.search(prompt)
        if count:
            m = int(count.group(1))
            base = question.rstrip("?").strip() or "query"
            return "\n".join(f"{base} angle {i}" for i in range(1, m + 1))

        return f"{question.rstrip('?').strip()}." if question else ""

    @staticmethod
    def _context_blocks(prompt: str) -> list[tuple[int, str]]:
        marker = prompt.rfind("Context:")
        if marker < 0:
            return []
        blocks = []
        for line in prompt[marker:].splitlines():
            match = _CONTEXT_LINE_RE.match(line.strip())
            if match:
                blocks.append((int(match.group(1)), match.group(2)))
        return blocks

    @staticmethod
    def _first_sentence(text: str) -> str:
        spans = sentence_spans(text)
        if not spans:
            return text.strip()
        start, end = spans[0]
        return text[start:end].strip()


class LexicalScoreMock:
    """Token-overlap scorer standing in for NLI/rerank/similarity models.

    * ``nli``: fraction of hypothesis tokens present in the premise, so
      token containment yields exactly 1.0.
    * ``rerank``: fraction of query tokens present in the passage.
    * ``similarity``: set precision/recall/f1 between the two token sets
      (f1 as the value, the triplet in ``aux``).

    Token sets are computed with the shared analyzer; an empty side scores 0.
    """

    def score_pairs(self, pairs: Sequence[ScorePair]) -> list[ScoreResult]:
        _check_single_task(pairs)
        return [self._score(pair) for pair in pairs]

    @staticmethod
    def _score(pair: ScorePair) -> ScoreResult:
        ta, tb = set(tokenize(pair.a)), set(tokenize(pair.b))
        common = len(ta & tb)
        if pair.task == "nli":
            value = common / len(tb) if tb else 0.0
            return ScoreResult(value=value)
        if pair.task == "rerank":
            value = common / len(ta) if ta else 0.0
            return ScoreResult(value=value)
        precision = common / len(ta) if ta else 0.0
        recall = common / len(tb) if tb else 0.0
        f1 = (
            2 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        return ScoreResult(
            value=f1, aux={"precision": precision, "recall": recall, "f1": f1}
        )


CHAT_MOCKS = ("scripted", "cite-echo")
SCORE_MOCKS = ("lexical",)


def build_chat_backend(
    name: str,
    fixtures: Mapping[str, str] | None = None,
    endpoint: EndpointConfig | None = None,
) -> ChatGateway:
    if name == "cite-echo":
        return CiteEchoChatMock()
    if name == "scripted":
        return ScriptedChatMock(fixtures=fixtures or {})
    if name == "http":
        return HttpChatGateway(endpoint or endpoint_from_env("chat"))
    raise ValueError(f"unknown chat backend {name!r}")


def build_score_backend(
    name: str, endpoint: EndpointConfig | None = None
) -> ScoreGateway:
    if name == "lexical":
        return LexicalScoreMock()
    if name == "http":
        return HttpScoreGateway(endpoint or endpoint_from_env("score"))
    raise ValueError(f"unknown score backend {name!r}")
