"""Provider contracts: extraction LLM, judge LLM, and embedding model.

Each contract pairs a production HTTP adapter (http.py) with deterministic
in-process doubles (doubles.py). Retry, schema validation, rate limiting,
and concurrency bounding live here so every implementation behaves
identically at the seams the pipeline depends on.
"""

from __future__ import annotations

import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from ..errors import ConfigError, MalformedResponseError, ProviderError, TransportError
from .ratelimit import ConcurrencyGate, TokenBucket

JUDGE_SCORES = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ProviderConfig:
    """Transport and throttling knobs shared by all providers."""

    endpoint: str = ""
    model_name: str = "unspecified"
    max_retries: int = 2
    timeout_seconds: float = 60.0
    max_concurrency: int = 4
    rate_limit: int | None = None  # requests per window; None disables throttling
    rate_window_seconds: float = 1.0
    retry_backoff_seconds: float = 0.0
    api_key_env: str = ""
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ConfigError("max_concurrency must be >= 1")
        if self.rate_limit is not None and self.rate_limit < 1:
            raise ConfigError("rate_limit must be >= 1 when set")
        if self.timeout_seconds <= 0:
            raise ConfigError("timeout_seconds must be positive")
        if self.rate_window_seconds <= 0:
            raise ConfigError("rate_window_seconds must be positive")
        if self.retry_backoff_seconds < 0:
            raise ConfigError("retry_backoff_seconds must be >= 0")


class BaseProvider:
    """Shared throttling + retry machinery.

    Instances are safe to share across threads: the concurrency gate keeps
    in-flight requests at or below max_concurrency and the token bucket is
    per-instance. Providers are read-only from the caller's perspective, so
    retries never duplicate side effects.
    """

    def __init__(self, config: ProviderConfig | None = None):
        self.config = config or ProviderConfig()
        self._gate = ConcurrencyGate(self.config.max_concurrency)
        self._bucket = (
            TokenBucket(self.config.rate_limit, self.config.rate_window_seconds)
            if self.config.rate_limit
            else None
        )
        self._stats_lock = threading.Lock()
        self.total_retries = 0
        self.total_calls = 0

    @property
    def peak_in_flight(self) -> int:
        return self._gate.peak_in_flight

    def _count(self, retries: int) -> None:
        with self._stats_lock:
            self.total_calls += 1
            self.total_retries += retries

    def _structured_call(
        self,
        attempt: Callable[[], Any],
        validate: Callable[[Any], Any],
        what: str,
    ) -> Any:
        """Run one provider request with validation and bounded retries.

        A transport failure or a payload failing `validate` consumes one
        retry; max_retries is the number of re-attempts after the first.
        """
        last_exc: Exception | None = None
        for attempt_no in range(self.config.max_retries + 1):
            if attempt_no and self.config.retry_backoff_seconds:
                time.sleep(self.config.retry_backoff_seconds * attempt_no)
            try:
                with self._gate:
                    if self._bucket is not None:
                        self._bucket.acquire()
                    raw = attempt()
            except (TransportError, MalformedResponseError) as exc:
                last_exc = exc
                continue
            try:
                result = validate(raw)
            except MalformedResponseError as exc:
                last_exc = exc
                continue
            self._count(retries=attempt_no)
            return result
        self._count(retries=self.config.max_retries)
        if isinstance(last_exc, TransportError):
            raise TransportError(
                f"{what}: transport failure after {self.config.max_retries} retries: {last_exc}"
            ) from last_exc
        raise MalformedResponseError(
            f"{what}: malformed response after {self.config.max_retries} retries: {last_exc}"
        ) from last_exc


def _require_texts(texts: Sequence[str]) -> None:
    if len(texts) == 0:
        raise ProviderError("empty batch: embed_batch requires at least one text")
    for i, text in enumerate(texts):
        if not isinstance(text, str) or not text.strip():
            raise ProviderError(f"empty text at position {i} in embedding batch")


class EmbeddingProvider(BaseProvider, ABC):
    """Turns texts into unit-norm vectors in a task-instructed space."""

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @property
    def fingerprint(self) -> str:
        """Identity carried into embedding indexes: model name + dimension."""
        return f"{self.config.model_name}:d={self.dimension}"

    @abstractmethod
    def _embed_attempt(self, texts: Sequence[str], instruction: str) -> Any:
        """One raw embedding request; the instruction is prepended to every text."""

    def embed_batch(self, texts: Sequence[str], instruction: str) -> np.ndarray:
        """Embed texts (instruction prepended), returning an (n, dim) array.

        Rows are unit-norm within 1e-6 and ordered like the input. Identical
        (instruction, text) pairs give identical vectors within one instance.
        """
        _require_texts(texts)
        expected = (len(texts), self.dimension)

        def validate(raw: Any) -> np.ndarray:
            try:
                arr = np.asarray(raw, dtype=np.float64)
            except (TypeError, ValueError) as exc:
                raise MalformedResponseError(f"non-numeric embedding payload: {exc}") from exc
            if arr.shape != expected:
                raise MalformedResponseError(
                    f"dimension mismatch: expected {expected}, got {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise MalformedResponseError("embedding payload contains non-finite values")
            norms = np.linalg.norm(arr, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                raise MalformedResponseError("embedding rows are not unit-norm")
            return arr

        return self._structured_call(
            lambda: self._embed_attempt(texts, instruction), validate, "embedding"
        )


def validate_extraction_payload(raw: Any) -> dict[str, Any]:
    """Normalize one extraction payload: {"risks": [{"tag", "quote"}, ...]}."""
    if not isinstance(raw, dict):
        raise MalformedResponseError(f"extraction payload is not an object: {type(raw).__name__}")
    risks = raw.get("risks")
    if not isinstance(risks, list):
        raise MalformedResponseError("extraction payload missing 'risks' list")
    cleaned = []
    for i, item in enumerate(risks):
        if not isinstance(item, dict):
            raise MalformedResponseError(f"risk {i} is not an object")
        tag = item.get("tag")
        quote = item.get("quote")
        if not isinstance(tag, str) or not tag.strip():
            raise MalformedResponseError(f"risk {i} has an empty tag")
        if not isinstance(quote, str) or not quote.strip():
            raise MalformedResponseError(f"risk {i} has an empty quote")
        cleaned.append({"tag": tag.strip(), "quote": quote.strip()})
    return {"risks": cleaned}


def parse_judge_score(value: Any) -> int:
    """Lenient score parse: ints, integral floats, and digit strings count."""
    if isinstance(value, bool):
        raise MalformedResponseError(f"score is a boolean: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise MalformedResponseError(f"score does not parse to an integer: {value!r}")


def validate_judge_payload(raw: Any) -> dict[str, Any]:
    """Normalize one judge payload: integer score in 1..5 plus reasoning text."""
    if not isinstance(raw, dict):
        raise MalformedResponseError(f"judge payload is not an object: {type(raw).__name__}")
    if "score" not in raw:
        raise MalformedResponseError("judge payload missing 'score'")
    score = parse_judge_score(raw["score"])
    if score not in JUDGE_SCORES:
        raise MalformedResponseError(f"score {score} outside 1-5 scale")
    reasoning = raw.get("reasoning")
    if not isinstance(reasoning, str) or not reasoning.strip():
        raise MalformedResponseError("judge payload missing reasoning text")
    return {"score": score, "reasoning": reasoning.strip()}


class ExtractionProvider(BaseProvider, ABC):
    """LLM that turns a document into a structured list of risks."""

    @abstractmethod
    def _attempt(self, document: str, schema_hint: str) -> Any:
        """One raw structured-output request."""

    def extract_structured(self, document: str, schema_hint: str) -> dict[str, Any]:
        """Request structured extraction, retrying malformed responses."""
        if not document or not document.strip():
            raise ProviderError("empty document passed to extraction provider")
        return self._structured_call(
            lambda: self._attempt(document, schema_hint),
            validate_extraction_payload,
            "extraction",
        )


class JudgeProvider(BaseProvider, ABC):
    """LLM that scores a (quote, category) mapping 1-5 with reasoning."""

    @abstractmethod
    def _attempt(self, prompt_context: str) -> Any:
        """One raw judge request."""

    def judge_structured(self, prompt_context: str) -> dict[str, Any]:
        """Request a judgement; out-of-range or unparseable scores are
        malformed and consume a retry, because the pipeline depends on a
        closed 1-5 scale."""
        return self._structured_call(
            lambda: self._attempt(prompt_context), validate_judge_payload, "judging"
        )
