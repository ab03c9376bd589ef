"""Deterministic in-process providers.

These run the full pipeline offline and byte-reproducibly: a hashing
embedder whose geometry is a pure function of the text, and scripted
extraction/judge doubles keyed by content rules rather than call order.
Scripts can be loaded from JSON so the CLI can run fully offline too.
"""

from __future__ import annotations

import hashlib
import json
import re
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from ..errors import ConfigError, ProviderError, TransportError
from .base import (
    EmbeddingProvider,
    ExtractionProvider,
    JudgeProvider,
    ProviderConfig,
)

_TOKEN = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).hexdigest()
    return int(digest, 16) % dim


class HashingEmbedder(EmbeddingProvider):
    """Embedding double: md5 token hashing into a fixed-size count vector.

    Texts sharing no tokens land in disjoint buckets almost surely, giving
    near-zero cosine; texts sharing most tokens land close together. The
    instruction is part of the fingerprint (it names the space) but is not
    hashed into vectors, so token-disjoint texts stay orthogonal exactly.
    """

    def __init__(self, dim: int = 64, config: ProviderConfig | None = None):
        if dim < 1:
            raise ConfigError("embedding dimension must be >= 1")
        super().__init__(config or ProviderConfig(model_name="hashing"))
        self._dim = dim

    @property
    def dimension(self) -> int:
        return self._dim

    def buckets(self, text: str) -> list[int]:
        """Bucket index per token, for diagnosing hash collisions in tests."""
        return [_bucket(tok, self._dim) for tok in _tokens(text)]

    def _vector(self, text: str) -> np.ndarray:
        counts = np.zeros(self._dim, dtype=np.float64)
        toks = _tokens(text)
        if not toks:
            # tokenless text (punctuation only): one deterministic bucket
            toks = [text.strip() or "empty"]
        for tok in toks:
            counts[_bucket(tok, self._dim)] += 1.0
        return counts / np.linalg.norm(counts)

    def _embed_attempt(self, texts: Sequence[str], instruction: str) -> np.ndarray:
        return np.stack([self._vector(t) for t in texts])


class StaticEmbedder(EmbeddingProvider):
    """Embedding double returning preassigned vectors per exact text."""

    def __init__(
        self,
        vectors: dict[str, Sequence[float]],
        dim: int,
        config: ProviderConfig | None = None,
    ):
        super().__init__(config or ProviderConfig(model_name="static"))
        self._dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        for text, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise ConfigError(f"vector for {text!r} has shape {arr.shape}, want ({dim},)")
            norm = np.linalg.norm(arr)
            if norm == 0:
                raise ConfigError(f"vector for {text!r} is all zeros")
            self._vectors[text] = arr / norm

    @property
    def dimension(self) -> int:
        return self._dim

    def _embed_attempt(self, texts: Sequence[str], instruction: str) -> np.ndarray:
        rows = []
        for text in texts:
            if text not in self._vectors:
                raise ProviderError(f"StaticEmbedder has no vector for {text!r}")
            rows.append(self._vectors[text])
        return np.stack(rows)


TRANSPORT_FAILURE = object()  # sentinel: raise TransportError for this step


def _next_step(queue: list[Any], what: str) -> Any:
    if not queue:
        raise ProviderError(f"{what}: scripted response queue exhausted")
    step = queue.pop(0)
    if step is TRANSPORT_FAILURE:
        raise TransportError(f"{what}: scripted transport failure")
    if callable(step):
        return step()
    return step


class SequenceExtractor(ExtractionProvider):
    """Extraction double replaying a fixed queue of raw payloads.

    Steps may be payload dicts (well-formed or deliberately malformed),
    the TRANSPORT_FAILURE sentinel, or zero-arg callables. Used to drive
    the retry machinery from tests.
    """

    def __init__(self, steps: Iterable[Any], config: ProviderConfig | None = None):
        super().__init__(config or ProviderConfig(model_name="seq-extract"))
        self._steps = list(steps)

    def _attempt(self, document: str, schema_hint: str) -> Any:
        return _next_step(self._steps, "extraction")


class SequenceJudge(JudgeProvider):
    """Judge double replaying a fixed queue of raw payloads."""

    def __init__(self, steps: Iterable[Any], config: ProviderConfig | None = None):
        super().__init__(config or ProviderConfig(model_name="seq-judge"))
        self._steps = list(steps)

    def _attempt(self, prompt_context: str) -> Any:
        return _next_step(self._steps, "judging")


def _match_rule(rules: list[dict[str, Any]], text: str) -> dict[str, Any] | None:
    # first rule whose every "contains" needle appears in the text wins
    for rule in rules:
        needles = rule.get("contains", [])
        if isinstance(needles, str):
            needles = [needles]
        if all(needle in text for needle in needles):
            return rule
    return None


class RuleExtractor(ExtractionProvider):
    """Extraction double keyed by document content, not call order.

    Each rule is {"contains": str | [str], "risks": [{"tag", "quote"}]}.
    The first rule whose needles all appear in the document supplies the
    payload; `default` covers everything else. Content keying keeps runs
    reproducible regardless of submission order or concurrency.
    """

    def __init__(
        self,
        rules: Sequence[dict[str, Any]] = (),
        default: dict[str, Any] | None = None,
        config: ProviderConfig | None = None,
    ):
        super().__init__(config or ProviderConfig(model_name="rule-extract"))
        self._rules = list(rules)
        self._default = default

    def _attempt(self, document: str, schema_hint: str) -> Any:
        rule = _match_rule(self._rules, document)
        if rule is not None:
            return {"risks": rule["risks"]}
        if self._default is not None:
            return dict(self._default)
        raise ProviderError("RuleExtractor: no rule matched and no default payload set")


class RuleJudge(JudgeProvider):
    """Judge double keyed by prompt content.

    Each rule is {"contains": str | [str], "score": int, "reasoning": str};
    `default` applies when nothing matches. The rendered judge prompt
    carries the quote and the taxonomy path, so rules can key on either.
    """

    def __init__(
        self,
        rules: Sequence[dict[str, Any]] = (),
        default: dict[str, Any] | None = None,
        config: ProviderConfig | None = None,
    ):
        super().__init__(config or ProviderConfig(model_name="rule-judge"))
        self._rules = list(rules)
        self._default = default or {"score": 5, "reasoning": "default scripted judgement"}

    def _attempt(self, prompt_context: str) -> Any:
        rule = _match_rule(self._rules, prompt_context)
        if rule is not None:
            return {"score": rule["score"], "reasoning": rule["reasoning"]}
        return dict(self._default)


class CallableJudge(JudgeProvider):
    """Judge double delegating to a function(prompt_context) -> payload."""

    def __init__(
        self,
        fn: Callable[[str], dict[str, Any]],
        config: ProviderConfig | None = None,
    ):
        super().__init__(config or ProviderConfig(model_name="fn-judge"))
        self._fn = fn

    def _attempt(self, prompt_context: str) -> Any:
        return self._fn(prompt_context)


def load_script(path: str | Path) -> dict[str, Any]:
    """Read a JSON script file for the rule doubles.

    Layout::

        {
          "extraction": {"rules": [...], "default": {...}},
          "judge": {"rules": [...], "default": {...}}
        }
    """
    p = Path(path)
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"script file not found: {p}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"script file {p} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"script file {p} must hold a JSON object")
    return data


def rule_extractor_from_script(
    script: dict[str, Any], config: ProviderConfig | None = None
) -> RuleExtractor:
    section = script.get("extraction", {})
    return RuleExtractor(
        rules=section.get("rules", ()),
        default=section.get("default"),
        config=config,
    )


def rule_judge_from_script(
    script: dict[str, Any], config: ProviderConfig | None = None
) -> RuleJudge:
    section = script.get("judge", {})
    return RuleJudge(
        rules=section.get("rules", ()),
        default=section.get("default"),
        config=config,
    )
