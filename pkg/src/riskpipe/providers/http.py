"""HTTP-backed providers.

Thin JSON-over-HTTP adapters around the provider contracts. Remote wire
schemas are adapter-specific and kept entirely inside this module; the
rest of the pipeline only sees the three operations. Credentials come
from environment variables (names configurable per provider).
"""

from __future__ import annotations

import os
from typing import Any, Sequence

import requests

from ..errors import ConfigError, MalformedResponseError, TransportError
from .base import EmbeddingProvider, ExtractionProvider, JudgeProvider, ProviderConfig

DEFAULT_KEY_ENVS = {
    "extraction": "EXTRACTION_API_KEY",
    "judge": "JUDGE_API_KEY",
    "embedding": "EMBEDDING_API_KEY",
}


class _HttpMixin:
    """Bearer-auth JSON POST shared by the three adapters."""

    config: ProviderConfig
    _default_key_env: str

    def _init_http(self, session: requests.Session | None) -> None:
        if not self.config.endpoint:
            raise ConfigError(f"{type(self).__name__} requires a non-empty endpoint")
        self._session = session or requests.Session()

    def _api_key(self) -> str:
        env_name = self.config.api_key_env or self._default_key_env
        key = os.environ.get(env_name, "")
        if not key:
            raise ConfigError(f"missing API credential: set {env_name}")
        return key

    def _post_json(self, body: dict[str, Any]) -> Any:
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        try:
            resp = self._session.post(
                self.config.endpoint,
                json=body,
                headers=headers,
                timeout=self.config.timeout_seconds,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {self.config.endpoint} failed: {exc}") from exc
        if resp.status_code >= 500 or resp.status_code == 429:
            raise TransportError(f"{self.config.endpoint} returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            # client errors are not retryable transport blips
            raise ConfigError(
                f"{self.config.endpoint} rejected the request: HTTP {resp.status_code}"
            )
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponseError(f"response body is not JSON: {exc}") from exc


class HttpEmbeddingProvider(_HttpMixin, EmbeddingProvider):
    """POSTs {"model", "input": [instructed texts]} and reads {"embeddings"}.

    The task instruction is prepended to every text before it goes on the
    wire, so the remote model sees one instructed string per input.
    """

    _default_key_env = DEFAULT_KEY_ENVS["embedding"]

    def __init__(
        self,
        config: ProviderConfig,
        dimension: int = 1024,
        session: requests.Session | None = None,
    ):
        super().__init__(config)
        if dimension < 1:
            raise ConfigError("embedding dimension must be >= 1")
        self._dim = dimension
        self._init_http(session)

    @property
    def dimension(self) -> int:
        return self._dim

    def _embed_attempt(self, texts: Sequence[str], instruction: str) -> Any:
        body = {
            "model": self.config.model_name,
            "input": [f"{instruction}\n\n{text}" for text in texts],
        }
        payload = self._post_json(body)
        if not isinstance(payload, dict) or "embeddings" not in payload:
            raise MalformedResponseError("embedding response missing 'embeddings'")
        return payload["embeddings"]


class HttpExtractionProvider(_HttpMixin, ExtractionProvider):
    """POSTs {"model", "document", "schema_hint"}; response body is the payload."""

    _default_key_env = DEFAULT_KEY_ENVS["extraction"]

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        super().__init__(config)
        self._init_http(session)

    def _attempt(self, document: str, schema_hint: str) -> Any:
        return self._post_json(
            {
                "model": self.config.model_name,
                "document": document,
                "schema_hint": schema_hint,
            }
        )


class HttpJudgeProvider(_HttpMixin, JudgeProvider):
    """POSTs {"model", "prompt"}; response body is the score payload."""

    _default_key_env = DEFAULT_KEY_ENVS["judge"]

    def __init__(self, config: ProviderConfig, session: requests.Session | None = None):
        super().__init__(config)
        self._init_http(session)

    def _attempt(self, prompt_context: str) -> Any:
        return self._post_json(
            {
                "model": self.config.model_name,
                "prompt": prompt_context,
            }
        )
