"""Exception hierarchy shared across the pipeline.

Exit-code mapping lives in the CLI: usage errors are click's domain (1),
DataError and subclasses map to 2, ProviderError and subclasses to 3.
"""

from __future__ import annotations


class RiskPipeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RiskPipeError):
    """Run configuration is unreadable, incomplete, or inconsistent."""


class DataError(RiskPipeError):
    """Input data violates a documented contract (taxonomy, records, files)."""


class TaxonomyError(DataError):
    """Taxonomy file failed to parse or violates a taxonomy invariant."""


class FingerprintMismatchError(DataError):
    """An embedding index was built with a different embedder or instruction."""


class ProviderError(RiskPipeError):
    """An external model provider failed."""


class TransportError(ProviderError):
    """Request never produced a usable response (network, HTTP, timeout)."""


class MalformedResponseError(ProviderError):
    """Provider responded, but the payload failed schema validation."""


class BatchJudgeError(ProviderError):
    """One or more mappings in a judged batch failed persistently.

    Carries enough context to name the failing item; completed eval-log
    records are flushed before this is raised.
    """

    def __init__(self, message: str, failures: list[tuple[int, Exception]] | None = None):
        super().__init__(message)
        self.failures = failures or []
