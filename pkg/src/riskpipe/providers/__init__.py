"""Provider contracts, HTTP adapters, and deterministic doubles."""

from .base import (
    EmbeddingProvider,
    ExtractionProvider,
    JudgeProvider,
    ProviderConfig,
    parse_judge_score,
    validate_extraction_payload,
    validate_judge_payload,
)
from .doubles import (
    TRANSPORT_FAILURE,
    CallableJudge,
    HashingEmbedder,
    RuleExtractor,
    RuleJudge,
    SequenceExtractor,
    SequenceJudge,
    StaticEmbedder,
    load_script,
    rule_extractor_from_script,
    rule_judge_from_script,
)
from .http import (
    HttpEmbeddingProvider,
    HttpExtractionProvider,
    HttpJudgeProvider,
)
from .ratelimit import ConcurrencyGate, TokenBucket

__all__ = [
    "ProviderConfig",
    "EmbeddingProvider",
    "ExtractionProvider",
    "JudgeProvider",
    "parse_judge_score",
    "validate_extraction_payload",
    "validate_judge_payload",
    "HashingEmbedder",
    "StaticEmbedder",
    "SequenceExtractor",
    "SequenceJudge",
    "RuleExtractor",
    "RuleJudge",
    "CallableJudge",
    "TRANSPORT_FAILURE",
    "load_script",
    "rule_extractor_from_script",
    "rule_judge_from_script",
    "HttpEmbeddingProvider",
    "HttpExtractionProvider",
    "HttpJudgeProvider",
    "ConcurrencyGate",
    "TokenBucket",
]
