"""Taxonomy-aligned risk extraction from annual-report risk sections.

Three-stage pipeline: free-form LLM extraction with verbatim quotes,
embedding nearest-neighbor mapping onto a fixed three-tier taxonomy, and
LLM-as-judge quality filtering with an append-only eval log. On top of
that: dedup to one record per category per filing, judge-feedback-driven
taxonomy refinement, and industry-clustering validation analytics.
"""

from .errors import (
    BatchJudgeError,
    ConfigError,
    DataError,
    FingerprintMismatchError,
    MalformedResponseError,
    ProviderError,
    RiskPipeError,
    TaxonomyError,
    TransportError,
)
from .taxonomy import Taxonomy, TaxonomyCategory, load_taxonomy, validate_taxonomy
from .extraction import ExtractedRisk, extract_risks
from .mapping import (
    DEFAULT_TASK_INSTRUCTION,
    MappedRisk,
    TaxonomyEmbeddingIndex,
    build_index,
    load_index,
    match_risks,
    save_index,
)
from .judging import (
    EvalLogWriter,
    JudgedMapping,
    filter_by_quality,
    judge_all,
    judge_mapping,
    quality_distribution,
)
from .dedup import RiskFactorRecord, deduplicate
from .pipeline import RunManifest, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "RiskPipeError",
    "ConfigError",
    "DataError",
    "TaxonomyError",
    "FingerprintMismatchError",
    "ProviderError",
    "TransportError",
    "MalformedResponseError",
    "BatchJudgeError",
    "Taxonomy",
    "TaxonomyCategory",
    "load_taxonomy",
    "validate_taxonomy",
    "ExtractedRisk",
    "extract_risks",
    "DEFAULT_TASK_INSTRUCTION",
    "TaxonomyEmbeddingIndex",
    "MappedRisk",
    "build_index",
    "match_risks",
    "save_index",
    "load_index",
    "JudgedMapping",
    "EvalLogWriter",
    "judge_mapping",
    "judge_all",
    "filter_by_quality",
    "quality_distribution",
    "RiskFactorRecord",
    "deduplicate",
    "RunManifest",
    "run_pipeline",
    "__version__",
]
