"""Run configuration: TOML file, env interpolation, provider factories.

A config file is optional; every knob has a default that runs the
pipeline fully offline (hashing embedder, no remote providers). String
values may reference secrets as ${ENV_NAME}; interpolation happens at
load time and missing variables fail loudly rather than leaking a
literal "${...}" into a request header.
"""

from __future__ import annotations

import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .mapping import DEFAULT_TASK_INSTRUCTION
from .providers.base import EmbeddingProvider, ProviderConfig
from .providers.doubles import (
    HashingEmbedder,
    RuleExtractor,
    RuleJudge,
    load_script,
    rule_extractor_from_script,
    rule_judge_from_script,
)
from .providers.http import (
    HttpEmbeddingProvider,
    HttpExtractionProvider,
    HttpJudgeProvider,
)

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate_env(value: Any) -> Any:
    """Replace ${NAME} in strings, recursing into containers."""
    if isinstance(value, str):

        def repl(match: re.Match[str]) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references unset environment variable {name}")
            return os.environ[name]

        return _ENV_REF.sub(repl, value)
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    return value


@dataclass(frozen=True)
class ProviderSpec:
    """One provider section as read from the file."""

    kind: str = ""  # "", "http", "scripted", "hashing"
    options: dict[str, Any] = field(default_factory=dict)

    def provider_config(self) -> ProviderConfig:
        o = self.options
        return ProviderConfig(
            endpoint=str(o.get("endpoint", "")),
            model_name=str(o.get("model_name", self.kind or "unspecified")),
            max_retries=int(o.get("max_retries", 2)),
            timeout_seconds=float(o.get("timeout_seconds", 60.0)),
            max_concurrency=int(o.get("max_concurrency", 4)),
            rate_limit=int(o["rate_limit"]) if "rate_limit" in o else None,
            rate_window_seconds=float(o.get("rate_window_seconds", 1.0)),
            retry_backoff_seconds=float(o.get("retry_backoff_seconds", 0.0)),
            api_key_env=str(o.get("api_key_env", "")),
        )


@dataclass(frozen=True)
class RunConfig:
    instruction: str = DEFAULT_TASK_INSTRUCTION
    threshold: int = 4
    seed: int = 0
    failure_policy: str = "abort"  # or "skip"
    embed_tag_with_quote: bool = False
    doc_workers: int = 1
    taxonomy_path: str = ""
    documents_path: str = ""
    index_path: str = ""
    out_dir: str = "out"
    embedding: ProviderSpec = field(default_factory=lambda: ProviderSpec("hashing"))
    extraction: ProviderSpec = field(default_factory=ProviderSpec)
    judge: ProviderSpec = field(default_factory=ProviderSpec)
    propose: ProviderSpec = field(default_factory=ProviderSpec)
    raw: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.threshold not in (1, 2, 3, 4, 5):
            raise ConfigError(f"threshold must be 1-5, got {self.threshold}")
        if self.failure_policy not in ("abort", "skip"):
            raise ConfigError(
                f"failure_policy must be 'abort' or 'skip', got {self.failure_policy!r}"
            )
        if self.doc_workers < 1:
            raise ConfigError("doc_workers must be >= 1")

    def snapshot(self) -> dict[str, Any]:
        """Manifest-friendly view: everything except secrets."""
        return {
            "instruction": self.instruction,
            "threshold": self.threshold,
            "seed": self.seed,
            "failure_policy": self.failure_policy,
            "embed_tag_with_quote": self.embed_tag_with_quote,
            "doc_workers": self.doc_workers,
            "taxonomy_path": self.taxonomy_path,
            "documents_path": self.documents_path,
            "index_path": self.index_path,
            "out_dir": self.out_dir,
            "embedding_kind": self.embedding.kind,
            "extraction_kind": self.extraction.kind,
            "judge_kind": self.judge.kind,
        }


def _provider_spec(data: dict[str, Any], section: str, default_kind: str = "") -> ProviderSpec:
    raw = data.get(section)
    if raw is None:
        return ProviderSpec(default_kind)
    if not isinstance(raw, dict):
        raise ConfigError(f"[{section}] must be a table")
    kind = str(raw.get("kind", default_kind))
    return ProviderSpec(kind=kind, options=dict(raw))


def parse_config(data: dict[str, Any]) -> RunConfig:
    data = interpolate_env(data)
    paths = data.get("paths", {})
    if not isinstance(paths, dict):
        raise ConfigError("[paths] must be a table")
    return RunConfig(
        instruction=str(data.get("instruction", DEFAULT_TASK_INSTRUCTION)),
        threshold=int(data.get("threshold", 4)),
        seed=int(data.get("seed", 0)),
        failure_policy=str(data.get("failure_policy", "abort")),
        embed_tag_with_quote=bool(data.get("embed_tag_with_quote", False)),
        doc_workers=int(data.get("doc_workers", 1)),
        taxonomy_path=str(paths.get("taxonomy", "")),
        documents_path=str(paths.get("documents", "")),
        index_path=str(paths.get("index", "")),
        out_dir=str(paths.get("out_dir", "out")),
        embedding=_provider_spec(data, "embedding", default_kind="hashing"),
        extraction=_provider_spec(data, "extraction"),
        judge=_provider_spec(data, "judge"),
        propose=_provider_spec(data, "propose"),
        raw=data,
    )


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid TOML: {exc}")
    return parse_config(data)


def default_config() -> RunConfig:
    return RunConfig()


def make_embedder(cfg: RunConfig) -> EmbeddingProvider:
    spec = cfg.embedding
    if spec.kind in ("", "hashing"):
        dim = int(spec.options.get("dim", 64))
        return HashingEmbedder(dim=dim, config=spec.provider_config())
    if spec.kind == "http":
        dim = int(spec.options.get("dim", 1024))
        return HttpEmbeddingProvider(spec.provider_config(), dimension=dim)
    raise ConfigError(f"unknown embedding kind {spec.kind!r}")


def make_extractor(cfg: RunConfig) -> RuleExtractor | HttpExtractionProvider:
    spec = cfg.extraction
    if spec.kind == "http":
        return HttpExtractionProvider(spec.provider_config())
    if spec.kind == "scripted":
        script = load_script(_script_path(spec, "extraction"))
        return rule_extractor_from_script(script, spec.provider_config())
    raise ConfigError(
        "extraction provider required: configure [extraction] with kind "
        "'http' or 'scripted'"
    )


def make_judge(cfg: RunConfig) -> RuleJudge | HttpJudgeProvider:
    spec = cfg.judge
    if spec.kind == "http":
        return HttpJudgeProvider(spec.provider_config())
    if spec.kind == "scripted":
        script = load_script(_script_path(spec, "judge"))
        return rule_judge_from_script(script, spec.provider_config())
    raise ConfigError(
        "judge provider required: configure [judge] with kind 'http' or 'scripted'"
    )


def make_proposer(cfg: RunConfig):
    # imported late: refinement pulls in this module's dependencies
    from .refinement import HttpProposalProvider, StaticProposer

    spec = cfg.propose
    if spec.kind == "http":
        return HttpProposalProvider(spec.provider_config())
    if spec.kind == "scripted":
        script = load_script(_script_path(spec, "propose"))
        section = script.get("propose", {})
        variants = section.get("variants", [])
        if not variants:
            raise ConfigError("scripted proposer needs a 'propose.variants' list")
        return StaticProposer(variants, spec.provider_config())
    raise ConfigError(
        "proposal provider required: configure [propose] with kind 'http' or 'scripted'"
    )


def _script_path(spec: ProviderSpec, section: str) -> str:
    script = spec.options.get("script", "")
    if not script:
        raise ConfigError(f"[{section}] kind 'scripted' needs a 'script' file path")
    return str(script)
