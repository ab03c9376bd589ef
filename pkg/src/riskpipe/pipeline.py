"""End-to-end orchestration: extract, map, judge, dedup, persist.

A run owns a fresh directory named by its run id and never touches
earlier runs' files; eval logs are append-only within the run and the
whole output set is reproducible byte-for-byte (timestamps aside) when
the providers are deterministic. Documents are processed in sorted id
order and all writes happen in that order, so concurrency never shows
up in the bytes.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

from .dedup import deduplicate
from .errors import DataError, ProviderError, RiskPipeError
from .extraction import ExtractedRisk, extract_risks
from .judging import (
    DEFAULT_THRESHOLD,
    JudgedMapping,
    filter_by_quality,
    judge_all,
    log_record,
)
from .mapping import MappedRisk, TaxonomyEmbeddingIndex, match_risks
from .providers.base import EmbeddingProvider, ExtractionProvider, JudgeProvider
from .taxonomy import Taxonomy

EXTRACTED_FILE = "extracted.jsonl"
MAPPED_FILE = "mapped.jsonl"
JUDGED_FILE = "judged.jsonl"  # the eval log
FINAL_FILE = "final.jsonl"
MANIFEST_FILE = "manifest.json"


def _utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def dump_json_line(record: dict[str, Any]) -> str:
    return json.dumps(record, separators=(",", ":"), sort_keys=True)


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dump_json_line(record) + "\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad JSONL line: {exc}") from exc
    return records


def extracted_from_record(d: dict[str, Any]) -> tuple[str, ExtractedRisk]:
    try:
        return str(d["document_id"]), ExtractedRisk(
            tag=str(d["tag"]),
            quote=str(d["quote"]),
            quote_verified=bool(d["quote_verified"]),
        )
    except KeyError as exc:
        raise DataError(f"extracted record missing field {exc}") from exc


def mapped_from_record(d: dict[str, Any]) -> tuple[str, MappedRisk]:
    try:
        risk = ExtractedRisk(
            tag=str(d["tag"]),
            quote=str(d["quote"]),
            quote_verified=bool(d["quote_verified"]),
        )
        return str(d["document_id"]), MappedRisk(
            risk=risk,
            category_id=str(d["category_id"]),
            similarity=float(d["similarity"]),
        )
    except KeyError as exc:
        raise DataError(f"mapped record missing field {exc}") from exc


class EvalLogBuffer:
    """In-memory eval-log sink with the EvalLogWriter write signature.

    The pipeline buffers each document's records and flushes buffers in
    document order, which keeps the on-disk log deterministic even when
    documents are judged concurrently.
    """

    def __init__(self, threshold: int, clock: Callable[[], str] = _utc_now_iso):
        self.threshold = threshold
        self._clock = clock
        self.lines: list[str] = []

    def write(self, judged: JudgedMapping, category) -> None:
        record = log_record(judged, category, self.threshold, self._clock())
        self.lines.append(dump_json_line(record))


@dataclass
class DocOutcome:
    document_id: str
    status: str = "ok"  # ok | failed | not_run
    error: str | None = None
    error_kind: str | None = None  # data | provider
    counts: dict[str, int] = field(default_factory=dict)
    extracted_records: list[dict[str, Any]] = field(default_factory=list)
    mapped_records: list[dict[str, Any]] = field(default_factory=list)
    eval_lines: list[str] = field(default_factory=list)
    final_records: list[dict[str, Any]] = field(default_factory=list)
    failure: Exception | None = None


@dataclass(frozen=True)
class RunManifest:
    run_id: str
    out_dir: Path
    documents: dict[str, dict[str, Any]]
    totals: dict[str, int]
    fingerprints: dict[str, str]
    aborted: bool
    data: dict[str, Any]

    @property
    def ok(self) -> bool:
        return not self.aborted and all(
            d["status"] == "ok" for d in self.documents.values()
        )


def _process_document(
    document_id: str,
    text: str,
    taxonomy: Taxonomy,
    index: TaxonomyEmbeddingIndex,
    embedder: EmbeddingProvider,
    extractor: ExtractionProvider,
    judge_provider: JudgeProvider,
    threshold: int,
    clock: Callable[[], str],
    embed_tag_with_quote: bool,
    schema_hint: str | None,
    judge_template: str | None,
) -> DocOutcome:
    outcome = DocOutcome(document_id=document_id)
    buffer = EvalLogBuffer(threshold, clock)
    try:
        risks = extract_risks(text, extractor, schema_hint)
        outcome.counts["extracted"] = len(risks)
        outcome.extracted_records = [r.as_record(document_id) for r in risks]

        mapped = match_risks(risks, index, embedder, embed_tag_with_quote)
        outcome.counts["mapped"] = len(mapped)
        outcome.mapped_records = [m.as_record(document_id) for m in mapped]

        judged = judge_all(
            mapped,
            taxonomy,
            judge_provider,
            document_id=document_id,
            template=judge_template,
            log_writer=buffer,
        )
        outcome.counts["judged"] = len(judged)

        retained, _ = filter_by_quality(judged, threshold)
        outcome.counts["retained"] = len(retained)

        final = deduplicate(retained, taxonomy, document_id)
        outcome.counts["final"] = len(final)
        outcome.final_records = [r.as_record() for r in final]
    except RiskPipeError as exc:
        outcome.status = "failed"
        outcome.error = str(exc)
        outcome.error_kind = "provider" if isinstance(exc, ProviderError) else "data"
        outcome.failure = exc
    finally:
        outcome.eval_lines = buffer.lines
    return outcome


def run_pipeline(
    source: Iterable[tuple[str, str]],
    taxonomy: Taxonomy,
    index: TaxonomyEmbeddingIndex,
    embedder: EmbeddingProvider,
    extractor: ExtractionProvider,
    judge_provider: JudgeProvider,
    out_dir: str | Path,
    run_id: str | None = None,
    threshold: int = DEFAULT_THRESHOLD,
    failure_policy: str = "abort",
    clock: Callable[[], str] = _utc_now_iso,
    embed_tag_with_quote: bool = False,
    schema_hint: str | None = None,
    judge_template: str | None = None,
    config_snapshot: dict[str, Any] | None = None,
    doc_workers: int = 1,
) -> RunManifest:
    """Run every stage over a document set and persist one run directory.

    Failure policy: "abort" stops after the first failed document (later
    documents are marked not_run) and re-raises its error once all
    outputs and the manifest are safely on disk; "skip" records the
    failure and carries on. Either way the eval-log lines a failed
    document managed to produce are flushed, because judge feedback is
    exactly what refinement needs to diagnose the failure.
    """
    if failure_policy not in ("abort", "skip"):
        raise DataError(f"failure_policy must be 'abort' or 'skip', got {failure_policy!r}")
    started = _utc_now_iso()
    t0 = time.monotonic()
    docs = sorted(source, key=lambda pair: pair[0])
    ids = [d[0] for d in docs]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate document ids in source")

    run_id = run_id or datetime.now(timezone.utc).strftime("run-%Y%m%d-%H%M%S-%f")
    run_dir = Path(out_dir) / run_id
    if run_dir.exists():
        raise DataError(f"run directory already exists: {run_dir}")
    run_dir.mkdir(parents=True)

    def work(pair: tuple[str, str]) -> DocOutcome:
        return _process_document(
            pair[0],
            pair[1],
            taxonomy,
            index,
            embedder,
            extractor,
            judge_provider,
            threshold,
            clock,
            embed_tag_with_quote,
            schema_hint,
            judge_template,
        )

    outcomes: list[DocOutcome] = []
    if doc_workers > 1 and failure_policy == "skip" and len(docs) > 1:
        with ThreadPoolExecutor(max_workers=doc_workers) as pool:
            outcomes = list(pool.map(work, docs))
    else:
        # sequential keeps abort semantics exact: nothing runs past a failure
        stopped = False
        for pair in docs:
            if stopped:
                outcomes.append(DocOutcome(document_id=pair[0], status="not_run"))
                continue
            outcome = work(pair)
            outcomes.append(outcome)
            if outcome.status == "failed" and failure_policy == "abort":
                stopped = True

    with open(run_dir / EXTRACTED_FILE, "w", encoding="utf-8") as ext_fh, open(
        run_dir / MAPPED_FILE, "w", encoding="utf-8"
    ) as map_fh, open(run_dir / JUDGED_FILE, "w", encoding="utf-8") as log_fh, open(
        run_dir / FINAL_FILE, "w", encoding="utf-8"
    ) as fin_fh:
        for outcome in outcomes:
            for record in outcome.extracted_records:
                ext_fh.write(dump_json_line(record) + "\n")
            for record in outcome.mapped_records:
                map_fh.write(dump_json_line(record) + "\n")
            for line in outcome.eval_lines:
                log_fh.write(line + "\n")
            for record in outcome.final_records:
                fin_fh.write(dump_json_line(record) + "\n")

    documents = {
        o.document_id: {
            "status": o.status,
            "error": o.error,
            "error_kind": o.error_kind,
            **o.counts,
        }
        for o in outcomes
    }
    # totals sum completed documents only, so the count chain
    # extracted == mapped == judged >= retained >= final holds on every
    # run; partial work from failed docs stays visible per-document
    totals = {"documents": len(outcomes)}
    for key in ("extracted", "mapped", "judged", "retained", "final"):
        totals[key] = sum(o.counts.get(key, 0) for o in outcomes if o.status == "ok")
    first_failure = next((o for o in outcomes if o.status == "failed"), None)
    aborted = failure_policy == "abort" and first_failure is not None
    fingerprints = {
        "embedder": index.embedder_fingerprint,
        "extraction_model": extractor.config.model_name,
        "judge_model": judge_provider.config.model_name,
    }
    manifest_data = {
        "run_id": run_id,
        "threshold": threshold,
        "failure_policy": failure_policy,
        "aborted": aborted,
        "config": config_snapshot or {},
        "fingerprints": fingerprints,
        "documents": documents,
        "totals": totals,
        "timing": {
            "started_utc": started,
            "finished_utc": _utc_now_iso(),
            "seconds": round(time.monotonic() - t0, 3),
        },
    }
    with open(run_dir / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest_data, fh, indent=2, sort_keys=True)
        fh.write("\n")

    manifest = RunManifest(
        run_id=run_id,
        out_dir=run_dir,
        documents=documents,
        totals=totals,
        fingerprints=fingerprints,
        aborted=aborted,
        data=manifest_data,
    )
    if aborted and first_failure is not None and first_failure.failure is not None:
        raise first_failure.failure
    return manifest


def map_records(
    extracted: list[dict[str, Any]],
    index: TaxonomyEmbeddingIndex,
    embedder: EmbeddingProvider,
    embed_tag_with_quote: bool = False,
) -> list[dict[str, Any]]:
    """Stage 2 over a heterogeneous record list (CLI `map` command)."""
    out = []
    for record in extracted:
        document_id, risk = extracted_from_record(record)
        (mapped,) = match_risks([risk], index, embedder, embed_tag_with_quote)
        out.append(mapped.as_record(document_id))
    return out


def judge_records(
    mapped: list[dict[str, Any]],
    taxonomy: Taxonomy,
    provider: JudgeProvider,
    log_sink,
    threshold: int = DEFAULT_THRESHOLD,
    judge_template: str | None = None,
) -> list[JudgedMapping]:
    """Stage 3 over a mapped-record list, grouped by document id.

    Groups run in first-appearance order; each group's results land in
    the log in input order.
    """
    groups: dict[str, list[MappedRisk]] = {}
    order: list[str] = []
    for record in mapped:
        document_id, m = mapped_from_record(record)
        if m.category_id not in taxonomy.category_ids:
            raise DataError(
                f"mapped record for {document_id} references unknown "
                f"category {m.category_id!r}"
            )
        if document_id not in groups:
            groups[document_id] = []
            order.append(document_id)
        groups[document_id].append(m)
    judged_all: list[JudgedMapping] = []
    for document_id in order:
        judged_all.extend(
            judge_all(
                groups[document_id],
                taxonomy,
                provider,
                document_id=document_id,
                template=judge_template,
                log_writer=log_sink,
            )
        )
    return judged_all
