"""Stage 3: score every (quote, category) mapping with an LLM judge.

Nearest-neighbor assignment is total by design, so it produces spurious
matches; this stage scores each one on a 1-5 rubric, filters at a
threshold (default 4), and logs every judgement. The log is append-only
and is the raw material for taxonomy refinement, so nothing is dropped:
rejected mappings are logged with their reasoning.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

from .errors import BatchJudgeError, DataError
from .mapping import MappedRisk
from .providers.base import JudgeProvider
from .taxonomy import Taxonomy, TaxonomyCategory
from .templates import render_template, template_text

DEFAULT_THRESHOLD = 4
SCALE = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class JudgedMapping:
    mapped: MappedRisk
    score: int
    reasoning: str
    judge_model: str
    document_id: str

    def __post_init__(self) -> None:
        if self.score not in SCALE:
            raise DataError(f"judge score {self.score} outside the 1-5 scale")
        if not self.reasoning.strip():
            raise DataError("judge reasoning must be non-empty")


def render_judge_prompt(
    mapped: MappedRisk,
    category: TaxonomyCategory,
    template: str | None = None,
) -> str:
    source = template if template is not None else template_text("judge_system.txt")
    return render_template(
        source,
        quote=mapped.risk.quote,
        tag=mapped.risk.tag,
        category_path=category.path,
        category_description=category.description,
    )


def judge_mapping(
    mapped: MappedRisk,
    category: TaxonomyCategory,
    provider: JudgeProvider,
    document_id: str = "",
    template: str | None = None,
) -> JudgedMapping:
    """Score one mapping. The prompt carries the quote, the full category
    path, and the category description, so the judge sees everything the
    mapper saw plus the taxonomy's own definition of the category."""
    if category.id != mapped.category_id:
        raise DataError(
            f"category {category.id} does not match mapping {mapped.category_id}"
        )
    prompt = render_judge_prompt(mapped, category, template)
    payload = provider.judge_structured(prompt)
    return JudgedMapping(
        mapped=mapped,
        score=payload["score"],
        reasoning=payload["reasoning"],
        judge_model=provider.config.model_name,
        document_id=document_id,
    )


def log_record(
    judged: JudgedMapping,
    category: TaxonomyCategory,
    threshold: int,
    timestamp: str,
) -> dict[str, Any]:
    """One eval-log line; retained mirrors the filter decision exactly."""
    return {
        "document_id": judged.document_id,
        "category_id": judged.mapped.category_id,
        "tertiary_label": category.tertiary_label,
        "quote": judged.mapped.risk.quote,
        "tag": judged.mapped.risk.tag,
        "similarity": judged.mapped.similarity,
        "score": judged.score,
        "reasoning": judged.reasoning,
        "retained": judged.score >= threshold,
        "judge_model": judged.judge_model,
        "timestamp": timestamp,
    }


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class EvalLogWriter:
    """Append-only JSONL sink for judge outcomes.

    Appends are serialized with a lock; judge_all flushes results in
    input order after the batch drains, so two identical runs produce
    identical files apart from timestamps.
    """

    def __init__(
        self,
        path: str | Path,
        threshold: int = DEFAULT_THRESHOLD,
        clock: Callable[[], str] = _utc_now,
    ):
        self.path = Path(path)
        self.threshold = threshold
        self._clock = clock
        self._lock = threading.Lock()
        self.records_written = 0

    def write(self, judged: JudgedMapping, category: TaxonomyCategory) -> None:
        record = log_record(judged, category, self.threshold, self._clock())
        line = json.dumps(record, separators=(",", ":"), sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
            self.records_written += 1


def judge_all(
    mappings: list[MappedRisk],
    taxonomy: Taxonomy,
    provider: JudgeProvider,
    document_id: str = "",
    template: str | None = None,
    log_writer: EvalLogWriter | None = None,
    max_workers: int | None = None,
) -> list[JudgedMapping]:
    """Judge a batch concurrently, returning results in input order.

    The provider's own gate bounds in-flight requests. Failure policy is
    fail-after-drain: every mapping is attempted, completed judgements
    are flushed to the log first, then a batch error names the failures.
    A partial batch never silently feeds dedup.
    """
    if not mappings:
        return []
    categories = [taxonomy.get(m.category_id) for m in mappings]
    workers = max_workers or provider.config.max_concurrency
    results: list[JudgedMapping | None] = [None] * len(mappings)
    failures: list[tuple[int, Exception]] = []

    def run(i: int) -> None:
        results[i] = judge_mapping(
            mappings[i], categories[i], provider, document_id, template
        )

    with ThreadPoolExecutor(max_workers=min(workers, len(mappings))) as pool:
        futures = {pool.submit(run, i): i for i in range(len(mappings))}
        for future, i in futures.items():
            exc = future.exception()
            if exc is not None:
                failures.append((i, exc))

    if log_writer is not None:
        for i, judged in enumerate(results):
            if judged is not None:
                log_writer.write(judged, categories[i])

    if failures:
        failures.sort(key=lambda pair: pair[0])
        named = ", ".join(
            f"#{i} ({mappings[i].category_id}): {exc}" for i, exc in failures
        )
        raise BatchJudgeError(
            f"{len(failures)} of {len(mappings)} judgements failed: {named}",
            failures=failures,
        )
    return [j for j in results if j is not None]


def filter_by_quality(
    judged: Iterable[JudgedMapping],
    threshold: int = DEFAULT_THRESHOLD,
) -> tuple[list[JudgedMapping], list[JudgedMapping]]:
    """Partition into (retained, rejected) at score >= threshold.

    Both halves preserve input order; together they are exactly the
    input, so raising the threshold can only shrink the retained side.
    """
    if threshold not in SCALE:
        raise DataError(f"threshold {threshold} outside the 1-5 scale")
    retained: list[JudgedMapping] = []
    rejected: list[JudgedMapping] = []
    for j in judged:
        (retained if j.score >= threshold else rejected).append(j)
    return retained, rejected


@dataclass(frozen=True)
class QualityDistribution:
    counts: dict[int, int]
    percentages: dict[int, float]
    total: int


def quality_distribution(judged: Iterable[JudgedMapping]) -> QualityDistribution:
    """Histogram over the 1-5 scale with percentages rounded to 0.1."""
    counts = {s: 0 for s in SCALE}
    for j in judged:
        counts[j.score] += 1
    total = sum(counts.values())
    if total == 0:
        return QualityDistribution(counts=counts, percentages={s: 0.0 for s in SCALE}, total=0)
    percentages = {s: round(100.0 * counts[s] / total, 1) for s in SCALE}
    return QualityDistribution(counts=counts, percentages=percentages, total=total)


def distribution_from_counts(counts: dict[int, int]) -> QualityDistribution:
    """Same histogram computed straight from per-score counts."""
    full = {s: int(counts.get(s, 0)) for s in SCALE}
    total = sum(full.values())
    if total == 0:
        return QualityDistribution(counts=full, percentages={s: 0.0 for s in SCALE}, total=0)
    percentages = {s: round(100.0 * full[s] / total, 1) for s in SCALE}
    return QualityDistribution(counts=full, percentages=percentages, total=total)


def read_eval_log(path: str | Path) -> list[dict[str, Any]]:
    """Parse an eval-log JSONL file, skipping blank lines."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad eval-log line: {exc}") from exc
    return records
