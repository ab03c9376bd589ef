"""Taxonomy maintenance driven by judge feedback.

Categories that keep attracting low-scoring assignments have weak
descriptions. This module ranks categories by low-quality volume, scores
candidate description rewrites by embedding separation on labeled TP/FP
test texts, and (optionally, provider-backed) drafts the rewrites. The
separation metric uses the exact code path production matching uses, so
an improvement measured here is an improvement in the pipeline.
"""

from __future__ import annotations

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import DataError, MalformedResponseError, ProviderError
from .providers.base import BaseProvider, EmbeddingProvider, ProviderConfig
from .providers.http import _HttpMixin
from .taxonomy import TaxonomyCategory
from .templates import render_template, template_text

LOW_QUALITY_THRESHOLD = 4
_SCALE = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class CategoryTrouble:
    category_id: str
    low_quality_count: int
    score_histogram: dict[int, int]
    low_quality_share: float  # sub-threshold fraction of this category's mappings
    reasonings: tuple[str, ...]  # judge reasonings for the sub-threshold records


@dataclass(frozen=True)
class SeparationTestCase:
    text: str
    label: str  # "TP" or "FP"
    note: str = ""

    def __post_init__(self) -> None:
        if self.label not in ("TP", "FP"):
            raise DataError(f"test case label must be TP or FP, got {self.label!r}")
        if not self.text.strip():
            raise DataError("test case text must be non-empty")


@dataclass(frozen=True)
class VariantResult:
    description: str
    avg_tp: float
    avg_fp: float
    separation: float


def aggregate_low_quality(
    log_records: Iterable[dict[str, Any]],
    threshold: int = LOW_QUALITY_THRESHOLD,
) -> list[CategoryTrouble]:
    """Rank categories by volume of sub-threshold judgements.

    One entry per category appearing in the log, sorted by
    low_quality_count descending with category_id as tie-break. The
    stored reasonings are those of the sub-threshold records, in log
    order; they are the diagnostic text a rewrite has to answer.
    """
    histograms: dict[str, dict[int, int]] = {}
    reasonings: dict[str, list[str]] = {}
    for i, rec in enumerate(log_records):
        try:
            cid = rec["category_id"]
            score = int(rec["score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed eval-log record #{i}: {exc}") from exc
        if score not in _SCALE:
            raise DataError(f"eval-log record #{i} has score {score} outside 1-5")
        hist = histograms.setdefault(cid, {s: 0 for s in _SCALE})
        hist[score] += 1
        if score < threshold:
            reasonings.setdefault(cid, []).append(str(rec.get("reasoning", "")))

    troubles = []
    for cid, hist in histograms.items():
        low = sum(hist[s] for s in _SCALE if s < threshold)
        total = sum(hist.values())
        troubles.append(
            CategoryTrouble(
                category_id=cid,
                low_quality_count=low,
                score_histogram=hist,
                low_quality_share=low / total,
                reasonings=tuple(reasonings.get(cid, [])),
            )
        )
    troubles.sort(key=lambda t: (-t.low_quality_count, t.category_id))
    return troubles


def _case_split(cases: Sequence[SeparationTestCase]) -> tuple[list[int], list[int]]:
    tp = [i for i, c in enumerate(cases) if c.label == "TP"]
    fp = [i for i, c in enumerate(cases) if c.label == "FP"]
    if not tp or not fp:
        raise DataError("separation needs at least one TP and one FP case")
    return tp, fp


def compute_separation(
    description: str,
    cases: Sequence[SeparationTestCase],
    embedder: EmbeddingProvider,
    instruction: str,
) -> VariantResult:
    """Score one description: mean TP similarity minus mean FP similarity.

    Similarity is the same unit-vector dot product the matcher uses, with
    the same task instruction, so this measures exactly what production
    would see.
    """
    if not description.strip():
        raise DataError("description must be non-empty")
    tp_idx, fp_idx = _case_split(cases)
    vectors = embedder.embed_batch([description] + [c.text for c in cases], instruction)
    desc_vec = vectors[0]
    sims = vectors[1:] @ desc_vec
    avg_tp = float(np.mean(sims[tp_idx]))
    avg_fp = float(np.mean(sims[fp_idx]))
    return VariantResult(
        description=description,
        avg_tp=avg_tp,
        avg_fp=avg_fp,
        separation=avg_tp - avg_fp,
    )


def separation_from_similarities(
    description: str,
    tp_sims: Sequence[float],
    fp_sims: Sequence[float],
) -> VariantResult:
    """Build a VariantResult from already-measured per-case similarities."""
    if not tp_sims or not fp_sims:
        raise DataError("separation needs at least one TP and one FP similarity")
    avg_tp = float(np.mean(tp_sims))
    avg_fp = float(np.mean(fp_sims))
    return VariantResult(description, avg_tp, avg_fp, avg_tp - avg_fp)


def rank_variants(
    descriptions: Sequence[str],
    cases: Sequence[SeparationTestCase],
    embedder: EmbeddingProvider,
    instruction: str,
) -> list[VariantResult]:
    """Score every candidate and sort by separation descending.

    The sort is stable, so equal separations keep input order; the
    result is always a permutation of the inputs.
    """
    if not descriptions:
        raise DataError("rank_variants needs at least one description")
    results = [compute_separation(d, cases, embedder, instruction) for d in descriptions]
    return sorted(results, key=lambda r: -r.separation)


def improvement_pct(old_sep: float, new_sep: float) -> float:
    """Relative gain of a rewrite over the incumbent description."""
    if old_sep == 0:
        raise DataError("improvement undefined for a zero baseline separation")
    return 100.0 * (new_sep - old_sep) / old_sep


def validate_variants_payload(raw: Any) -> dict[str, Any]:
    if not isinstance(raw, dict) or not isinstance(raw.get("variants"), list):
        raise MalformedResponseError("proposal payload missing 'variants' list")
    variants = []
    for i, v in enumerate(raw["variants"]):
        if not isinstance(v, str) or not v.strip():
            raise MalformedResponseError(f"variant {i} is empty")
        variants.append(v.strip())
    if not variants:
        raise MalformedResponseError("proposal payload has zero variants")
    return {"variants": variants}


class ProposalProvider(BaseProvider, ABC):
    """LLM that drafts replacement descriptions for a weak category."""

    @abstractmethod
    def _attempt(self, prompt: str) -> Any: ...

    def propose_structured(self, prompt: str) -> dict[str, Any]:
        return self._structured_call(
            lambda: self._attempt(prompt), validate_variants_payload, "proposal"
        )


class HttpProposalProvider(_HttpMixin, ProposalProvider):
    """POSTs {"model", "prompt"}; response body is the variants payload.

    Defaults to the extraction credential since proposal generation is a
    text-authoring task; override api_key_env to separate them.
    """

    _default_key_env = "EXTRACTION_API_KEY"

    def __init__(self, config: ProviderConfig, session: Any = None):
        super().__init__(config)
        self._init_http(session)

    def _attempt(self, prompt: str) -> Any:
        return self._post_json({"model": self.config.model_name, "prompt": prompt})


class SequenceProposer(ProposalProvider):
    """Proposal double replaying a fixed queue of raw payloads."""

    def __init__(self, steps: Iterable[Any], config: ProviderConfig | None = None):
        super().__init__(config or ProviderConfig(model_name="seq-propose"))
        self._steps = list(steps)

    def _attempt(self, prompt: str) -> Any:
        if not self._steps:
            raise ProviderError("proposal queue exhausted")
        step = self._steps.pop(0)
        return step() if callable(step) else step


class StaticProposer(ProposalProvider):
    """Proposal double returning one fixed variant list every call."""

    def __init__(self, variants: Sequence[str], config: ProviderConfig | None = None):
        super().__init__(config or ProviderConfig(model_name="static-propose"))
        self._variants = list(variants)

    def _attempt(self, prompt: str) -> Any:
        return {"variants": list(self._variants)}


def render_proposal_prompt(
    category: TaxonomyCategory,
    trouble: CategoryTrouble,
    n_variants: int = 3,
    max_reasonings: int = 20,
    template: str | None = None,
) -> str:
    source = template if template is not None else template_text("refine_proposals.txt")
    sample = trouble.reasonings[:max_reasonings]
    bullet_list = "\n".join(f"- {r}" for r in sample if r.strip()) or "- (none recorded)"
    return render_template(
        source,
        category_path=category.path,
        description=category.description,
        reasonings=bullet_list,
        n_variants=str(n_variants),
    )


def propose_variants(
    category: TaxonomyCategory,
    trouble: CategoryTrouble,
    provider: ProposalProvider,
    n_variants: int = 3,
    template: str | None = None,
) -> list[str]:
    """Draft candidate rewrites from the category's failure reasonings."""
    if not trouble.reasonings:
        raise DataError(
            f"category {trouble.category_id} has no failure reasonings to work from"
        )
    prompt = render_proposal_prompt(category, trouble, n_variants, template=template)
    payload = provider.propose_structured(prompt)
    return payload["variants"]


def load_test_cases(path: str | Path) -> list[SeparationTestCase]:
    """Read a TP/FP test set: TSV with header label, text, note."""
    cases = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["label", "text"]:
            raise DataError(f"{path}: expected TSV header label\\ttext\\tnote")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: need at least label and text")
            note = row[2].strip() if len(row) > 2 else ""
            try:
                cases.append(
                    SeparationTestCase(text=row[1].strip(), label=row[0].strip(), note=note)
                )
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not cases:
        raise DataError(f"{path}: test set is empty")
    return cases


def variant_report_rows(results: Sequence[VariantResult]) -> list[list[str]]:
    """TSV rows (description, avg_tp, avg_fp, separation), 4 decimals."""
    rows = [["description", "avg_tp", "avg_fp", "separation"]]
    for r in results:
        rows.append(
            [r.description, f"{r.avg_tp:.4f}", f"{r.avg_fp:.4f}", f"{r.separation:.4f}"]
        )
    return rows
