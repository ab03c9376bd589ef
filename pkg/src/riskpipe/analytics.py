"""External validation: do extracted risk profiles cluster by industry?

Builds binary company-by-category matrices from final records, weights
categories inversely to prevalence (ubiquitous risks carry little
signal), compares weighted cosine similarity within and across SIC
industry groups, and quantifies the separation with the stats module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

import numpy as np

from .errors import DataError
from .stats import RocResult, cohens_d, ks_statistic, permutation_test, roc_auc, welch_t
from .taxonomy import Taxonomy

LEVELS = ("primary", "secondary", "tertiary")

_DOC_YEAR_SUFFIX = re.compile(r"_(\d{4})$")


def company_from_document_id(document_id: str) -> str:
    """Strip a trailing _<year> so multi-year filings share one row."""
    return _DOC_YEAR_SUFFIX.sub("", document_id)


def _field(record: Any, name: str) -> Any:
    if isinstance(record, Mapping):
        try:
            return record[name]
        except KeyError as exc:
            raise DataError(f"record missing field {name!r}") from exc
    try:
        return getattr(record, name)
    except AttributeError as exc:
        raise DataError(f"record missing field {name!r}") from exc


@dataclass(frozen=True, eq=False)
class RiskMatrix:
    company_ids: tuple[str, ...]
    category_ids: tuple[str, ...]  # tertiary ids, or group labels at coarser levels
    entries: np.ndarray  # (n, k) binary
    level: str


def build_risk_matrix(
    records: Iterable[Any],
    taxonomy: Taxonomy,
    level: str = "tertiary",
    company_of: Any = None,
) -> RiskMatrix:
    """Binary matrix: company row x category column, 1 = tagged.

    Columns cover only categories assigned at least once in the sample
    (never-assigned ones are all-zero and carry no signal). At primary or
    secondary level a cell is 1 when any descendant tertiary is tagged.
    Rows are sorted by company id and columns follow taxonomy file order,
    so the matrix is a pure function of the record set.
    """
    if level not in LEVELS:
        raise DataError(f"level must be one of {LEVELS}, got {level!r}")
    key_of = company_of or (lambda doc_id: doc_id)

    # column key per tertiary id, in taxonomy file order
    column_key: dict[str, str] = {}
    column_order: list[str] = []
    seen: set[str] = set()
    for cat in taxonomy:
        if level == "tertiary":
            key = cat.id
        elif level == "secondary":
            key = f"{cat.primary_label} > {cat.secondary_label}"
        else:
            key = cat.primary_label
        column_key[cat.id] = key
        if key not in seen:
            seen.add(key)
            column_order.append(key)

    tagged: dict[str, set[str]] = {}
    used_keys: set[str] = set()
    for record in records:
        cid = _field(record, "category_id")
        if cid not in column_key:
            raise DataError(f"record references unknown category {cid!r}")
        company = key_of(_field(record, "document_id"))
        key = column_key[cid]
        tagged.setdefault(company, set()).add(key)
        used_keys.add(key)

    companies = tuple(sorted(tagged))
    columns = tuple(k for k in column_order if k in used_keys)
    col_index = {k: j for j, k in enumerate(columns)}
    entries = np.zeros((len(companies), len(columns)), dtype=np.int64)
    for i, company in enumerate(companies):
        for key in tagged[company]:
            entries[i, col_index[key]] = 1
    return RiskMatrix(
        company_ids=companies, category_ids=columns, entries=entries, level=level
    )


def idf_weights(matrix: RiskMatrix) -> np.ndarray:
    """Inverse-prevalence weight per column: ln(n / (count + 1)).

    The +1 keeps never-assigned columns finite; a category tagged by
    every company gets a slightly negative weight, which is the formula's
    honest output and is not clamped.
    """
    n = len(matrix.company_ids)
    if n < 1:
        raise DataError("weights need at least one company row")
    counts = matrix.entries.sum(axis=0)
    return np.log(n / (counts + 1.0))


def weighted_rows(matrix: RiskMatrix, weights: np.ndarray) -> np.ndarray:
    if weights.shape != (matrix.entries.shape[1],):
        raise DataError(
            f"weight vector length {weights.shape} does not match "
            f"{matrix.entries.shape[1]} columns"
        )
    return matrix.entries * weights


def weighted_cosine(matrix: RiskMatrix, weights: np.ndarray, i: int, j: int) -> float:
    """Cosine similarity of two companies' weighted risk rows."""
    rows = weighted_rows(matrix, weights)
    ni = float(np.linalg.norm(rows[i]))
    nj = float(np.linalg.norm(rows[j]))
    if ni == 0.0 or nj == 0.0:
        zero = matrix.company_ids[i if ni == 0.0 else j]
        raise DataError(f"company {zero} has a zero weighted risk row")
    return float(np.dot(rows[i], rows[j]) / (ni * nj))


@dataclass(frozen=True)
class PairPartition:
    same_industry: tuple[float, ...]
    diff_industry: tuple[float, ...]
    sic_digits: int
    excluded_no_sic: tuple[str, ...]
    excluded_zero_row: tuple[str, ...]


def partition_pairs(
    matrix: RiskMatrix,
    weights: np.ndarray,
    sic: Mapping[str, str],
    digits: int,
) -> PairPartition:
    """Split all comparable company pairs by SIC prefix equality.

    Companies without a SIC code or with a zero weighted row cannot be
    compared; they are excluded and named in the result rather than
    silently dropped, so pair counts stay auditable.
    """
    if digits not in (2, 3, 4):
        raise DataError(f"sic prefix length must be 2, 3, or 4, got {digits}")
    for company, code in sic.items():
        if not (isinstance(code, str) and len(code) == 4 and code.isdigit()):
            raise DataError(f"company {company} has malformed SIC code {code!r}")

    rows = weighted_rows(matrix, weights)
    norms = np.linalg.norm(rows, axis=1)
    no_sic = []
    zero_row = []
    included = []
    for i, company in enumerate(matrix.company_ids):
        if company not in sic:
            no_sic.append(company)
        elif norms[i] == 0.0:
            zero_row.append(company)
        else:
            included.append(i)

    same: list[float] = []
    diff: list[float] = []
    if included:
        idx = np.asarray(included)
        sub = rows[idx] / norms[idx][:, None]
        sims = sub @ sub.T
        prefixes = [sic[matrix.company_ids[i]][:digits] for i in included]
        for a in range(len(included)):
            for b in range(a + 1, len(included)):
                value = float(sims[a, b])
                (same if prefixes[a] == prefixes[b] else diff).append(value)
    return PairPartition(
        same_industry=tuple(same),
        diff_industry=tuple(diff),
        sic_digits=digits,
        excluded_no_sic=tuple(no_sic),
        excluded_zero_row=tuple(zero_row),
    )


@dataclass(frozen=True)
class StatReport:
    mean_same: float
    mean_diff: float
    welch_t: float
    welch_p: float
    ks_d: float
    ks_p: float
    perm_p: float
    cohens_d: float
    n_same: int
    n_diff: int
    n_excluded_no_sic: int
    n_excluded_zero_row: int


def compare_partition(
    partition: PairPartition,
    iterations: int = 10000,
    seed: int = 0,
) -> tuple[StatReport, RocResult]:
    """All four tests plus ROC on one same/diff pair partition."""
    same = list(partition.same_industry)
    diff = list(partition.diff_industry)
    if not same:
        raise DataError("no same-industry pairs at this granularity")
    if not diff:
        raise DataError("no cross-industry pairs at this granularity")
    t, t_p = welch_t(same, diff)
    d_stat, ks_p = ks_statistic(same, diff)
    perm_p = permutation_test(same, diff, iterations=iterations, seed=seed)
    effect = cohens_d(same, diff)
    scores = same + diff
    labels = [1] * len(same) + [0] * len(diff)
    roc = roc_auc(scores, labels)
    report = StatReport(
        mean_same=float(np.mean(same)),
        mean_diff=float(np.mean(diff)),
        welch_t=t,
        welch_p=t_p,
        ks_d=d_stat,
        ks_p=ks_p,
        perm_p=perm_p,
        cohens_d=effect,
        n_same=len(same),
        n_diff=len(diff),
        n_excluded_no_sic=len(partition.excluded_no_sic),
        n_excluded_zero_row=len(partition.excluded_zero_row),
    )
    return report, roc


def clustering_report(
    records: Iterable[Any],
    taxonomy: Taxonomy,
    sic: Mapping[str, str],
    level: str = "tertiary",
    digits: int = 2,
    iterations: int = 10000,
    seed: int = 0,
    company_of: Any = None,
) -> tuple[StatReport, RocResult]:
    """End-to-end: records -> matrix -> weights -> pairs -> tests + ROC."""
    matrix = build_risk_matrix(records, taxonomy, level, company_of=company_of)
    weights = idf_weights(matrix)
    partition = partition_pairs(matrix, weights, sic, digits)
    return compare_partition(partition, iterations=iterations, seed=seed)


def clustering_row(
    level: str, digits: int, report: StatReport, roc: RocResult
) -> list[str]:
    """One summary row: level, digits, mean same, mean diff, delta, AUC."""
    return [
        level,
        str(digits),
        f"{report.mean_same:.4f}",
        f"{report.mean_diff:.4f}",
        f"{report.mean_same - report.mean_diff:.4f}",
        f"{roc.auc:.4f}",
    ]


@dataclass(frozen=True)
class EnrichmentRow:
    category: str
    in_group_pct: float
    overall_pct: float


def sector_enrichment(
    records: Iterable[Any],
    taxonomy: Taxonomy,
    sic: Mapping[str, str],
    prefix: str,
    level: str = "tertiary",
    company_of: Any = None,
) -> list[EnrichmentRow]:
    """Per-category prevalence inside one SIC prefix group vs overall.

    Prevalence is the share of companies tagged with the category. Output
    is sorted by overall prevalence descending (stable, so ties keep
    taxonomy order).
    """
    if not prefix or not prefix.isdigit():
        raise DataError(f"sic prefix must be digits, got {prefix!r}")
    matrix = build_risk_matrix(records, taxonomy, level, company_of=company_of)
    in_group = [
        i
        for i, company in enumerate(matrix.company_ids)
        if company in sic and sic[company].startswith(prefix)
    ]
    if not in_group:
        known = sorted({code[: len(prefix)] for code in sic.values()})
        raise DataError(
            f"no companies match SIC prefix {prefix!r}; known prefixes: "
            + ", ".join(known)
        )
    n_total = len(matrix.company_ids)
    group = matrix.entries[np.asarray(in_group)]
    col = {key: j for j, key in enumerate(matrix.category_ids)}

    # enumerate every category at this level, so never-tagged ones show 0%
    all_keys: list[str] = []
    seen: set[str] = set()
    for cat in taxonomy:
        if level == "tertiary":
            key = cat.id
        elif level == "secondary":
            key = f"{cat.primary_label} > {cat.secondary_label}"
        else:
            key = cat.primary_label
        if key not in seen:
            seen.add(key)
            all_keys.append(key)

    rows = []
    for key in all_keys:
        j = col.get(key)
        if j is None:
            rows.append(EnrichmentRow(category=key, in_group_pct=0.0, overall_pct=0.0))
        else:
            rows.append(
                EnrichmentRow(
                    category=key,
                    in_group_pct=100.0 * float(group[:, j].sum()) / len(in_group),
                    overall_pct=100.0 * float(matrix.entries[:, j].sum()) / n_total,
                )
            )
    rows.sort(key=lambda r: -r.overall_pct)
    return rows


@dataclass(frozen=True)
class SimilarityHistogram:
    bin_edges: tuple[float, ...]
    same_counts: tuple[int, ...]
    diff_counts: tuple[int, ...]


def similarity_histogram(partition: PairPartition, bins: int = 50) -> SimilarityHistogram:
    """Shared-bin histogram of same vs diff pair similarities over [0, 1]."""
    if bins < 1:
        raise DataError("histogram needs at least one bin")
    same_counts, edges = np.histogram(
        partition.same_industry, bins=bins, range=(0.0, 1.0)
    )
    diff_counts, _ = np.histogram(partition.diff_industry, bins=bins, range=(0.0, 1.0))
    return SimilarityHistogram(
        bin_edges=tuple(float(e) for e in edges),
        same_counts=tuple(int(c) for c in same_counts),
        diff_counts=tuple(int(c) for c in diff_counts),
    )
