"""Seeded synthetic corpus for exercising the clustering analytics.

Real filings are out of scope for tests, so this builds a corpus with
known industry structure: each industry draws from its own pool of
tertiary categories, plus a shared pool of generic risks every company
might tag. Pools are striped across primary branches, so industry
signal is strong at tertiary granularity but washes out when collapsed
to primary level; analytics should recover exactly that gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DataError
from .taxonomy import Taxonomy


@dataclass(frozen=True)
class SyntheticCorpus:
    records: tuple[dict[str, Any], ...]  # document_id + category_id per tag
    sic: dict[str, str]
    industry_of: dict[str, str]
    pools: dict[str, tuple[str, ...]]  # industry -> its category pool
    shared: tuple[str, ...]


def _striped_category_ids(taxonomy: Taxonomy) -> list[str]:
    """Interleave categories across primary branches.

    Taking one category from each primary in turn means any contiguous
    slice spans many primaries; an industry pool built from a slice is
    then distinctive at tertiary level but generic at primary level.
    """
    by_primary: dict[str, list[str]] = {}
    primary_order: list[str] = []
    for cat in taxonomy:
        if cat.primary_label not in by_primary:
            primary_order.append(cat.primary_label)
        by_primary.setdefault(cat.primary_label, []).append(cat.id)
    striped: list[str] = []
    depth = max(len(v) for v in by_primary.values())
    for rank in range(depth):
        for primary in primary_order:
            ids = by_primary[primary]
            if rank < len(ids):
                striped.append(ids[rank])
    return striped


def generate_clustered(
    taxonomy: Taxonomy,
    n_companies: int = 100,
    n_industries: int = 5,
    pool_size: int = 15,
    pool_p: float = 0.6,
    n_shared: int = 10,
    shared_p: float = 0.5,
    seed: int = 0,
) -> SyntheticCorpus:
    """Draw a company-by-category tag set with industry structure.

    Companies are split evenly over industries; each tags categories
    from its industry pool with probability pool_p and shared generic
    categories with probability shared_p. Pools are mutually disjoint.
    Fixed seed means a fixed corpus, record order included.
    """
    needed = n_shared + n_industries * pool_size
    if needed > len(taxonomy):
        raise DataError(
            f"need {needed} distinct categories but taxonomy has {len(taxonomy)}"
        )
    if n_companies < n_industries:
        raise DataError("need at least one company per industry")

    striped = _striped_category_ids(taxonomy)
    shared = tuple(striped[:n_shared])
    industries = [f"ind{k}" for k in range(n_industries)]
    pools: dict[str, tuple[str, ...]] = {}
    for k, industry in enumerate(industries):
        start = n_shared + k * pool_size
        pools[industry] = tuple(striped[start : start + pool_size])

    # distinct leading-2-digit SIC block per industry, constant within it
    sic_bases = ["20", "35", "48", "60", "73", "28", "53", "81"]
    if n_industries > len(sic_bases):
        raise DataError(f"generator supports at most {len(sic_bases)} industries")

    rng = np.random.default_rng(seed)
    records: list[dict[str, Any]] = []
    sic: dict[str, str] = {}
    industry_of: dict[str, str] = {}
    for i in range(n_companies):
        company = f"c{i:03d}"
        industry = industries[i % n_industries]
        industry_of[company] = industry
        sic[company] = sic_bases[industries.index(industry)] + "00"
        for cid in pools[industry]:
            if rng.random() < pool_p:
                records.append({"document_id": company, "category_id": cid})
        for cid in shared:
            if rng.random() < shared_p:
                records.append({"document_id": company, "category_id": cid})
    return SyntheticCorpus(
        records=tuple(records),
        sic=sic,
        industry_of=industry_of,
        pools=pools,
        shared=shared,
    )
