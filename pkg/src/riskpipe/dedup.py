"""Collapse retained mappings to one record per category per document.

Several quotes from one filing often land in the same category; the
final output keeps the single best-evidenced one. Winner selection is
fully deterministic: score, then similarity, then input position.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .judging import JudgedMapping
from .taxonomy import Taxonomy


@dataclass(frozen=True)
class RiskFactorRecord:
    document_id: str
    primary_label: str
    secondary_label: str
    tertiary_label: str
    quote: str
    original_tag: str
    quality_score: int
    similarity: float
    category_id: str

    def as_record(self) -> dict[str, Any]:
        return {
            "document_id": self.document_id,
            "primary_label": self.primary_label,
            "secondary_label": self.secondary_label,
            "tertiary_label": self.tertiary_label,
            "quote": self.quote,
            "original_tag": self.original_tag,
            "quality_score": self.quality_score,
            "similarity": self.similarity,
            "category_id": self.category_id,
        }


def deduplicate(
    retained: list[JudgedMapping],
    taxonomy: Taxonomy,
    document_id: str,
) -> list[RiskFactorRecord]:
    """One record per distinct category; output sorted by taxonomy path.

    Winner per category: highest score, ties by highest similarity, then
    earliest input position. Output size always equals the number of
    distinct categories in the input, so each tertiary label appears at
    most once per document.
    """
    winners: dict[str, tuple[int, JudgedMapping]] = {}
    for pos, judged in enumerate(retained):
        cid = judged.mapped.category_id
        incumbent = winners.get(cid)
        if incumbent is None:
            winners[cid] = (pos, judged)
            continue
        inc_pos, inc = incumbent
        challenger = (judged.score, judged.mapped.similarity, -pos)
        holder = (inc.score, inc.mapped.similarity, -inc_pos)
        if challenger > holder:
            winners[cid] = (pos, judged)

    records = []
    for cid, (_, judged) in winners.items():
        category = taxonomy.get(cid)
        records.append(
            RiskFactorRecord(
                document_id=document_id,
                primary_label=category.primary_label,
                secondary_label=category.secondary_label,
                tertiary_label=category.tertiary_label,
                quote=judged.mapped.risk.quote,
                original_tag=judged.mapped.risk.tag,
                quality_score=judged.score,
                similarity=judged.mapped.similarity,
                category_id=cid,
            )
        )
    records.sort(key=lambda r: (r.primary_label, r.secondary_label, r.tertiary_label))
    return records
