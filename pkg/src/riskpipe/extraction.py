"""Stage 1: pull free-form risks with verbatim supporting quotes.

The extractor sees only the document and a schema hint. No category list
is supplied at this stage; classification happens later against embedded
category descriptions, which keeps extraction recall-oriented.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any

from .errors import DataError
from .providers.base import ExtractionProvider
from .templates import template_text

_WS = re.compile(r"\s+")


def normalize_whitespace(text: str) -> str:
    """Collapse every whitespace run to one space and trim the ends."""
    return _WS.sub(" ", text).strip()


@dataclass(frozen=True)
class ExtractedRisk:
    tag: str
    quote: str
    quote_verified: bool

    def as_record(self, document_id: str) -> dict[str, Any]:
        return {
            "tag": self.tag,
            "quote": self.quote,
            "quote_verified": self.quote_verified,
            "document_id": document_id,
        }


def verify_quote(quote: str, document: str) -> bool:
    """Quote check: normalized quote must appear in the normalized source.

    Case-sensitive; filings have irregular line breaks, so only whitespace
    is forgiven. Failures are flagged, not fatal: light paraphrase is
    common and the judge stage penalizes genuinely bad evidence.
    """
    needle = normalize_whitespace(quote)
    if not needle:
        return False
    return needle in normalize_whitespace(document)


def default_schema_hint() -> str:
    return template_text("extraction_system.txt")


def extract_risks(
    document: str,
    provider: ExtractionProvider,
    schema_hint: str | None = None,
) -> list[ExtractedRisk]:
    """Run one extraction call and verify each quote against the source.

    Returns one risk per payload entry, order preserved, no cap, no
    silent drops. Unverifiable quotes are kept with quote_verified=False.
    """
    if not document or not document.strip():
        raise DataError("empty document: nothing to extract")
    hint = schema_hint if schema_hint is not None else default_schema_hint()
    payload = provider.extract_structured(document, hint)
    return [
        ExtractedRisk(
            tag=item["tag"],
            quote=item["quote"],
            quote_verified=verify_quote(item["quote"], document),
        )
        for item in payload["risks"]
    ]
