"""Document ingestion and small tabular inputs.

The ingestion boundary is plain text: a directory of <ticker>_<year>.txt
files, or a generic HTTP text fetcher for deployments that serve
pre-parsed sections. Nothing here knows about filings beyond the naming
convention.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterator, Protocol, Sequence

import requests

from .errors import DataError, TransportError


class DocumentSource(Protocol):
    def __iter__(self) -> Iterator[tuple[str, str]]:
        """Yield (document_id, text) pairs in a deterministic order."""
        ...


class DirectorySource:
    """All *.txt files in a directory; document_id is the file stem."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.is_dir():
            raise DataError(f"document directory not found: {self.path}")

    def __iter__(self) -> Iterator[tuple[str, str]]:
        for p in sorted(self.path.glob("*.txt")):
            yield p.stem, p.read_text(encoding="utf-8")


class HttpTextSource:
    """Fetch documents by URL: GET returning the plain text body."""

    def __init__(
        self,
        urls: Sequence[tuple[str, str]],
        timeout_seconds: float = 60.0,
        session: requests.Session | None = None,
    ):
        self._urls = list(urls)
        self._timeout = timeout_seconds
        self._session = session or requests.Session()

    def __iter__(self) -> Iterator[tuple[str, str]]:
        for document_id, url in self._urls:
            try:
                resp = self._session.get(url, timeout=self._timeout)
            except requests.RequestException as exc:
                raise TransportError(f"fetching {document_id} from {url}: {exc}") from exc
            if resp.status_code != 200:
                raise TransportError(
                    f"fetching {document_id} from {url}: HTTP {resp.status_code}"
                )
            yield document_id, resp.text


def load_sic_map(path: str | Path) -> dict[str, str]:
    """Read the ticker-to-SIC table: CSV with header ticker,sic4."""
    p = Path(path)
    out: dict[str, str] = {}
    with open(p, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["ticker", "sic4"]:
            raise DataError(f"{p}: expected CSV header ticker,sic4")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"{p}:{lineno}: need ticker and sic4 columns")
            ticker, code = row[0].strip(), row[1].strip()
            if not ticker:
                raise DataError(f"{p}:{lineno}: empty ticker")
            if len(code) != 4 or not code.isdigit():
                raise DataError(f"{p}:{lineno}: SIC code must be 4 digits, got {code!r}")
            if ticker in out:
                raise DataError(f"{p}:{lineno}: duplicate ticker {ticker}")
            out[ticker] = code
    if not out:
        raise DataError(f"{p}: no SIC rows")
    return out
