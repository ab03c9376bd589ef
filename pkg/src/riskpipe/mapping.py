"""Stage 2: nearest-category assignment by embedding similarity.

Category descriptions are embedded once into an index; each supporting
quote is embedded with the same task instruction and assigned to the
category with the highest dot product (cosine, since all vectors are
unit-norm). Every risk gets exactly one category here: weeding out poor
fits is the judge stage's job, and no similarity threshold is applied.

Index file layout (little-endian throughout):

    bytes 0..7    magic b"RPIDX01\\n"
    u32           header length H
    H bytes       UTF-8 JSON {"dim", "fingerprint", "instruction", "n"},
                  compact separators, sorted keys
    n*dim*4 bytes float32 row-major matrix, rows in taxonomy file order
    u32           ids length L
    L bytes       UTF-8 JSON array of category ids, aligned with rows

Matrices are quantized to float32 at build time so the in-memory index,
the persisted file, and a reload are all exactly equal.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FingerprintMismatchError, TaxonomyError
from .extraction import ExtractedRisk
from .providers.base import EmbeddingProvider
from .taxonomy import Taxonomy, validate_taxonomy

DEFAULT_TASK_INSTRUCTION = (
    "Classify risk factor text from an annual report into the most "
    "appropriate taxonomy category."
)

_MAGIC = b"RPIDX01\n"
_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class TaxonomyEmbeddingIndex:
    category_ids: tuple[str, ...]
    matrix: np.ndarray  # (n, dim) float64, float32-representable values
    instruction: str
    embedder_fingerprint: str

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise DataError(f"index matrix must be 2-D, got {self.matrix.ndim}-D")
        n, _ = self.matrix.shape
        if n != len(self.category_ids):
            raise DataError(
                f"index row count {n} != category id count {len(self.category_ids)}"
            )
        norms = np.linalg.norm(self.matrix, axis=1)
        if n and np.any(np.abs(norms - 1.0) > _NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise DataError(
                f"index row {worst} ({self.category_ids[worst]}) is not unit-norm"
            )

    def __len__(self) -> int:
        return len(self.category_ids)

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1])

    def equals(self, other: "TaxonomyEmbeddingIndex") -> bool:
        return (
            self.category_ids == other.category_ids
            and self.instruction == other.instruction
            and self.embedder_fingerprint == other.embedder_fingerprint
            and self.matrix.shape == other.matrix.shape
            and np.array_equal(self.matrix, other.matrix)
        )


@dataclass(frozen=True)
class MappedRisk:
    risk: ExtractedRisk
    category_id: str
    similarity: float

    def as_record(self, document_id: str) -> dict:
        return {
            "tag": self.risk.tag,
            "quote": self.risk.quote,
            "quote_verified": self.risk.quote_verified,
            "category_id": self.category_id,
            "similarity": self.similarity,
            "document_id": document_id,
        }


def _quantize(matrix: np.ndarray) -> np.ndarray:
    # float32 round-trip: persisted bytes reproduce this array exactly
    return matrix.astype(np.float32).astype(np.float64)


def build_index(
    taxonomy: Taxonomy,
    embedder: EmbeddingProvider,
    instruction: str = DEFAULT_TASK_INSTRUCTION,
) -> TaxonomyEmbeddingIndex:
    """Embed every category description, rows in taxonomy file order."""
    if not instruction or not instruction.strip():
        raise DataError("embedding instruction must be non-empty")
    violations = validate_taxonomy(taxonomy)
    if violations:
        summary = "; ".join(v.message for v in violations[:3])
        raise TaxonomyError(
            f"taxonomy has {len(violations)} violation(s), first: {summary}"
        )
    descriptions = [c.description for c in taxonomy]
    matrix = embedder.embed_batch(descriptions, instruction)
    return TaxonomyEmbeddingIndex(
        category_ids=tuple(c.id for c in taxonomy),
        matrix=_quantize(matrix),
        instruction=instruction,
        embedder_fingerprint=embedder.fingerprint,
    )


def _risk_text(risk: ExtractedRisk, embed_tag: bool) -> str:
    # the quote is the matching signal; prepending the tag is experimental
    return f"{risk.tag}: {risk.quote}" if embed_tag else risk.quote


def match_risks(
    risks: list[ExtractedRisk],
    index: TaxonomyEmbeddingIndex,
    embedder: EmbeddingProvider,
    embed_tag_with_quote: bool = False,
) -> list[MappedRisk]:
    """Assign each risk to its argmax category.

    Batched matrix product; ties broken by lowest row index, which makes
    the assignment deterministic and invariant to run order. Exactly one
    output per input, always: low-similarity matches are flagged
    downstream, never dropped here.
    """
    if len(index) == 0:
        raise DataError("empty index: embed the taxonomy first")
    if embedder.fingerprint != index.embedder_fingerprint:
        raise FingerprintMismatchError(
            f"index built with {index.embedder_fingerprint!r} but embedder is "
            f"{embedder.fingerprint!r}; rebuild the index or switch embedders"
        )
    if not risks:
        return []
    texts = [_risk_text(r, embed_tag_with_quote) for r in risks]
    queries = embedder.embed_batch(texts, index.instruction)
    sims = queries @ index.matrix.T
    winners = np.argmax(sims, axis=1)
    return [
        MappedRisk(
            risk=risk,
            category_id=index.category_ids[int(w)],
            similarity=float(sims[i, int(w)]),
        )
        for i, (risk, w) in enumerate(zip(risks, winners))
    ]


def brute_force_match(
    risks: list[ExtractedRisk],
    index: TaxonomyEmbeddingIndex,
    embedder: EmbeddingProvider,
    embed_tag_with_quote: bool = False,
) -> list[MappedRisk]:
    """Per-item, per-category reference implementation (test oracle)."""
    if len(index) == 0:
        raise DataError("empty index: embed the taxonomy first")
    if embedder.fingerprint != index.embedder_fingerprint:
        raise FingerprintMismatchError("embedder does not match index fingerprint")
    out: list[MappedRisk] = []
    for risk in risks:
        text = _risk_text(risk, embed_tag_with_quote)
        q = embedder.embed_batch([text], index.instruction)[0]
        best_i = 0
        best_s = float(np.dot(q, index.matrix[0]))
        for j in range(1, len(index)):
            s = float(np.dot(q, index.matrix[j]))
            if s > best_s:
                best_i, best_s = j, s
        out.append(
            MappedRisk(risk=risk, category_id=index.category_ids[best_i], similarity=best_s)
        )
    return out


def save_index(index: TaxonomyEmbeddingIndex, path: str | Path) -> None:
    header = {
        "dim": index.dim,
        "fingerprint": index.embedder_fingerprint,
        "instruction": index.instruction,
        "n": len(index),
    }
    header_bytes = json.dumps(header, separators=(",", ":"), sort_keys=True).encode("utf-8")
    ids_bytes = json.dumps(list(index.category_ids), separators=(",", ":")).encode("utf-8")
    body = index.matrix.astype("<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(body)
        fh.write(struct.pack("<I", len(ids_bytes)))
        fh.write(ids_bytes)


def load_index(path: str | Path) -> TaxonomyEmbeddingIndex:
    raw = Path(path).read_bytes()
    if len(raw) < len(_MAGIC) + 4 or not raw.startswith(_MAGIC):
        raise DataError(f"{path}: not an embedding index (bad magic)")
    pos = len(_MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    try:
        header = json.loads(raw[pos : pos + header_len].decode("utf-8"))
        n, dim = int(header["n"]), int(header["dim"])
        fingerprint = str(header["fingerprint"])
        instruction = str(header["instruction"])
    except (KeyError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt index header: {exc}") from exc
    pos += header_len
    body = n * dim * 4
    if len(raw) < pos + body + 4:
        raise DataError(f"{path}: truncated index body")
    matrix = (
        np.frombuffer(raw, dtype="<f4", count=n * dim, offset=pos)
        .reshape(n, dim)
        .astype(np.float64)
    )
    pos += body
    (ids_len,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    try:
        ids = json.loads(raw[pos : pos + ids_len].decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt id list: {exc}") from exc
    if not isinstance(ids, list) or len(ids) != n:
        raise DataError(f"{path}: id list length does not match row count {n}")
    return TaxonomyEmbeddingIndex(
        category_ids=tuple(str(i) for i in ids),
        matrix=matrix,
        instruction=instruction,
        embedder_fingerprint=fingerprint,
    )
