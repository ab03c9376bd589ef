"""Three-tier risk taxonomy: loading, validation, serialization.

The taxonomy is a flat list of tertiary categories, each carrying its
primary/secondary ancestry and a natural-language description. Tertiary
labels are the unit of classification and must be unique; primary and
secondary labels may repeat across branches. File order is significant:
it defines embedding-index row order.

Canonical file format (UTF-8 TSV):

    # version: <tag>            optional comment prologue
    primary\tsecondary\ttertiary\tdescription
    <one category per line; no tabs or newlines inside fields>
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import TaxonomyError

HEADER_FIELDS = ("primary", "secondary", "tertiary", "description")
DEFAULT_VERSION = "unversioned"

_NON_SLUG = re.compile(r"[^a-z0-9\s-]+")
_SLUG_SEP = re.compile(r"[\s-]+")
_VERSION_COMMENT = re.compile(r"^#\s*version\s*:\s*(.+)$")


def slugify(label: str) -> str:
    """Stable category id: lowercase, punctuation stripped, spaces to hyphens."""
    cleaned = _NON_SLUG.sub("", label.lower())
    return _SLUG_SEP.sub("-", cleaned.strip())


@dataclass(frozen=True)
class TaxonomyCategory:
    """One tertiary leaf with its ancestry and description."""

    id: str
    primary_label: str
    secondary_label: str
    tertiary_label: str
    description: str

    @classmethod
    def from_labels(
        cls, primary: str, secondary: str, tertiary: str, description: str
    ) -> "TaxonomyCategory":
        return cls(
            id=slugify(tertiary),
            primary_label=primary,
            secondary_label=secondary,
            tertiary_label=tertiary,
            description=description,
        )

    @property
    def path(self) -> str:
        """Human-readable full path, used in judge prompts and reports."""
        return f"{self.primary_label} > {self.secondary_label} > {self.tertiary_label}"


@dataclass(frozen=True)
class Taxonomy:
    """Ordered, immutable collection of categories plus a version tag.

    Immutability makes the taxonomy safe to share read-only across
    concurrent pipeline workers.
    """

    categories: tuple[TaxonomyCategory, ...]
    version: str = DEFAULT_VERSION

    def __len__(self) -> int:
        return len(self.categories)

    def __iter__(self) -> Iterator[TaxonomyCategory]:
        return iter(self.categories)

    @property
    def category_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.categories)

    def get(self, category_id: str) -> TaxonomyCategory:
        for c in self.categories:
            if c.id == category_id:
                return c
        raise KeyError(category_id)

    @property
    def primary_labels(self) -> tuple[str, ...]:
        """Distinct primary labels in file order."""
        seen: dict[str, None] = {}
        for c in self.categories:
            seen.setdefault(c.primary_label, None)
        return tuple(seen)

    @property
    def secondary_paths(self) -> tuple[tuple[str, str], ...]:
        """Distinct (primary, secondary) pairs in file order."""
        seen: dict[tuple[str, str], None] = {}
        for c in self.categories:
            seen.setdefault((c.primary_label, c.secondary_label), None)
        return tuple(seen)


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by validate_taxonomy."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.message}"


def loads_taxonomy(text: str, version: str | None = None) -> Taxonomy:
    """Parse taxonomy TSV text, enforcing all invariants.

    Raises TaxonomyError on the first structural problem, naming the
    offending line/category. An explicit `version` overrides any
    `# version:` prologue comment.
    """
    lines = text.splitlines()
    file_version = DEFAULT_VERSION
    idx = 0
    while idx < len(lines) and lines[idx].startswith("#"):
        m = _VERSION_COMMENT.match(lines[idx].strip())
        if m:
            file_version = m.group(1).strip()
        idx += 1
    if idx >= len(lines):
        raise TaxonomyError("taxonomy file is empty (no header row)")
    header = tuple(lines[idx].rstrip("\r\n").split("\t"))
    if header != HEADER_FIELDS:
        raise TaxonomyError(
            f"bad header row: expected {HEADER_FIELDS!r}, got {header!r}"
        )

    categories: list[TaxonomyCategory] = []
    tertiary_seen: dict[str, int] = {}
    id_seen: dict[str, str] = {}
    for lineno, raw in enumerate(lines[idx + 1 :], start=idx + 2):
        if not raw.strip():
            continue
        fields = raw.split("\t")
        if len(fields) != 4:
            raise TaxonomyError(
                f"line {lineno}: expected 4 tab-separated fields, got {len(fields)}"
            )
        primary, secondary, tertiary, description = (f.strip() for f in fields)
        if not primary or not secondary or not tertiary:
            raise TaxonomyError(f"line {lineno}: blank label field")
        if not description:
            raise TaxonomyError(
                f"line {lineno}: empty description for category {tertiary!r}"
            )
        if tertiary in tertiary_seen:
            raise TaxonomyError(
                f"duplicate tertiary label {tertiary!r} "
                f"(lines {tertiary_seen[tertiary]} and {lineno})"
            )
        cat = TaxonomyCategory.from_labels(primary, secondary, tertiary, description)
        if cat.id in id_seen:
            raise TaxonomyError(
                f"id collision {cat.id!r}: tertiary labels "
                f"{id_seen[cat.id]!r} and {tertiary!r} slug to the same id"
            )
        tertiary_seen[tertiary] = lineno
        id_seen[cat.id] = tertiary
        categories.append(cat)

    if not categories:
        raise TaxonomyError("taxonomy contains no categories")
    return Taxonomy(categories=tuple(categories), version=version or file_version)


def load_taxonomy(path: str | Path, version: str | None = None) -> Taxonomy:
    """Load and validate a taxonomy TSV file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TaxonomyError(f"cannot read taxonomy file {path}: {exc}") from exc
    return loads_taxonomy(text, version=version)


def serialize_taxonomy(taxonomy: Taxonomy) -> str:
    """Render a taxonomy back to canonical TSV (round-trips through loads)."""
    out = []
    if taxonomy.version != DEFAULT_VERSION:
        out.append(f"# version: {taxonomy.version}")
    out.append("\t".join(HEADER_FIELDS))
    for c in taxonomy.categories:
        out.append(
            "\t".join(
                (c.primary_label, c.secondary_label, c.tertiary_label, c.description)
            )
        )
    return "\n".join(out) + "\n"


def save_taxonomy(taxonomy: Taxonomy, path: str | Path) -> None:
    Path(path).write_text(serialize_taxonomy(taxonomy), encoding="utf-8")


def validate_taxonomy(taxonomy: Taxonomy) -> list[Violation]:
    """Report every invariant violation; empty list means valid.

    Empty exactly when load_taxonomy would accept the serialized form:
    besides content checks this also flags ids that differ from the
    canonical tertiary-label slug, since reloading would rewrite them.
    """
    violations: list[Violation] = []
    if len(taxonomy) == 0:
        violations.append(Violation("empty-taxonomy", "taxonomy has no categories"))

    tertiary_first: dict[str, TaxonomyCategory] = {}
    id_first: dict[str, TaxonomyCategory] = {}
    for c in taxonomy.categories:
        for label_name, value in (
            ("primary", c.primary_label),
            ("secondary", c.secondary_label),
            ("tertiary", c.tertiary_label),
        ):
            if not value.strip():
                violations.append(
                    Violation("empty-label", f"category {c.id!r}: blank {label_name} label")
                )
            elif "\t" in value or "\n" in value:
                violations.append(
                    Violation(
                        "unserializable-field",
                        f"category {c.id!r}: {label_name} label contains tab/newline",
                    )
                )
        if not c.description.strip():
            violations.append(
                Violation(
                    "empty-description",
                    f"category {c.tertiary_label!r} has an empty description",
                )
            )
        elif "\t" in c.description or "\n" in c.description:
            violations.append(
                Violation(
                    "unserializable-field",
                    f"category {c.id!r}: description contains tab/newline",
                )
            )
        if c.description != c.description.strip():
            violations.append(
                Violation(
                    "untrimmed-field",
                    f"category {c.id!r}: description has surrounding whitespace",
                )
            )

        if c.tertiary_label in tertiary_first:
            other = tertiary_first[c.tertiary_label]
            violations.append(
                Violation(
                    "duplicate-tertiary",
                    f"tertiary label {c.tertiary_label!r} appears under both "
                    f"{other.path!r} and {c.path!r}",
                )
            )
        else:
            tertiary_first[c.tertiary_label] = c

        expected_id = slugify(c.tertiary_label)
        if c.id != expected_id:
            violations.append(
                Violation(
                    "nonstandard-id",
                    f"category {c.tertiary_label!r} has id {c.id!r}, "
                    f"expected slug {expected_id!r}",
                )
            )
        if c.id in id_first and id_first[c.id].tertiary_label != c.tertiary_label:
            violations.append(
                Violation(
                    "duplicate-id",
                    f"id {c.id!r} shared by {id_first[c.id].tertiary_label!r} "
                    f"and {c.tertiary_label!r}",
                )
            )
        else:
            id_first.setdefault(c.id, c)
    return violations


def categories_from_rows(rows: Iterable[tuple[str, str, str, str]]) -> Taxonomy:
    """Build a taxonomy from (primary, secondary, tertiary, description) rows.

    Convenience for tests and programmatic construction; does not validate.
    """
    return Taxonomy(
        categories=tuple(TaxonomyCategory.from_labels(*row) for row in rows)
    )
