"""Shared fixtures: the bundled taxonomy plus small synthetic ones."""

from __future__ import annotations

import pytest

from riskpipe.providers import HashingEmbedder
from riskpipe.taxonomy import Taxonomy, categories_from_rows, load_taxonomy

SAMPLE_ROWS = [
    ("Financial", "Market", "Interest rate exposure",
     "Risks from changes in interest rates affecting borrowing costs, "
     "investment returns, or the fair value of financial instruments."),
    ("Financial", "Credit", "Counterparty default",
     "Risk that customers, borrowers, or trading partners fail to meet "
     "contractual payment obligations."),
    ("Operational", "Supply chain", "Supplier concentration",
     "Dependence on a small number of suppliers for critical inputs, "
     "creating exposure to disruption or pricing pressure."),
    ("Operational", "Technology", "Cybersecurity breach",
     "Unauthorized access to systems or data, including hacking, malware, "
     "and insider threats compromising operations."),
    ("Legal", "Compliance", "Regulatory approval delay",
     "Risk that required government or agency approvals for products are "
     "delayed or denied, affecting revenue timing."),
]


@pytest.fixture(scope="session")
def sample_taxonomy() -> Taxonomy:
    import riskpipe

    path = __import__("pathlib").Path(riskpipe.__file__).parent / "data" / "sample_taxonomy.tsv"
    return load_taxonomy(path)


@pytest.fixture()
def small_taxonomy() -> Taxonomy:
    return categories_from_rows(SAMPLE_ROWS)


@pytest.fixture()
def embedder() -> HashingEmbedder:
    return HashingEmbedder(dim=64)
