"""Company-level risk matrices, idf-weighted similarity, and clustering stats."""

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from riskpipe.analytics import (
    EnrichmentRow,
    RiskMatrix,
    build_risk_matrix,
    clustering_report,
    clustering_row,
    company_from_document_id,
    compare_partition,
    idf_weights,
    partition_pairs,
    sector_enrichment,
    similarity_histogram,
    weighted_cosine,
    weighted_rows,
)
from riskpipe.errors import DataError
from riskpipe.synthetic import generate_clustered
from riskpipe.taxonomy import categories_from_rows


def rec(doc: str, cid: str) -> dict:
    return {"document_id": doc, "category_id": cid}


@pytest.fixture()
def tax4():
    return categories_from_rows([
        ("P1", "S1", "Cat a", "d"),
        ("P1", "S1", "Cat b", "d"),
        ("P1", "S2", "Cat c", "d"),
        ("P2", "S3", "Cat d", "d"),
    ])


class TestCompanyKey:
    def test_strips_trailing_year(self):
        assert company_from_document_id("AAPL_2022") == "AAPL"

    def test_keeps_other_shapes(self):
        assert company_from_document_id("AAPL") == "AAPL"
        assert company_from_document_id("doc_99") == "doc_99"
        assert company_from_document_id("BRK_B_2019") == "BRK_B"


class TestBuildMatrix:
    def test_binary_presence(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c1", "cat-a"), rec("c2", "cat-b")], tax4
        )
        assert m.entries.tolist() == [[1, 0], [0, 1]]
        assert m.company_ids == ("c1", "c2")
        assert m.category_ids == ("cat-a", "cat-b")

    def test_rows_sorted_columns_in_taxonomy_order(self, tax4):
        m = build_risk_matrix(
            [rec("zeta", "cat-d"), rec("alpha", "cat-b"), rec("alpha", "cat-a")], tax4
        )
        assert m.company_ids == ("alpha", "zeta")
        assert m.category_ids == ("cat-a", "cat-b", "cat-d")

    def test_never_assigned_categories_dropped(self, tax4):
        m = build_risk_matrix([rec("c1", "cat-c")], tax4)
        assert m.category_ids == ("cat-c",)

    def test_footnote_scale_column_count(self, sample_taxonomy):
        """140-category taxonomy, 137 observed: the matrix keeps 137 columns."""
        ids = list(sample_taxonomy.category_ids)
        observed = ids[:137]
        records = [rec(f"c{i % 25:02d}", cid) for i, cid in enumerate(observed * 3)]
        m = build_risk_matrix(records, sample_taxonomy)
        assert len(m.category_ids) == 137
        assert len(sample_taxonomy) == 140

    def test_secondary_level_collapses_to_parent(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c1", "cat-b")], tax4, level="secondary"
        )
        assert m.category_ids == ("P1 > S1",)
        assert m.entries.tolist() == [[1]]

    def test_primary_level(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c1", "cat-d"), rec("c2", "cat-c")],
            tax4, level="primary",
        )
        assert m.category_ids == ("P1", "P2")
        assert m.entries.tolist() == [[1, 1], [1, 0]]

    def test_company_of_mapping(self, tax4):
        m = build_risk_matrix(
            [rec("AAPL_2021", "cat-a"), rec("AAPL_2022", "cat-b")],
            tax4, company_of=company_from_document_id,
        )
        assert m.company_ids == ("AAPL",)
        assert m.entries.tolist() == [[1, 1]]

    def test_unknown_category_rejected(self, tax4):
        with pytest.raises(DataError, match="unknown category"):
            build_risk_matrix([rec("c1", "mystery")], tax4)

    def test_bad_level_rejected(self, tax4):
        with pytest.raises(DataError):
            build_risk_matrix([], tax4, level="quaternary")

    def test_record_objects_accepted(self, tax4):
        class R:
            document_id = "c1"
            category_id = "cat-a"

        m = build_risk_matrix([R()], tax4)
        assert m.entries.tolist() == [[1]]


class TestIdfWeights:
    def make_matrix(self, n_companies: int, col_counts: list[int]) -> RiskMatrix:
        entries = np.zeros((n_companies, len(col_counts)), dtype=np.int64)
        for j, count in enumerate(col_counts):
            entries[:count, j] = 1
        return RiskMatrix(
            company_ids=tuple(f"c{i:03d}" for i in range(n_companies)),
            category_ids=tuple(f"cat{j}" for j in range(len(col_counts))),
            entries=entries,
            level="tertiary",
        )

    def test_reference_values_500_companies(self):
        m = self.make_matrix(500, [250, 2, 0])
        w = idf_weights(m)
        assert w[0] == pytest.approx(math.log(500 / 251), abs=1e-12)
        assert w[1] == pytest.approx(math.log(500 / 3), abs=1e-12)
        assert w[2] == pytest.approx(math.log(500), abs=1e-12)
        assert w[1] == pytest.approx(5.1160, abs=1e-4)
        assert w[2] == pytest.approx(6.2146, abs=1e-4)

    def test_rare_to_common_ratio(self):
        m = self.make_matrix(500, [250, 2])
        w = idf_weights(m)
        assert w[1] / w[0] == pytest.approx(7.42, abs=0.01)

    def test_no_clamping_universal_category_goes_negative(self):
        # tagged by every company: ln(n/(n+1)) < 0 by design
        m = self.make_matrix(100, [100])
        assert idf_weights(m)[0] == pytest.approx(math.log(100 / 101), abs=1e-12)
        assert idf_weights(m)[0] < 0

    def test_monotone_decreasing_in_prevalence(self):
        m = self.make_matrix(50, [1, 5, 20, 49])
        w = idf_weights(m)
        assert all(w[i] > w[i + 1] for i in range(3))


class TestWeightedCosine:
    def test_shared_half_of_two_equal_weight_categories(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c1", "cat-b"),
             rec("c2", "cat-a"), rec("c2", "cat-c")],
            tax4,
        )
        w = np.ones(len(m.category_ids))
        assert weighted_cosine(m, w, 0, 1) == pytest.approx(0.5, abs=1e-12)

    def test_identical_rows_cosine_one(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c2", "cat-a")], tax4
        )
        w = np.ones(1)
        assert weighted_cosine(m, w, 0, 1) == pytest.approx(1.0, abs=1e-12)

    def test_disjoint_rows_cosine_zero(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c2", "cat-b")], tax4
        )
        w = np.ones(2)
        assert weighted_cosine(m, w, 0, 1) == 0.0

    def test_weights_shift_the_answer(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c1", "cat-b"),
             rec("c2", "cat-a"), rec("c2", "cat-c")],
            tax4,
        )
        heavy_shared = weighted_cosine(m, np.array([10.0, 1.0, 1.0]), 0, 1)
        light_shared = weighted_cosine(m, np.array([0.1, 1.0, 1.0]), 0, 1)
        assert heavy_shared > 0.5 > light_shared

    def test_zero_row_names_company(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c2", "cat-b")], tax4
        )
        with pytest.raises(DataError, match="c2"):
            weighted_cosine(m, np.array([1.0, 0.0]), 0, 1)

    def test_matches_manual_formula(self, tax4):
        m = build_risk_matrix(
            [rec("c1", "cat-a"), rec("c1", "cat-c"),
             rec("c2", "cat-a"), rec("c2", "cat-b"), rec("c2", "cat-c")],
            tax4,
        )
        w = np.array([0.7, 1.3, 2.1])
        rows = weighted_rows(m, w)
        expected = float(
            rows[0] @ rows[1] / (np.linalg.norm(rows[0]) * np.linalg.norm(rows[1]))
        )
        assert weighted_cosine(m, w, 0, 1) == pytest.approx(expected, abs=1e-12)


class TestPartition:
    def build(self, tagged: dict[str, list[str]], tax) -> tuple:
        records = [rec(c, cid) for c, cats in tagged.items() for cid in cats]
        m = build_risk_matrix(records, tax)
        return m, np.ones(len(m.category_ids))

    def test_two_digit_grouping(self, tax4):
        m, w = self.build({
            "bank1": ["cat-a"], "bank2": ["cat-a", "cat-b"],
            "tech1": ["cat-c"], "food1": ["cat-d"],
        }, tax4)
        sic = {"bank1": "6021", "bank2": "6022", "tech1": "7372", "food1": "2080"}
        p = partition_pairs(m, w, sic, digits=2)
        assert len(p.same_industry) == 1
        assert len(p.diff_industry) == 5
        assert p.sic_digits == 2

    def test_four_digit_splits_finer(self, tax4):
        m, w = self.build({
            "bank1": ["cat-a"], "bank2": ["cat-a"], "bank3": ["cat-b"],
        }, tax4)
        sic = {"bank1": "6021", "bank2": "6021", "bank3": "6022"}
        two = partition_pairs(m, w, sic, digits=2)
        four = partition_pairs(m, w, sic, digits=4)
        assert len(two.same_industry) == 3
        assert len(four.same_industry) == 1
        assert len(four.diff_industry) == 2

    def test_pair_count_is_n_choose_two(self, tax4):
        m, w = self.build(
            {f"c{i}": ["cat-a", "cat-b"] for i in range(10)}, tax4
        )
        sic = {f"c{i}": "6021" for i in range(10)}
        p = partition_pairs(m, w, sic, digits=2)
        assert len(p.same_industry) == 45
        assert len(p.diff_industry) == 0

    def test_missing_sic_excluded_and_reported(self, tax4):
        m, w = self.build({
            "a": ["cat-a"], "b": ["cat-a"], "ghost": ["cat-b"],
        }, tax4)
        p = partition_pairs(m, w, {"a": "6021", "b": "6021"}, digits=2)
        assert p.excluded_no_sic == ("ghost",)
        assert len(p.same_industry) == 1

    def test_zero_weighted_row_excluded_and_reported(self, tax4):
        m, w = self.build({"a": ["cat-a"], "b": ["cat-a"], "z": ["cat-b"]}, tax4)
        w = np.array([1.0, 0.0])
        sic = {"a": "6021", "b": "6021", "z": "6022"}
        p = partition_pairs(m, w, sic, digits=2)
        assert p.excluded_zero_row == ("z",)
        assert len(p.same_industry) == 1
        assert len(p.diff_industry) == 0

    def test_malformed_sic_rejected(self, tax4):
        m, w = self.build({"a": ["cat-a"]}, tax4)
        with pytest.raises(DataError, match="malformed SIC"):
            partition_pairs(m, w, {"a": "60"}, digits=2)

    def test_bad_digits_rejected(self, tax4):
        m, w = self.build({"a": ["cat-a"]}, tax4)
        with pytest.raises(DataError):
            partition_pairs(m, w, {"a": "6021"}, digits=5)

    def test_matches_brute_force_enumeration(self, sample_taxonomy):
        """20 companies, 4 industries: every pair accounted for, values equal."""
        rng = np.random.default_rng(77)
        ids = list(sample_taxonomy.category_ids)
        tagged = {
            f"c{i:02d}": [ids[k] for k in rng.choice(len(ids), size=8, replace=False)]
            for i in range(20)
        }
        records = [rec(c, cid) for c, cats in tagged.items() for cid in cats]
        m = build_risk_matrix(records, sample_taxonomy)
        w = idf_weights(m)
        sic = {f"c{i:02d}": f"{20 + (i % 4)}10" for i in range(20)}
        p = partition_pairs(m, w, sic, digits=2)
        assert len(p.same_industry) + len(p.diff_industry) == 190

        by_pair = {}
        for i, j in itertools.combinations(range(20), 2):
            ci, cj = m.company_ids[i], m.company_ids[j]
            by_pair[(ci, cj)] = (
                sic[ci][:2] == sic[cj][:2],
                weighted_cosine(m, w, i, j),
            )
        same_expected = sorted(v for is_same, v in by_pair.values() if is_same)
        diff_expected = sorted(v for is_same, v in by_pair.values() if not is_same)
        assert np.allclose(sorted(p.same_industry), same_expected, atol=1e-12)
        assert np.allclose(sorted(p.diff_industry), diff_expected, atol=1e-12)


class TestCompare:
    def test_report_field_consistency(self, sample_taxonomy):
        corpus = generate_clustered(sample_taxonomy, n_companies=30, seed=5)
        report, roc = clustering_report(
            corpus.records, sample_taxonomy, corpus.sic,
            level="tertiary", digits=2, iterations=500, seed=5,
        )
        assert report.n_same + report.n_diff == 30 * 29 // 2
        assert 0.0 <= roc.auc <= 1.0
        assert report.mean_same > report.mean_diff

    def test_no_same_pairs_is_an_error(self, tax4):
        records = [rec("a", "cat-a"), rec("b", "cat-b")]
        with pytest.raises(DataError, match="no same-industry pairs"):
            clustering_report(records, tax4, {"a": "6021", "b": "7372"},
                              iterations=100)

    def test_row_formatting(self):
        from riskpipe.stats import RocResult

        report, roc = compare_partition(
            __import__("riskpipe.analytics", fromlist=["PairPartition"]).PairPartition(
                same_industry=(0.9, 0.8, 0.85),
                diff_industry=(0.1, 0.2, 0.15, 0.12),
                sic_digits=2,
                excluded_no_sic=(),
                excluded_zero_row=(),
            ),
            iterations=200,
            seed=1,
        )
        row = clustering_row("tertiary", 2, report, roc)
        assert row[0] == "tertiary"
        assert row[1] == "2"
        assert float(row[2]) == pytest.approx(0.85, abs=5e-5)
        assert float(row[4]) == pytest.approx(float(row[2]) - float(row[3]), abs=1e-4)
        assert float(row[5]) == 1.0
        assert isinstance(roc, RocResult)


class TestEnrichment:
    def test_group_prevalence(self, tax4):
        # 6 banks, 5 tagged with cat-a; 6 others, 1 tagged with cat-a
        records = []
        sic = {}
        for i in range(6):
            c = f"bank{i}"
            sic[c] = "6021"
            records.append(rec(c, "cat-a" if i < 5 else "cat-b"))
        for i in range(6):
            c = f"other{i}"
            sic[c] = "7372"
            records.append(rec(c, "cat-a" if i < 1 else "cat-c"))
        rows = sector_enrichment(records, tax4, sic, prefix="60")
        by_cat = {r.category: r for r in rows}
        assert by_cat["cat-a"].in_group_pct == pytest.approx(100 * 5 / 6)
        assert by_cat["cat-a"].overall_pct == pytest.approx(100 * 6 / 12)

    def test_untagged_category_reports_zero(self, tax4):
        records = [rec("a", "cat-a"), rec("b", "cat-a")]
        rows = sector_enrichment(records, tax4, {"a": "6021", "b": "6022"}, prefix="60")
        by_cat = {r.category: r for r in rows}
        assert by_cat["cat-d"] == EnrichmentRow("cat-d", 0.0, 0.0)
        assert len(rows) == 4

    def test_group_equals_population_when_all_match(self, tax4):
        records = [rec("a", "cat-a"), rec("b", "cat-b")]
        rows = sector_enrichment(records, tax4, {"a": "6021", "b": "6022"}, prefix="60")
        for r in rows:
            assert r.in_group_pct == pytest.approx(r.overall_pct)

    def test_sorted_by_overall_descending(self, tax4):
        records = [rec("a", "cat-a"), rec("b", "cat-a"), rec("b", "cat-b")]
        rows = sector_enrichment(records, tax4, {"a": "6021", "b": "6022"}, prefix="60")
        overall = [r.overall_pct for r in rows]
        assert overall == sorted(overall, reverse=True)

    def test_unknown_prefix_lists_known(self, tax4):
        records = [rec("a", "cat-a")]
        with pytest.raises(DataError, match="known prefixes: 60"):
            sector_enrichment(records, tax4, {"a": "6021"}, prefix="99")

    def test_secondary_level_keys(self, tax4):
        records = [rec("a", "cat-a"), rec("b", "cat-d")]
        rows = sector_enrichment(records, tax4, {"a": "6021", "b": "6022"},
                                 prefix="60", level="secondary")
        assert {r.category for r in rows} == {"P1 > S1", "P1 > S2", "P2 > S3"}


class TestHistogram:
    def test_counts_partition_sizes(self, tax4):
        from riskpipe.analytics import PairPartition

        p = PairPartition(
            same_industry=(0.05, 0.5, 0.95, 0.5),
            diff_industry=(0.1, 0.2),
            sic_digits=2,
            excluded_no_sic=(),
            excluded_zero_row=(),
        )
        h = similarity_histogram(p, bins=10)
        assert sum(h.same_counts) == 4
        assert sum(h.diff_counts) == 2
        assert len(h.bin_edges) == 11
        assert h.bin_edges[0] == 0.0 and h.bin_edges[-1] == 1.0

    def test_bin_assignment(self):
        from riskpipe.analytics import PairPartition

        p = PairPartition(
            same_industry=(0.05,),
            diff_industry=(0.95,),
            sic_digits=2,
            excluded_no_sic=(),
            excluded_zero_row=(),
        )
        h = similarity_histogram(p, bins=2)
        assert h.same_counts == (1, 0)
        assert h.diff_counts == (0, 1)

    def test_bad_bins_rejected(self):
        from riskpipe.analytics import PairPartition

        p = PairPartition((), (), 2, (), ())
        with pytest.raises(DataError):
            similarity_histogram(p, bins=0)


class TestSyntheticGenerator:
    def test_deterministic(self, sample_taxonomy):
        a = generate_clustered(sample_taxonomy, n_companies=20, seed=3)
        b = generate_clustered(sample_taxonomy, n_companies=20, seed=3)
        assert a.records == b.records
        assert a.sic == b.sic

    def test_seed_changes_output(self, sample_taxonomy):
        a = generate_clustered(sample_taxonomy, n_companies=20, seed=3)
        b = generate_clustered(sample_taxonomy, n_companies=20, seed=4)
        assert a.records != b.records

    def test_company_count_and_sic_shape(self, sample_taxonomy):
        c = generate_clustered(sample_taxonomy, n_companies=25, seed=0)
        companies = {r["document_id"] for r in c.records}
        assert len(companies) == 25
        assert set(c.sic) == companies
        assert all(len(code) == 4 and code.isdigit() for code in c.sic.values())

    def test_industry_pools_disjoint(self, sample_taxonomy):
        c = generate_clustered(sample_taxonomy, n_companies=20, seed=1)
        pools = [set(pool) for pool in c.pools.values()]
        for i, j in itertools.combinations(range(len(pools)), 2):
            assert not pools[i] & pools[j]
        shared = set(c.shared)
        for pool in pools:
            assert not shared & pool

    def test_same_industry_companies_share_sic_prefix(self, sample_taxonomy):
        c = generate_clustered(sample_taxonomy, n_companies=20, n_industries=4, seed=2)
        by_industry: dict[int, set[str]] = {}
        for company, industry in c.industry_of.items():
            by_industry.setdefault(industry, set()).add(c.sic[company][:2])
        prefixes = [next(iter(s)) for s in by_industry.values()]
        assert all(len(s) == 1 for s in by_industry.values())
        assert len(set(prefixes)) == len(prefixes)
