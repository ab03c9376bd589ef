"""Stage 2: embedding index construction, matching, and persistence."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskpipe.errors import DataError, FingerprintMismatchError, TaxonomyError
from riskpipe.extraction import ExtractedRisk
from riskpipe.mapping import (
    DEFAULT_TASK_INSTRUCTION,
    TaxonomyEmbeddingIndex,
    brute_force_match,
    build_index,
    load_index,
    match_risks,
    save_index,
)
from riskpipe.providers import HashingEmbedder, StaticEmbedder
from riskpipe.taxonomy import Taxonomy, TaxonomyCategory, categories_from_rows


def risk(quote: str, tag: str = "tag") -> ExtractedRisk:
    return ExtractedRisk(tag=tag, quote=quote, quote_verified=True)


class TestInstruction:
    def test_default_instruction_text(self):
        assert DEFAULT_TASK_INSTRUCTION == (
            "Classify risk factor text from an annual report into the most "
            "appropriate taxonomy category."
        )


class TestBuildIndex:
    def test_row_per_category_in_order(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        assert len(idx) == 5
        assert idx.category_ids == small_taxonomy.category_ids
        assert idx.matrix.shape == (5, 64)

    def test_rows_unit_norm(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        assert np.allclose(np.linalg.norm(idx.matrix, axis=1), 1.0, atol=1e-6)

    def test_rebuild_identical(self, small_taxonomy):
        a = build_index(small_taxonomy, HashingEmbedder(dim=64))
        b = build_index(small_taxonomy, HashingEmbedder(dim=64))
        assert a.equals(b)
        assert np.array_equal(a.matrix, b.matrix)

    def test_fingerprint_recorded(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        assert idx.embedder_fingerprint == embedder.fingerprint

    def test_invalid_taxonomy_rejected(self, embedder):
        bad = Taxonomy(categories=(
            TaxonomyCategory.from_labels("A", "B", "C", ""),
        ))
        with pytest.raises(TaxonomyError):
            build_index(bad, embedder)

    def test_matrix_is_float32_quantized(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        assert np.array_equal(idx.matrix, idx.matrix.astype(np.float32).astype(np.float64))


class TestMatchRisks:
    def test_self_description_maps_to_own_category(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        cat = small_taxonomy.categories[2]
        [m] = match_risks([risk(cat.description)], idx, embedder)
        assert m.category_id == cat.id
        assert m.similarity == pytest.approx(1.0, abs=1e-6)

    def test_similarity_in_unit_interval(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        risks = [risk("interest rates rise"), risk("suppliers fail to deliver parts")]
        for m in match_risks(risks, idx, embedder):
            assert 0.0 <= m.similarity <= 1.0 + 1e-9

    def test_order_preserved(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        risks = [risk("alpha"), risk("beta"), risk("gamma")]
        out = match_risks(risks, idx, embedder)
        assert [m.risk.quote for m in out] == ["alpha", "beta", "gamma"]

    def test_batched_equals_brute_force(self, sample_taxonomy, embedder):
        idx = build_index(sample_taxonomy, embedder)
        rng = np.random.default_rng(7)
        words = "market credit supply cyber approval rates breach default delay vendor".split()
        risks = [
            risk(" ".join(rng.choice(words, size=rng.integers(2, 8))))
            for _ in range(40)
        ]
        fast = match_risks(risks, idx, embedder)
        slow = brute_force_match(risks, idx, embedder)
        for f, s in zip(fast, slow):
            assert f.category_id == s.category_id
            assert f.similarity == pytest.approx(s.similarity, abs=1e-6)

    def test_tie_breaks_to_lowest_row_index(self, embedder):
        # two categories with identical descriptions tie exactly
        t = categories_from_rows([
            ("P", "S", "First twin", "identical words here"),
            ("P", "S", "Second twin", "identical words here"),
        ])
        idx = TaxonomyEmbeddingIndex(
            category_ids=t.category_ids,
            matrix=embedder.embed_batch(
                [c.description for c in t], instruction=DEFAULT_TASK_INSTRUCTION
            ).astype(np.float32).astype(np.float64),
            instruction=DEFAULT_TASK_INSTRUCTION,
            embedder_fingerprint=embedder.fingerprint,
        )
        [m] = match_risks([risk("identical words here")], idx, embedder)
        assert m.category_id == "first-twin"

    def test_fingerprint_mismatch_rejected(self, small_taxonomy):
        idx = build_index(small_taxonomy, HashingEmbedder(dim=64))
        other = HashingEmbedder(dim=32)
        with pytest.raises(FingerprintMismatchError):
            match_risks([risk("text")], idx, other)

    def test_empty_risk_list_ok(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        assert match_risks([], idx, embedder) == []

    def test_tag_prefix_flag_changes_query(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        r = risk("generic words", tag="cybersecurity breach systems data")
        [plain] = match_risks([r], idx, embedder)
        [tagged] = match_risks([r], idx, embedder, embed_tag_with_quote=True)
        assert tagged.similarity != pytest.approx(plain.similarity, abs=1e-12)

    def test_record_shape(self, small_taxonomy, embedder):
        idx = build_index(small_taxonomy, embedder)
        [m] = match_risks([risk("interest rates", tag="rates")], idx, embedder)
        rec = m.as_record("d1")
        assert set(rec) == {
            "document_id", "tag", "quote", "quote_verified", "category_id", "similarity",
        }

    @settings(max_examples=25, deadline=None)
    @given(quotes=st.lists(
        st.text(alphabet="abcdefgh ", min_size=1).filter(lambda s: s.strip()),
        min_size=1, max_size=10,
    ))
    def test_property_batched_equals_brute_force(self, quotes):
        from conftest import SAMPLE_ROWS

        e = HashingEmbedder(dim=16)
        idx = build_index(categories_from_rows(SAMPLE_ROWS), e)
        risks = [risk(q) for q in quotes]
        fast = match_risks(risks, idx, e)
        slow = brute_force_match(risks, idx, e)
        assert [m.category_id for m in fast] == [m.category_id for m in slow]


class TestIndexPersistence:
    def test_round_trip_exact(self, small_taxonomy, embedder, tmp_path):
        idx = build_index(small_taxonomy, embedder)
        p = tmp_path / "tax.idx"
        save_index(idx, p)
        again = load_index(p)
        assert again.equals(idx)
        assert np.array_equal(again.matrix, idx.matrix)
        assert again.category_ids == idx.category_ids
        assert again.instruction == idx.instruction
        assert again.embedder_fingerprint == idx.embedder_fingerprint

    def test_save_is_byte_stable(self, small_taxonomy, embedder, tmp_path):
        idx = build_index(small_taxonomy, embedder)
        p1, p2 = tmp_path / "a.idx", tmp_path / "b.idx"
        save_index(idx, p1)
        save_index(idx, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_matches_committed_golden_bytes(self, tmp_path):
        """Byte layout must not drift: rebuild the fixture and compare."""
        from pathlib import Path

        from riskpipe.taxonomy import load_taxonomy

        fixtures = Path(__file__).parent / "fixtures"
        t = load_taxonomy(fixtures / "golden_taxonomy.tsv")
        idx = build_index(t, HashingEmbedder(dim=16))
        p = tmp_path / "rebuilt.idx"
        save_index(idx, p)
        assert p.read_bytes() == (fixtures / "golden_index.idx").read_bytes()

    def test_magic_checked(self, tmp_path):
        p = tmp_path / "bad.idx"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
        with pytest.raises(DataError, match="magic"):
            load_index(p)

    def test_truncated_file_rejected(self, small_taxonomy, embedder, tmp_path):
        idx = build_index(small_taxonomy, embedder)
        p = tmp_path / "t.idx"
        save_index(idx, p)
        whole = p.read_bytes()
        p.write_bytes(whole[: len(whole) // 2])
        with pytest.raises(DataError):
            load_index(p)

    def test_loaded_index_usable_for_matching(self, small_taxonomy, embedder, tmp_path):
        idx = build_index(small_taxonomy, embedder)
        p = tmp_path / "t.idx"
        save_index(idx, p)
        loaded = load_index(p)
        a = match_risks([risk("interest rates")], idx, embedder)
        b = match_risks([risk("interest rates")], loaded, embedder)
        assert a[0].category_id == b[0].category_id
        assert a[0].similarity == b[0].similarity


class TestIndexValidation:
    def test_row_count_mismatch_rejected(self, embedder):
        with pytest.raises(DataError):
            TaxonomyEmbeddingIndex(
                category_ids=("a", "b"),
                matrix=np.eye(3),
                instruction="i",
                embedder_fingerprint="f",
            )

    def test_non_unit_rows_rejected(self):
        with pytest.raises(DataError):
            TaxonomyEmbeddingIndex(
                category_ids=("a",),
                matrix=np.array([[2.0, 0.0]]),
                instruction="i",
                embedder_fingerprint="f",
            )

    def test_empty_index_rejected_at_match(self, embedder, small_taxonomy):
        idx = build_index(small_taxonomy, embedder)
        with pytest.raises(DataError):
            match_risks([risk("q")], TaxonomyEmbeddingIndex(
                category_ids=(),
                matrix=np.zeros((0, 64)),
                instruction=idx.instruction,
                embedder_fingerprint=embedder.fingerprint,
            ), embedder)
