import numpy as np
import pytest

import oracles
from lexprobe.configs import ContextMode, ExtractionConfig, LayerScheme, SpecialPolicy
from lexprobe.distill import (
    TypeEmbeddingMatrix,
    aggregate_contexts,
    build_matrix,
    combine_layers,
    load_matrix_binary,
    load_matrix_text,
    pool_subwords,
    save_matrix_binary,
    save_matrix_text,
)
from lexprobe.errors import EmptySelectionError, MissingWordsError, WordNotFoundError
from lexprobe.store import (
    OccurrenceRecord,
    StoreHeader,
    Vocabulary,
    open_store,
    write_store,
)

LAYERS, DIM = 4, 6


def record_for(word, rng, k=2, cls=True, sep=True, layers=LAYERS, dim=DIM):
    flags = ([1] if cls else []) + [0] * k + ([2] if sep else [])
    flags = np.array(flags, np.uint8)
    vecs = rng.uniform(-1, 1, (layers, len(flags), dim)).astype(np.float32)
    return OccurrenceRecord(word, flags, vecs)


def write(tmp_path, name, records, layers=LAYERS, dim=DIM):
    path = tmp_path / f"{name}.lxts"
    write_store(StoreHeader("toy", "mono", layers, dim), records, path)
    return path


class TestPoolSubwords:
    def test_single_content_token_is_identity(self):
        rng = np.random.default_rng(0)
        rec = record_for("w", rng, k=1, cls=False, sep=False)
        pooled = pool_subwords(rec, SpecialPolicy.NOSPEC)
        np.testing.assert_array_equal(
            pooled, rec.vectors[:, 0, :].astype(np.float64)
        )

    def test_all_matches_mean_oracle(self):
        rng = np.random.default_rng(1)
        rec = record_for("w", rng, k=3)
        pooled = pool_subwords(rec, SpecialPolicy.ALL)
        expected = oracles.pool_record(rec.vectors, rec.token_flags, "all")
        np.testing.assert_allclose(pooled, expected, atol=1e-12)

    def test_withcls_algebraic_identity(self):
        # withcls = (k * nospec + v_cls) / (k + 1), per layer
        rng = np.random.default_rng(2)
        for k in (1, 2, 5):
            rec = record_for("w", rng, k=k)
            nospec = pool_subwords(rec, SpecialPolicy.NOSPEC)
            withcls = pool_subwords(rec, SpecialPolicy.WITHCLS)
            v_cls = rec.vectors[:, 0, :].astype(np.float64)
            np.testing.assert_allclose(
                withcls, (k * nospec + v_cls) / (k + 1), atol=1e-6
            )

    def test_policy_counting_identity_randomized(self):
        # all = (k * nospec + cls + sep) / (k + 2) over 1000 random records
        rng = np.random.default_rng(3)
        for _ in range(1000):
            k = int(rng.integers(1, 6))
            rec = record_for("w", rng, k=k, layers=2, dim=3)
            nospec = pool_subwords(rec, SpecialPolicy.NOSPEC)
            allpol = pool_subwords(rec, SpecialPolicy.ALL)
            v_cls = rec.vectors[:, 0, :].astype(np.float64)
            v_sep = rec.vectors[:, -1, :].astype(np.float64)
            np.testing.assert_allclose(
                allpol, (k * nospec + v_cls + v_sep) / (k + 2), atol=1e-6
            )

    def test_empty_selection_raises(self):
        rng = np.random.default_rng(4)
        flags = np.array([1, 2], np.uint8)  # specials only
        vecs = rng.standard_normal((LAYERS, 2, DIM)).astype(np.float32)
        rec = OccurrenceRecord("w", flags, vecs)
        with pytest.raises(EmptySelectionError):
            pool_subwords(rec, SpecialPolicy.NOSPEC)


class TestAggregateContexts:
    def test_single_occurrence_equals_its_pooling(self, tmp_path):
        rng = np.random.default_rng(5)
        rec = record_for("apple", rng)
        path = write(tmp_path, "aoc", [rec])
        with open_store(path) as store:
            got, backed = aggregate_contexts(
                "apple", store, ContextMode.aoc(10), SpecialPolicy.NOSPEC
            )
        assert not backed
        np.testing.assert_array_equal(got, pool_subwords(rec, SpecialPolicy.NOSPEC))

    def test_mean_over_ten_occurrences_matches_oracle(self, tmp_path):
        rng = np.random.default_rng(6)
        records = [record_for("apple", rng) for _ in range(10)]
        path = write(tmp_path, "aoc", records)
        with open_store(path) as store:
            got, _ = aggregate_contexts(
                "apple", store, ContextMode.aoc(10), SpecialPolicy.NOSPEC
            )
        expected = oracles.pool_word(
            [(r.token_flags, r.vectors) for r in records], "nospec"
        )
        np.testing.assert_allclose(got[3], expected[3], atol=1e-12)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_uses_first_m_occurrences(self, tmp_path):
        rng = np.random.default_rng(7)
        records = [record_for("apple", rng) for _ in range(5)]
        path = write(tmp_path, "aoc", records)
        with open_store(path) as store:
            got, _ = aggregate_contexts(
                "apple", store, ContextMode.aoc(3), SpecialPolicy.ALL
            )
        expected = oracles.pool_word(
            [(r.token_flags, r.vectors) for r in records], "all", max_records=3
        )
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_backoff_is_bitwise_equal_to_iso(self, tmp_path):
        rng = np.random.default_rng(8)
        iso_rec = record_for("rare", rng)
        iso_path = write(tmp_path, "iso", [iso_rec])
        aoc_path = write(tmp_path, "aoc", [record_for("common", rng)])
        with open_store(aoc_path) as aoc, open_store(iso_path) as iso:
            via_backoff, backed = aggregate_contexts(
                "rare", aoc, ContextMode.aoc(10), SpecialPolicy.WITHCLS, backoff=iso
            )
            direct, _ = aggregate_contexts(
                "rare", iso, ContextMode.iso(), SpecialPolicy.WITHCLS
            )
        assert backed
        assert np.array_equal(via_backoff, direct)  # bitwise

    def test_missing_from_both_stores_raises(self, tmp_path):
        rng = np.random.default_rng(9)
        iso_path = write(tmp_path, "iso", [record_for("a", rng)])
        aoc_path = write(tmp_path, "aoc", [record_for("a", rng)])
        with open_store(aoc_path) as aoc, open_store(iso_path) as iso:
            with pytest.raises(WordNotFoundError):
                aggregate_contexts(
                    "zzz", aoc, ContextMode.aoc(5), SpecialPolicy.NOSPEC, backoff=iso
                )


class TestCombineLayers:
    def test_single_zero_is_first_row(self):
        rng = np.random.default_rng(10)
        per_layer = rng.standard_normal((13, DIM))
        np.testing.assert_array_equal(
            combine_layers(per_layer, LayerScheme.single(0)), per_layer[0]
        )

    def test_avg_le_top_matches_mean_oracle(self):
        rng = np.random.default_rng(11)
        per_layer = rng.standard_normal((13, DIM))
        got = combine_layers(per_layer, LayerScheme.avg_le(12))
        np.testing.assert_allclose(
            got, oracles.combine_layers(per_layer, "avg_le", 12), atol=1e-12
        )

    def test_avg_ge_top_equals_single_top(self):
        rng = np.random.default_rng(12)
        per_layer = rng.standard_normal((13, DIM))
        np.testing.assert_array_equal(
            combine_layers(per_layer, LayerScheme.avg_ge(12)),
            combine_layers(per_layer, LayerScheme.single(12)),
        )

    def test_avg_ge_zero_equals_avg_le_top(self):
        rng = np.random.default_rng(13)
        per_layer = rng.standard_normal((13, DIM))
        np.testing.assert_allclose(
            combine_layers(per_layer, LayerScheme.avg_ge(0)),
            combine_layers(per_layer, LayerScheme.avg_le(12)),
            atol=1e-12,
        )

    def test_out_of_range_raises(self):
        per_layer = np.zeros((4, DIM))
        with pytest.raises(IndexError):
            combine_layers(per_layer, LayerScheme.single(4))


def config(context, policy, layers):
    return ExtractionConfig(context, policy, layers)


class TestBuildMatrix:
    def test_one_word_iso_single0(self, tmp_path):
        rng = np.random.default_rng(14)
        rec = record_for("apple", rng)
        path = write(tmp_path, "iso", [rec])
        vocab = Vocabulary(["apple"])
        with open_store(path) as store:
            matrix = build_matrix(
                vocab, store,
                config(ContextMode.iso(), SpecialPolicy.NOSPEC, LayerScheme.single(0)),
            )
        expected = oracles.pool_record(rec.vectors, rec.token_flags, "nospec")[0]
        np.testing.assert_allclose(matrix.data[0], expected, atol=1e-6)
        assert matrix.provenance["layers"] == "l0"

    def test_avg_le_linearity_against_single_matrices(self, tmp_path):
        rng = np.random.default_rng(15)
        records = [record_for(w, rng) for w in ("a", "b", "c")]
        path = write(tmp_path, "iso", records)
        vocab = Vocabulary(["a", "b", "c"])
        with open_store(path) as store:
            for n in range(LAYERS):
                avg = build_matrix(
                    vocab, store,
                    config(ContextMode.iso(), SpecialPolicy.ALL, LayerScheme.avg_le(n)),
                )
                singles = [
                    build_matrix(
                        vocab, store,
                        config(ContextMode.iso(), SpecialPolicy.ALL,
                               LayerScheme.single(j)),
                    ).data.astype(np.float64)
                    for j in range(n + 1)
                ]
                np.testing.assert_allclose(
                    avg.data, np.mean(singles, axis=0), atol=1e-6
                )

    def test_one_hot_store_gives_one_hot_rows_under_every_config(self, tmp_path):
        words = ["a", "b", "c", "d"]
        records = []
        for i, w in enumerate(words):
            flags = np.array([1, 0, 0, 2], np.uint8)
            vecs = np.zeros((LAYERS, 4, 4), np.float32)
            vecs[:, :, i] = 1.0  # every token at every layer is the word's one-hot
            records.append(OccurrenceRecord(w, flags, vecs))
        path = write(tmp_path, "iso", records, dim=4)
        vocab = Vocabulary(words)
        schemes = [LayerScheme.single(n) for n in range(LAYERS)]
        schemes += [LayerScheme.avg_le(n) for n in range(LAYERS)]
        schemes += [LayerScheme.avg_ge(n) for n in range(LAYERS)]
        with open_store(path) as store:
            for policy in SpecialPolicy:
                for scheme in schemes:
                    matrix = build_matrix(
                        vocab, store, config(ContextMode.iso(), policy, scheme)
                    )
                    np.testing.assert_allclose(matrix.data, np.eye(4), atol=1e-7)

    def test_missing_words_collected(self, tmp_path):
        rng = np.random.default_rng(16)
        path = write(tmp_path, "iso", [record_for("a", rng)])
        vocab = Vocabulary(["a", "b", "c"])
        with open_store(path) as store:
            with pytest.raises(MissingWordsError) as err:
                build_matrix(
                    vocab, store,
                    config(ContextMode.iso(), SpecialPolicy.NOSPEC,
                           LayerScheme.single(0)),
                )
        assert err.value.words == ["b", "c"]

    def test_aoc_requires_backoff(self, tmp_path):
        rng = np.random.default_rng(17)
        path = write(tmp_path, "aoc", [record_for("a", rng)])
        with open_store(path) as store:
            with pytest.raises(ValueError, match="back-off"):
                build_matrix(
                    Vocabulary(["a"]), store,
                    config(ContextMode.aoc(3), SpecialPolicy.NOSPEC,
                           LayerScheme.single(0)),
                )

    def test_aoc_permutation_invariance(self, tmp_path):
        rng = np.random.default_rng(18)
        records = [record_for("apple", rng) for _ in range(4)]
        path_a = write(tmp_path, "order_a", records)
        path_b = write(tmp_path, "order_b", [records[2], records[0], records[3],
                                             records[1]])
        cfg = config(ContextMode.aoc(4), SpecialPolicy.NOSPEC, LayerScheme.avg_le(3))
        iso_path = write(tmp_path, "iso", [records[0]])
        with open_store(path_a) as sa, open_store(path_b) as sb, \
                open_store(iso_path) as iso:
            ma = build_matrix(Vocabulary(["apple"]), sa, cfg, iso)
            mb = build_matrix(Vocabulary(["apple"]), sb, cfg, iso)
        np.testing.assert_allclose(ma.data, mb.data, atol=1e-6)

    def test_determinism_bitwise(self, tmp_path):
        rng = np.random.default_rng(19)
        records = []
        for w in ("a", "b"):
            records.extend(record_for(w, rng) for _ in range(3))
        # group records by word for the writer
        records.sort(key=lambda r: r.word)
        path = write(tmp_path, "aoc", records)
        iso_path = write(tmp_path, "iso2",
                         [record_for(w, rng) for w in ("a", "b")])
        cfg = config(ContextMode.aoc(2), SpecialPolicy.ALL, LayerScheme.avg_ge(1))
        with open_store(path) as store, open_store(iso_path) as iso:
            m1 = build_matrix(Vocabulary(["a", "b"]), store, cfg, iso)
            m2 = build_matrix(Vocabulary(["a", "b"]), store, cfg, iso)
        assert np.array_equal(m1.data, m2.data)
        assert m1.data.dtype == np.float32


class TestMatrixIo:
    def make_matrix(self):
        rng = np.random.default_rng(20)
        vocab = Vocabulary(["alpha", "beta", "gamma"])
        data = rng.uniform(-2, 2, (3, 5)).astype(np.float32)
        backed = np.array([False, True, False])
        return TypeEmbeddingMatrix(vocab, data, {"model_id": "toy",
                                                 "context": "iso"}, backed)

    def test_binary_round_trip_is_bit_exact(self, tmp_path):
        matrix = self.make_matrix()
        path = tmp_path / "m.lxtm"
        save_matrix_binary(matrix, path)
        loaded = load_matrix_binary(path)
        assert loaded.vocabulary == matrix.vocabulary
        assert np.array_equal(loaded.data, matrix.data)
        assert loaded.provenance["model_id"] == "toy"
        np.testing.assert_array_equal(loaded.backed_off, matrix.backed_off)

    def test_text_round_trip_is_bit_exact(self, tmp_path):
        matrix = self.make_matrix()
        path = tmp_path / "m.txt"
        save_matrix_text(matrix, path)
        first = path.read_text().splitlines()[0]
        assert first == "3 5"
        loaded = load_matrix_text(path)
        assert loaded.vocabulary == matrix.vocabulary
        assert np.array_equal(loaded.data, matrix.data)
