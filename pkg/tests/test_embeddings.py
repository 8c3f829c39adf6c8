import io

import numpy as np
import pytest

from adv_tagger import autodiff as ad
from adv_tagger.data import PAD_ID, UNK_ID
from adv_tagger.embeddings import (
    STD_FLOOR,
    EmbeddingTable,
    compute_stats,
    init_random,
    load_pretrained,
    normalize,
    normalized_lookup,
    uniform_bound,
    write_pretrained,
)
from adv_tagger.exceptions import EmbeddingFormatError, LookupRangeError


class TestTable:
    def test_random_init_bounds(self):
        table = init_random(50, 8, seed=4)
        assert table.matrix.shape == (50, 8)
        assert np.all(np.abs(table.matrix) <= uniform_bound(8))

    def test_same_seed_same_table(self):
        np.testing.assert_array_equal(init_random(5, 3, seed=9).matrix, init_random(5, 3, seed=9).matrix)

    def test_negative_weights_rejected(self):
        with pytest.raises(EmbeddingFormatError):
            EmbeddingTable(np.zeros((2, 2)), np.array([1.0, -1.0]))

    def test_all_zero_weights_rejected(self):
        with pytest.raises(EmbeddingFormatError):
            EmbeddingTable(np.zeros((2, 2)), np.zeros(2))

    def test_weight_count_must_match_rows(self):
        with pytest.raises(EmbeddingFormatError):
            EmbeddingTable(np.zeros((3, 2)), np.ones(2))


class TestNormalization:
    def test_weighted_moments_after_normalizing(self, rng):
        matrix = rng.normal(loc=3.0, scale=2.0, size=(40, 6))
        weights = rng.integers(0, 20, size=40).astype(float)
        weights[0] = 5.0
        table = EmbeddingTable(matrix, weights)
        normalized = normalize(table, compute_stats(table))
        p = weights / weights.sum()
        np.testing.assert_allclose(p @ normalized, np.zeros(6), atol=1e-10)
        np.testing.assert_allclose(p @ normalized ** 2, np.ones(6), atol=1e-10)

    def test_weights_scale_invariant(self, rng):
        matrix = rng.normal(size=(10, 3))
        weights = rng.uniform(0.5, 2.0, size=10)
        a = compute_stats(EmbeddingTable(matrix, weights))
        b = compute_stats(EmbeddingTable(matrix, weights * 37.0))
        np.testing.assert_allclose(a.mean, b.mean)
        np.testing.assert_allclose(a.std, b.std)

    def test_constant_dimension_hits_floor(self):
        matrix = np.column_stack([np.full(4, 2.0), np.arange(4.0)])
        stats = compute_stats(EmbeddingTable(matrix, np.ones(4)))
        assert stats.std[0] == STD_FLOOR
        assert np.all(np.isfinite(normalize(EmbeddingTable(matrix, np.ones(4)), stats)))

    def test_zero_weight_rows_are_ignored(self):
        matrix = np.array([[100.0], [1.0], [3.0]])
        stats = compute_stats(EmbeddingTable(matrix, np.array([0.0, 1.0, 1.0])))
        assert stats.mean[0] == pytest.approx(2.0)
        assert stats.std[0] == pytest.approx(1.0)

    def test_lookup_matches_whole_table(self, rng):
        table = EmbeddingTable(rng.normal(size=(6, 3)), np.ones(6))
        stats = compute_stats(table)
        tape = ad.Tape()
        rows = normalized_lookup(tape.parameter(table.matrix), stats, [4, 1, 4])
        np.testing.assert_allclose(rows.data, normalize(table, stats)[[4, 1, 4]])

    def test_lookup_gradient_reaches_raw_rows(self, rng):
        table = EmbeddingTable(rng.normal(size=(4, 2)), np.ones(4))
        stats = compute_stats(table)
        tape = ad.Tape()
        param = tape.parameter(table.matrix)
        grads = tape.backward(ad.total(normalized_lookup(param, stats, [2])))
        expected = np.zeros((4, 2))
        expected[2] = stats.inv_std
        np.testing.assert_allclose(grads[param.id], expected)

    def test_lookup_out_of_range(self):
        table = init_random(3, 2)
        tape = ad.Tape()
        with pytest.raises(LookupRangeError):
            normalized_lookup(tape.parameter(table.matrix), compute_stats(table), [3])


class TestPretrained:
    def test_file_rows_copied_and_rest_random(self, tmp_path, toy_vocab):
        path = tmp_path / "vectors.txt"
        path.write_text("2 3\ndog 1 2 3\nCAT 4 5 6\nzebra 7 8 9\n", encoding="utf-8")
        table = load_pretrained(path, toy_vocab, 3, seed=1)
        np.testing.assert_array_equal(table.matrix[toy_vocab.words["dog"]], [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(table.matrix[toy_vocab.words["cat"]], [4.0, 5.0, 6.0])
        assert np.all(np.abs(table.matrix[toy_vocab.words["sat"]]) <= uniform_bound(3))

    def test_lowercase_entry_wins(self, tmp_path, toy_vocab):
        path = tmp_path / "vectors.txt"
        path.write_text("dog 1 1\nDog 2 2\n", encoding="utf-8")
        table = load_pretrained(path, toy_vocab, 2)
        np.testing.assert_array_equal(table.matrix[toy_vocab.words["dog"]], [1.0, 1.0])

    def test_wrong_dimension_names_line(self, tmp_path, toy_vocab):
        path = tmp_path / "vectors.txt"
        path.write_text("dog 1 2 3\ncat 1 2\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError) as info:
            load_pretrained(path, toy_vocab, 3)
        assert info.value.line == 2

    def test_invalid_utf8_file(self, tmp_path, toy_vocab):
        path = tmp_path / "latin1.vec"
        path.write_bytes("caf\xe9 0.1 0.2\n".encode("latin-1"))
        with pytest.raises(EmbeddingFormatError, match="not valid UTF-8"):
            load_pretrained(path, toy_vocab, d=2)

    def test_weights_follow_training_counts(self, tmp_path, toy_vocab):
        path = tmp_path / "vectors.txt"
        path.write_text("", encoding="utf-8")
        table = load_pretrained(path, toy_vocab, 2)
        assert table.weights[PAD_ID] == 0.0
        assert table.weights[toy_vocab.words["dog"]] == 2.0

    def test_written_vectors_load_back_exactly(self, tmp_path, toy_vocab):
        original = init_random(len(toy_vocab.words), 4, seed=2)
        stream = io.StringIO()
        write_pretrained(original, toy_vocab.word_names, stream)
        path = tmp_path / "vectors.txt"
        path.write_text(stream.getvalue(), encoding="utf-8")
        loaded = load_pretrained(path, toy_vocab, 4, seed=99)
        np.testing.assert_array_equal(loaded.matrix[UNK_ID:], original.matrix[UNK_ID:])
