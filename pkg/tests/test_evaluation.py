import itertools

import numpy as np
import pytest

from adv_tagger.data import build_vocab, to_iobes
from adv_tagger.embeddings import EmbeddingTable, compute_stats
from adv_tagger.evaluation import (
    IOB2,
    BucketReport,
    bucket_of,
    chunk_f1,
    chunk_spans,
    cluster_tightness,
    evaluate,
    format_table,
    format_tightness,
    frequency_buckets,
    mean_pairwise_cosine,
    neighbor_accuracy,
    sentence_accuracy,
    tag_clusters,
    token_accuracy,
)
from adv_tagger.exceptions import AlignmentError, TagSchemeError
from helpers import make_corpus

LABELS = ("NP", "VP")


def random_iob2(rng, n):
    tags, previous = [], "O"
    for _ in range(n):
        choice = rng.integers(4)
        if choice == 0:
            tag = "O"
        elif choice == 1 and previous != "O":
            tag = "I-" + previous[2:]
        else:
            tag = f"B-{LABELS[rng.integers(2)]}"
        tags.append(tag)
        previous = tag
    return tags


def runs_of(tags):
    """Reference decoder: a chunk is a B- tag followed by I- tags of the same label."""
    spans = set()
    position = 0
    while position < len(tags):
        if tags[position].startswith("B-"):
            label = tags[position][2:]
            end = position + 1
            while end < len(tags) and tags[end] == f"I-{label}":
                end += 1
            spans.add((label, position, end))
            position = end
        else:
            position += 1
    return spans


class TestRates:
    def test_token_and_sentence_accuracy(self):
        gold = [["A", "B"], ["C"]]
        predicted = [["A", "X"], ["C"]]
        assert token_accuracy(gold, predicted) == pytest.approx(2 / 3)
        assert sentence_accuracy(gold, predicted) == 0.5

    def test_corpus_inputs(self, toy_corpus):
        assert token_accuracy(toy_corpus, toy_corpus) == 1.0

    @pytest.mark.parametrize("predicted", [[["A"]], [["A", "B"], ["C", "D"]]])
    def test_misaligned(self, predicted):
        with pytest.raises(AlignmentError):
            token_accuracy([["A", "B"], ["C"]], predicted)

    def test_nothing_to_evaluate(self):
        with pytest.raises(AlignmentError):
            token_accuracy([], [])

    def test_report(self):
        report = evaluate([["A", "B", "B"]], [["A", "A", "B"]])
        assert report.n_tokens == 3
        assert report.confusion == {"A": {"A": 1}, "B": {"A": 1, "B": 1}}
        assert "66.67" in report.format()
        assert report.to_record()["sentence_accuracy"] == 0.0


class TestChunks:
    def test_iob2_spans(self):
        assert chunk_spans(["B-NP", "I-NP", "O", "B-VP", "B-NP"]) == {("NP", 0, 2), ("VP", 3, 4), ("NP", 4, 5)}

    def test_iobes_spans(self):
        assert chunk_spans(["B-NP", "E-NP", "O", "S-VP", "S-NP"]) == {("NP", 0, 2), ("VP", 3, 4), ("NP", 4, 5)}

    def test_matches_reference_decoder(self, rng):
        for _ in range(200):
            tags = random_iob2(rng, int(rng.integers(1, 12)))
            expected = runs_of(tags)
            assert chunk_spans(tags) == expected
            assert chunk_spans(to_iobes(tags)) == expected

    def test_stray_continuation(self):
        with pytest.raises(TagSchemeError):
            chunk_spans(["O", "I-NP"])
        assert chunk_spans(["O", "I-NP", "E-NP"], repair=True) == {("NP", 1, 3)}
        assert chunk_spans(["B-NP", "E-VP"], repair=True) == {("NP", 0, 1), ("VP", 1, 2)}

    def test_partial_recall(self):
        score = chunk_f1([["B-NP", "E-NP", "O", "S-VP"]], [["B-NP", "E-NP", "O", "O"]])
        assert (score.precision, score.recall) == (1.0, 0.5)
        assert score.f1 == pytest.approx(2 / 3)

    def test_boundary_errors_count_as_misses(self):
        score = chunk_f1([["B-NP", "I-NP"]], [["B-NP", "B-NP"]], scheme=IOB2)
        assert (score.matched, score.gold_chunks, score.predicted_chunks) == (0, 1, 2)

    def test_no_predicted_chunks(self):
        score = chunk_f1([["S-NP"]], [["O"]])
        assert (score.precision, score.recall, score.f1) == (0.0, 0.0, 0.0)

    def test_invalid_gold(self):
        with pytest.raises(TagSchemeError):
            chunk_f1([["B-NP", "O"]], [["B-NP", "O"]])

    def test_unknown_scheme(self):
        with pytest.raises(TagSchemeError):
            chunk_f1([["O"]], [["O"]], scheme="bilou")


class TestBuckets:
    @pytest.mark.parametrize("frequency, bucket", [(0, 0), (1, 1), (9, 1), (10, 2), (99, 2), (100, 3), (5000, 3)])
    def test_boundaries(self, frequency, bucket):
        assert bucket_of(frequency) == bucket

    def test_frequency_buckets(self):
        vocab = build_vocab(make_corpus([[("x", "A")] * 10 + [("y", "B")]]))
        gold = make_corpus([[("x", "A"), ("Y", "B"), ("z", "C")]])
        report = frequency_buckets(vocab, gold, [["A", "B", "A"]])
        assert report.counts == [1, 1, 1, 0]
        assert report.correct == [0, 1, 1, 0]
        assert report.accuracies == [0.0, 1.0, 1.0, None]
        assert report.total == 3

    def test_neighbors_of_three_tokens(self, toy_vocab):
        gold = make_corpus([[("dog", "NOUN"), ("ran", "VERB"), ("zebra", "NOUN")]])
        report = neighbor_accuracy(toy_vocab, gold, [["NOUN", "DET", "NOUN"]])
        assert report.total == 4
        # zebra is unseen; its only neighbor "ran" was mistagged
        assert (report.counts[0], report.correct[0]) == (1, 0)
        assert (report.counts[1], report.correct[1]) == (3, 2)

    def test_records_and_format(self):
        report = BucketReport("frequency_buckets", ["0", "1-10"], [2, 0], [1, 0])
        assert report.to_records()[1] == {"report": "frequency_buckets", "bucket": "1-10", "count": 0, "accuracy": None}
        assert report.format().splitlines()[1].split() == ["0", "2", "50.00"]


class TestTightness:
    def test_pairwise_cosine(self):
        assert mean_pairwise_cosine(np.array([[1.0, 0.0], [2.0, 0.0]])) == pytest.approx(1.0)
        assert mean_pairwise_cosine(np.array([[1.0, 0.0], [0.0, 3.0]])) == pytest.approx(0.0)
        assert mean_pairwise_cosine(np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])) == pytest.approx(1 / 3)

    def test_needs_two_vectors(self):
        with pytest.raises(ValueError):
            mean_pairwise_cosine(np.ones((1, 3)))

    def test_clusters_drop_ambiguous_and_unknown(self, toy_vocab):
        test = make_corpus([
            [("dog", "NOUN"), ("cat", "NOUN"), ("sat", "VERB")],
            [("sat", "NOUN"), ("zebra", "NOUN"), ("ran", "VERB")],
        ])
        clusters = tag_clusters(toy_vocab, test)
        assert clusters == {"NOUN": sorted([toy_vocab.words["dog"], toy_vocab.words["cat"]]), "VERB": [toy_vocab.words["ran"]]}
        assert list(tag_clusters(toy_vocab, test, tags=["VERB"])) == ["VERB"]

    def test_raw_tightness(self, toy_vocab):
        matrix = np.zeros((len(toy_vocab.words), 2))
        matrix[toy_vocab.words["dog"]] = [1.0, 0.0]
        matrix[toy_vocab.words["cat"]] = [1.0, 1.0]
        matrix[toy_vocab.words["ran"]] = [0.0, 1.0]
        matrix[toy_vocab.words["sat"]] = [0.0, -1.0]
        table = EmbeddingTable(matrix, toy_vocab.word_weights())
        test = make_corpus([[("dog", "NOUN"), ("cat", "NOUN"), ("ran", "VERB"), ("sat", "VERB")]])
        report = cluster_tightness(table, None, test, toy_vocab, normalized=False, label="raw")
        assert report.clusters["NOUN"] == pytest.approx(np.sqrt(0.5))
        assert report.clusters["VERB"] == pytest.approx(-1.0)
        assert report.overall == pytest.approx((np.sqrt(0.5) - 1.0) / 2)
        assert report.sizes == {"NOUN": 2, "VERB": 2}
        assert report.to_records()[-1]["tag"] == "ALL"

    def test_singletons_excluded_from_overall(self, toy_vocab, rng):
        table = EmbeddingTable(rng.normal(size=(len(toy_vocab.words), 3)), toy_vocab.word_weights())
        test = make_corpus([[("dog", "NOUN"), ("ran", "VERB")]])
        report = cluster_tightness(table, compute_stats(table), test, toy_vocab)
        assert report.clusters == {}
        assert report.overall is None
        assert format_tightness([report]).splitlines()[1].split() == ["model", "-"]

    def test_normalized_needs_stats(self, toy_vocab):
        table = EmbeddingTable(np.ones((len(toy_vocab.words), 2)), toy_vocab.word_weights())
        with pytest.raises(ValueError):
            cluster_tightness(table, None, make_corpus([[("dog", "NOUN")]]), toy_vocab)

    def test_random_clusters_match_pairwise_mean(self, rng):
        for _ in range(20):
            sizes = rng.integers(2, 11, size=3)
            sentence = [(f"w{t}x{i}", f"T{t}") for t, size in enumerate(sizes) for i in range(size)]
            test = make_corpus([sentence])
            vocab = build_vocab(test)
            table = EmbeddingTable(rng.normal(size=(len(vocab.words), 5)), vocab.word_weights())
            report = cluster_tightness(table, None, test, vocab, normalized=False)
            for t, size in enumerate(sizes):
                rows = [table.matrix[vocab.words[f"w{t}x{i}"]] for i in range(size)]
                cosines = [a @ b / (np.linalg.norm(a) * np.linalg.norm(b)) for a, b in itertools.combinations(rows, 2)]
                assert report.sizes[f"T{t}"] == size
                assert report.clusters[f"T{t}"] == pytest.approx(np.mean(cosines), abs=1e-12)

    @pytest.mark.parametrize("scale", [1e-3, 0.5, 7.0])
    def test_invariant_to_scaling_vectors(self, rng, scale):
        sentence = [(f"w{i}", "AB"[i % 2]) for i in range(16)]
        test = make_corpus([sentence])
        vocab = build_vocab(test)
        table = EmbeddingTable(rng.normal(size=(len(vocab.words), 4)), vocab.word_weights())
        scaled = EmbeddingTable(table.matrix * scale, table.weights)
        for normalized in (False, True):
            before = cluster_tightness(table, compute_stats(table), test, vocab, normalized=normalized)
            after = cluster_tightness(scaled, compute_stats(scaled), test, vocab, normalized=normalized)
            assert after.clusters == pytest.approx(before.clusters, abs=1e-10)
            assert after.overall == pytest.approx(before.overall, abs=1e-10)


def test_format_table():
    text = format_table(["Name", "Value"], [["a", 1], ["long", 100]])
    assert text.splitlines() == ["Name  Value", "a         1", "long    100"]
