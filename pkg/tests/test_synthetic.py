import numpy as np
import pytest

from adv_tagger.data import read_conllu, write_conllu
from adv_tagger.exceptions import TaggerError
from adv_tagger.synthetic import HmmSpec, deterministic_spec, generate, split_corpus, zipf_spec, zipf_weights


class TestSpec:
    def test_zipf_weights(self):
        weights = zipf_weights(3)
        np.testing.assert_allclose(weights, np.array([1.0, 0.5, 1 / 3]) / (11 / 6))

    def test_lexicons_are_disjoint(self):
        spec = zipf_spec(n_tags=5, vocab_size=103, seed=2)
        words = [w for lexicon in spec.lexicons for w in lexicon]
        assert len(words) == 103
        assert len(set(words)) == 103

    def test_same_seed_same_spec(self):
        a, b = zipf_spec(seed=3), zipf_spec(seed=3)
        assert a.lexicons == b.lexicons
        np.testing.assert_array_equal(a.transitions, b.transitions)

    def test_rows_must_sum_to_one(self):
        with pytest.raises(TaggerError):
            HmmSpec(
                tags=("A", "B"),
                initial=np.array([0.5, 0.5]),
                transitions=np.array([[0.5, 0.5], [0.9, 0.2]]),
                lexicons=(("a",), ("b",)),
                emissions=(np.ones(1), np.ones(1)),
            )

    def test_lexicon_must_match_emissions(self):
        with pytest.raises(TaggerError):
            HmmSpec(
                tags=("A",),
                initial=np.ones(1),
                transitions=np.ones((1, 1)),
                lexicons=(("a", "b"),),
                emissions=(np.ones(1),),
            )

    def test_too_few_words(self):
        with pytest.raises(TaggerError):
            zipf_spec(n_tags=8, vocab_size=4)


class TestGenerate:
    def test_same_seed_same_corpus(self):
        spec = zipf_spec(seed=1)
        assert generate(spec, 20, max_len=8) == generate(spec, 20, max_len=8)
        assert generate(spec, 20, max_len=8, seed=5) != generate(spec, 20, max_len=8, seed=6)

    def test_lengths_in_range(self):
        corpus = generate(zipf_spec(seed=1), 200, max_len=6, min_len=3)
        assert {len(s) for s in corpus} <= {3, 4, 5, 6}

    def test_words_come_from_their_tag_lexicon(self):
        spec = zipf_spec(n_tags=4, vocab_size=40, seed=4)
        lexicon = dict(zip(spec.tags, spec.lexicons))
        for sentence in generate(spec, 50, max_len=10):
            for token in sentence:
                assert token.form in lexicon[token.tag]

    def test_transition_frequencies(self):
        spec = deterministic_spec(n_tags=4, seed=9)
        corpus = generate(spec, 5000, max_len=20, min_len=10)
        index = {tag: i for i, tag in enumerate(spec.tags)}
        counts = np.zeros((4, 4))
        for tags in corpus.tag_sequences():
            for a, b in zip(tags[:-1], tags[1:]):
                counts[index[a], index[b]] += 1
        estimated = counts / counts.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(estimated, spec.transitions, atol=0.02)

    def test_round_trips_through_conllu(self, tmp_path):
        corpus = generate(zipf_spec(seed=2), 30, max_len=12)
        path = tmp_path / "train.conllu"
        write_conllu(corpus, path)
        assert read_conllu(path) == corpus

    @pytest.mark.parametrize("kwargs", [{"n_sentences": -1}, {"min_len": 0}, {"min_len": 9}])
    def test_bad_arguments(self, kwargs):
        arguments = dict(n_sentences=5, max_len=8)
        arguments.update(kwargs)
        with pytest.raises(TaggerError):
            generate(deterministic_spec(), **arguments)


class TestSplit:
    def test_consecutive_slices(self):
        corpus = generate(deterministic_spec(), 10, max_len=3)
        train, dev, test = split_corpus(corpus, [6, 2, 2])
        assert train.sentences + dev.sentences + test.sentences == corpus.sentences

    def test_too_many_requested(self):
        with pytest.raises(TaggerError):
            split_corpus(generate(deterministic_spec(), 3, max_len=3), [2, 2])
