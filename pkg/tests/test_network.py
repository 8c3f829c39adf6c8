import numpy as np
import pytest

from adv_tagger import autodiff as ad
from adv_tagger import network
from adv_tagger.crf import nll
from adv_tagger.data import build_vocab
from adv_tagger.embeddings import EmbeddingTable
from adv_tagger.exceptions import ShapeMismatchError, TaggerError
from adv_tagger.network import (
    DropoutMasks,
    LstmParams,
    TaggerArchitecture,
    TaggerModel,
    architecture_for,
    char_representation,
    encode_sentence,
    lstm_cell,
    project_inputs,
    run_lstm,
)
from adv_tagger.synthetic import generate, zipf_spec
from helpers import tiny_arch

STEP = 1e-5
TOLERANCE = 1e-5

WORDS = ["The", "dog", "sat"]


def loss_and_grads(model, words, tags, masks=None, perturbation=None):
    tape = ad.Tape()
    bound = model.bind(tape)
    encoding = encode_sentence(bound, words, masks, perturbation)
    loss = nll(encoding.emissions, bound.crf, model.vocab.tag_ids(tags))
    return loss.item(), tape.backward(loss), encoding


def numeric_derivative(evaluate, array, index):
    saved = array[index]
    array[index] = saved + STEP
    plus = evaluate()
    array[index] = saved - STEP
    minus = evaluate()
    array[index] = saved
    return (plus - minus) / (2 * STEP)


class TestArchitecture:
    def test_token_dim(self):
        assert TaggerArchitecture(word_dim=100, char_hidden=50).token_dim == 200

    def test_profiles(self):
        assert architecture_for("english", 100, 5).word_hidden == 200
        assert architecture_for("other", 100, 5).word_hidden == 150
        assert architecture_for("low", 100, 5).word_hidden == 100

    def test_unknown_profile(self):
        with pytest.raises(TaggerError):
            architecture_for("huge", 100, 5)

    def test_sizes_must_be_positive(self):
        with pytest.raises(TaggerError):
            TaggerArchitecture(word_hidden=0)

    def test_tag_count_must_match_vocab(self, toy_vocab):
        with pytest.raises(TaggerError):
            TaggerModel.initialize(tiny_arch(len(toy_vocab.tags) + 1), toy_vocab)


class TestLstm:
    def test_forget_bias_is_one(self, rng):
        params = LstmParams.init(rng, 3, 2)
        np.testing.assert_array_equal(params.b, [0, 0, 1, 1, 0, 0, 0, 0])

    def test_cell_with_zero_weights(self):
        params = LstmParams(np.zeros((8, 3)), np.zeros((8, 2)), np.zeros(8))
        tape = ad.Tape()
        h, c = lstm_cell(tape.input(np.ones(3)), np.zeros(2), np.full(2, 4.0), params)
        # all gates 0.5, candidate 0: c = 0.5 * 4
        np.testing.assert_allclose(c.data, [2.0, 2.0])
        np.testing.assert_allclose(h.data, 0.5 * np.tanh([2.0, 2.0]))

    def test_cell_rejects_wrong_state(self, rng):
        params = LstmParams.init(rng, 3, 2)
        with pytest.raises(ShapeMismatchError):
            lstm_cell(ad.Tape().input(np.ones(3)), np.zeros(3), np.zeros(2), params)

    def test_reverse_equals_forward_on_reversed_input(self, rng):
        params = LstmParams.init(rng, 3, 4)
        inputs = rng.normal(size=(5, 3))
        tape = ad.Tape()
        backward = run_lstm(project_inputs(tape.input(inputs), params), params, reverse=True)
        forward = run_lstm(project_inputs(tape.input(inputs[::-1].copy()), params), params)
        for t in range(5):
            np.testing.assert_allclose(backward[t].data, forward[4 - t].data, atol=1e-14)

    def test_cell_matches_sequence_runner(self, rng):
        params = LstmParams.init(rng, 3, 2)
        inputs = rng.normal(size=(2, 3))
        tape = ad.Tape()
        h, c = lstm_cell(tape.input(inputs[0]), np.zeros(2), np.zeros(2), params)
        h, _ = lstm_cell(tape.input(inputs[1]), h, c, params)
        states = run_lstm(project_inputs(tape.input(inputs), params), params)
        np.testing.assert_allclose(states[-1].data, h.data, atol=1e-12)

    def test_char_representation(self, rng):
        fwd, bwd = LstmParams.init(rng, 3, 2), LstmParams.init(rng, 3, 2)
        rows = ad.Tape().input(rng.normal(size=(4, 3)))
        rep = char_representation(rows, fwd, bwd)
        assert rep.shape == (4,)
        np.testing.assert_allclose(rep.data[:2], run_lstm(project_inputs(rows, fwd), fwd)[-1].data)
        np.testing.assert_allclose(rep.data[2:], run_lstm(project_inputs(rows, bwd), bwd, reverse=True)[0].data)

    def test_char_representation_of_empty_word(self, rng):
        params = LstmParams.init(rng, 3, 2)
        with pytest.raises(TaggerError):
            char_representation(ad.Tape().input(np.zeros((0, 3))), params, params)

    def test_plain_params_match_bound_params(self, rng):
        fwd, bwd = LstmParams.init(rng, 3, 2), LstmParams.init(rng, 3, 2)
        chars = rng.normal(size=(5, 3))
        plain = char_representation(ad.Tape().input(chars), fwd, bwd)
        tape = ad.Tape()
        bound = char_representation(tape.input(chars), fwd.bind(tape, "fwd"), bwd.bind(tape, "bwd"))
        np.testing.assert_array_equal(plain.data, bound.data)
        grads = tape.backward(ad.total(bound)).by_name()
        assert set(grads) >= {"fwd.w_ih", "fwd.w_hh", "fwd.b", "bwd.w_ih", "bwd.w_hh", "bwd.b"}

    def test_palindrome_with_tied_directions(self, rng):
        params = LstmParams.init(rng, 3, 4)
        a, b, c = rng.normal(size=(3, 3))
        rep = char_representation(ad.Tape().input(np.stack([a, b, c, b, a])), params, params)
        np.testing.assert_allclose(rep.data[:4], rep.data[4:], atol=1e-14)


class TestEncoding:
    def test_shapes(self, toy_model):
        _, _, encoding = loss_and_grads(toy_model, WORDS, ["DET", "NOUN", "VERB"])
        arch = toy_model.arch
        assert encoding.emissions.shape == (3, arch.tag_count)
        assert encoding.input_dim == 3 * arch.word_dim + len("Thedogsat") * arch.char_dim

    def test_empty_sentence(self, toy_model):
        with pytest.raises(TaggerError):
            encode_sentence(toy_model.bind(ad.Tape()), [])

    def test_empty_word(self, toy_model):
        with pytest.raises(TaggerError):
            toy_model.predict(["dog", ""])

    def test_perturbation_dimension_checked(self, toy_model):
        with pytest.raises(ShapeMismatchError):
            encode_sentence(toy_model.bind(ad.Tape()), WORDS, perturbation=np.zeros(3))

    def test_zero_perturbation_changes_nothing(self, toy_model):
        tags = ["DET", "NOUN", "VERB"]
        clean, _, encoding = loss_and_grads(toy_model, WORDS, tags)
        shifted, _, _ = loss_and_grads(toy_model, WORDS, tags, perturbation=np.zeros(encoding.input_dim))
        assert shifted == clean

    def test_each_word_goes_through_char_representation(self, toy_model, monkeypatch):
        seen = []
        original = network.char_representation

        def recording(rows, fwd, bwd):
            seen.append(rows.shape[0])
            return original(rows, fwd, bwd)

        monkeypatch.setattr(network, "char_representation", recording)
        encode_sentence(toy_model.bind(ad.Tape()), WORDS)
        assert seen == [len(w) for w in WORDS]

    def test_reversed_sentence_with_swapped_directions(self, toy_model):
        h = toy_model.arch.word_hidden
        swapped = toy_model.copy()
        swapped.word_fwd, swapped.word_bwd = toy_model.word_bwd, toy_model.word_fwd
        swapped.proj_w = np.vstack([toy_model.proj_w[h:], toy_model.proj_w[:h]])
        words = ["A", "dog", "ran", "fast"]
        emissions = encode_sentence(toy_model.bind(ad.Tape()), words).emissions.data
        reversed_emissions = encode_sentence(swapped.bind(ad.Tape()), words[::-1]).emissions.data
        np.testing.assert_allclose(reversed_emissions, emissions[::-1], atol=1e-12)

    def test_unknown_words_and_chars(self, toy_model):
        assert len(toy_model.predict(["Zebra", "quux"])) == 2

    def test_predict_uses_tag_names(self, toy_model, toy_corpus):
        tagged = toy_model.tag_corpus(toy_corpus)
        assert [len(s) for s in tagged] == [len(s) for s in toy_corpus]
        assert all(tag in toy_model.vocab.tags for s in tagged for tag in s.tags)


def random_instance(seed):
    """A fresh model and one sentence of at most 5 tokens over at most 4 tags."""
    rng = np.random.default_rng(seed)
    n_tags = int(rng.integers(2, 5))
    spec = zipf_spec(n_tags=n_tags, vocab_size=4 * n_tags, seed=seed)
    corpus = generate(spec, 6, max_len=5, seed=seed)
    vocab = build_vocab(corpus)
    model = TaggerModel.initialize(tiny_arch(len(vocab.tags)), vocab, seed=seed)
    sentence = corpus[int(rng.integers(len(corpus)))]
    masks = DropoutMasks.sample(rng, len(sentence), model.arch, 0.3)
    return model, sentence, masks


def indices(shape, rng, sample):
    if sample is None:
        return list(np.ndindex(*shape))
    return [tuple(int(rng.integers(s)) for s in shape) for _ in range(sample)]


def worst_gradient_error(model, sentence, masks, rng, sample=None):
    """Largest |analytic - numeric| / max(1, |analytic|) over parameters and the input embeddings s."""
    words, tags = sentence.forms, sentence.tags
    _, grads, encoding = loss_and_grads(model, words, tags, masks)
    named = grads.by_name()

    def evaluate():
        return loss_and_grads(model, words, tags, masks)[0]

    worst = 0.0
    for name, array in model.parameters().items():
        for index in indices(array.shape, rng, sample):
            analytic = named[name][index]
            numeric = numeric_derivative(evaluate, array, index)
            worst = max(worst, abs(analytic - numeric) / max(1.0, abs(analytic)))

    gradient = encoding.flatten(grads)
    for (coordinate,) in indices((encoding.input_dim,), rng, sample):
        def evaluate_at(offset):
            eta = np.zeros(encoding.input_dim)
            eta[coordinate] = offset
            return loss_and_grads(model, words, tags, masks, perturbation=eta)[0]

        numeric = (evaluate_at(STEP) - evaluate_at(-STEP)) / (2 * STEP)
        worst = max(worst, abs(gradient[coordinate] - numeric) / max(1.0, abs(gradient[coordinate])))
    return worst


class TestGradients:
    @pytest.mark.parametrize("seed", range(20))
    def test_random_instance_sampled_coordinates(self, seed):
        model, sentence, masks = random_instance(seed)
        assert worst_gradient_error(model, sentence, masks, np.random.default_rng(seed), sample=2) < TOLERANCE

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_random_instance_every_coordinate(self, seed):
        model, sentence, masks = random_instance(seed)
        assert worst_gradient_error(model, sentence, masks, np.random.default_rng(seed)) < TOLERANCE

    def test_frozen_tables_get_input_gradients_only(self, toy_vocab):
        arch = tiny_arch(len(toy_vocab.tags))
        frozen = EmbeddingTable(np.ones((len(toy_vocab.words), arch.word_dim)), toy_vocab.word_weights(), trainable=False)
        model = TaggerModel.initialize(arch, toy_vocab, seed=5, word_table=frozen)
        assert "word_embeddings" not in model.parameters()
        _, grads, encoding = loss_and_grads(model, WORDS, ["DET", "NOUN", "VERB"])
        assert grads[encoding.words.id].shape == (3, arch.word_dim)


class TestModel:
    def test_same_seed_same_parameters(self, toy_vocab):
        arch = tiny_arch(len(toy_vocab.tags))
        a = TaggerModel.initialize(arch, toy_vocab, seed=11).parameters()
        b = TaggerModel.initialize(arch, toy_vocab, seed=11).parameters()
        assert list(a) == list(b)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_copy_is_independent(self, toy_model):
        clone = toy_model.copy()
        clone.proj_b += 1.0
        assert not np.array_equal(clone.proj_b, toy_model.proj_b)

    def test_char_frequency_weighting(self, toy_corpus):
        vocab = build_vocab(toy_corpus)
        model = TaggerModel.initialize(tiny_arch(len(vocab.tags)), vocab, char_frequency_weighting=True)
        np.testing.assert_array_equal(model.char_table.weights, vocab.char_weights(by_frequency=True))
