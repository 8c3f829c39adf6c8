import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .crf import CrfParams, viterbi
from .data import Corpus, Sentence, Vocab
from .embeddings import EmbeddingTable, NormalizationStats, compute_stats, init_random, normalized_lookup
from .exceptions import ShapeMismatchError, TaggerError

logger = logging.getLogger(__name__)

WORD_HIDDEN_BY_PROFILE = {"english": 200, "other": 150, "low": 100}

Words = Union[Sentence, Sequence[str]]


@dataclass
class TaggerArchitecture:
    char_dim: int = 30
    char_hidden: int = 50
    word_dim: int = 100
    word_hidden: int = 200
    tag_count: int = 1

    def __post_init__(self):
        for name in ("char_dim", "char_hidden", "word_dim", "word_hidden", "tag_count"):
            if getattr(self, name) < 1:
                raise TaggerError(f"architecture field {name} must be >= 1, got {getattr(self, name)}")

    @property
    def token_dim(self) -> int:
        """Width of one token representation fed to the word-level BiLSTM."""
        return self.word_dim + 2 * self.char_hidden

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def architecture_for(profile: str, word_dim: int, tag_count: int) -> TaggerArchitecture:
    """Size presets: english 200, other languages 150, low-resource 100 word-level units."""
    if profile not in WORD_HIDDEN_BY_PROFILE:
        raise TaggerError(f"unknown resource profile {profile!r}")
    return TaggerArchitecture(word_dim=word_dim, word_hidden=WORD_HIDDEN_BY_PROFILE[profile], tag_count=tag_count)


@dataclass
class LstmParams:
    """Gate order along the 4h axis: input, forget, output, candidate."""
    w_ih: Any
    w_hh: Any
    b: Any

    @property
    def hidden(self) -> int:
        return self.w_hh.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, input_dim: int, hidden: int) -> "LstmParams":
        bound = np.sqrt(6.0 / (input_dim + 4 * hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        return cls(
            rng.uniform(-bound, bound, size=(4 * hidden, input_dim)),
            rng.uniform(-bound, bound, size=(4 * hidden, hidden)),
            b,
        )

    def named_arrays(self, prefix: str) -> Dict[str, Any]:
        return {f"{prefix}.w_ih": self.w_ih, f"{prefix}.w_hh": self.w_hh, f"{prefix}.b": self.b}

    def bind(self, tape: ad.Tape, prefix: str) -> "LstmParams":
        return LstmParams(*(tape.parameter(a, n) for n, a in self.named_arrays(prefix).items()))


def _lstm_step(projected: ad.Tensor, h_prev: ad.Operand, c_prev: ad.Operand, params: LstmParams) -> Tuple[ad.Tensor, ad.Tensor]:
    hidden = params.hidden
    tape = projected.tape
    z = ad.add(projected, ad.matmul(tape.lift(params.w_hh), tape.lift(h_prev)))
    gates = ad.sigmoid(ad.slice(z, slice(0, 3 * hidden)))
    candidate = ad.tanh(ad.slice(z, slice(3 * hidden, 4 * hidden)))
    i = ad.slice(gates, slice(0, hidden))
    f = ad.slice(gates, slice(hidden, 2 * hidden))
    o = ad.slice(gates, slice(2 * hidden, 3 * hidden))
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, candidate))
    h = ad.mul(o, ad.tanh(c))
    return h, c


def lstm_cell(x: ad.Tensor, h_prev: ad.Operand, c_prev: ad.Operand, params: LstmParams) -> Tuple[ad.Tensor, ad.Tensor]:
    """
    One LSTM step.

    i, f, o = sigmoid(W_ih x + W_hh h_prev + b) slices; g = tanh of the last slice;
    c = f * c_prev + i * g; h = o * tanh(c).

    Raises:
        ShapeMismatchError: If x, h_prev or c_prev do not match the weights.
    """
    hidden = params.hidden
    for name, state in (("h_prev", h_prev), ("c_prev", c_prev)):
        shape = state.shape if hasattr(state, "shape") else np.shape(state)
        if tuple(shape) != (hidden,):
            raise ShapeMismatchError(f"lstm_cell {name}", shape, (hidden,))
    projected = ad.add(ad.matmul(params.w_ih, x), params.b)
    return _lstm_step(projected, h_prev, c_prev, params)


def project_inputs(inputs: ad.Tensor, params: LstmParams) -> ad.Tensor:
    """W_ih x_t + b for every row of a T x in matrix at once."""
    tape = inputs.tape
    return ad.add(ad.matmul(inputs, ad.transpose(tape.lift(params.w_ih))), tape.lift(params.b))


def run_lstm(projected: ad.Tensor, params: LstmParams, reverse: bool = False) -> List[ad.Tensor]:
    """Hidden states of one direction, in sequence order, from precomputed input projections."""
    steps = projected.shape[0]
    h = np.zeros(params.hidden)
    c = np.zeros(params.hidden)
    states: List[Optional[ad.Tensor]] = [None] * steps
    for t in (range(steps - 1, -1, -1) if reverse else range(steps)):
        h, c = _lstm_step(ad.slice(projected, t), h, c, params)
        states[t] = h
    return states


def char_representation(char_rows: ad.Tensor, char_fwd: LstmParams, char_bwd: LstmParams) -> ad.Tensor:
    """
    Concatenated final states of a character BiLSTM over one word.

    Args:
        char_rows (Tensor): len(word) x char_dim embeddings of the word's characters.

    Returns:
        Tensor: [h_fwd at the last char, h_bwd at the first char].
    """
    if char_rows.shape[0] < 1:
        raise TaggerError("cannot build a character representation of an empty word")
    forward = run_lstm(project_inputs(char_rows, char_fwd), char_fwd)
    backward = run_lstm(project_inputs(char_rows, char_bwd), char_bwd, reverse=True)
    return ad.concat([forward[-1], backward[0]])


@dataclass
class DropoutMasks:
    """Inverted-dropout masks for one sentence: token inputs and word-BiLSTM outputs."""
    inputs: np.ndarray
    outputs: np.ndarray

    @classmethod
    def ones(cls, n: int, arch: TaggerArchitecture) -> "DropoutMasks":
        return cls(np.ones((n, arch.token_dim)), np.ones((n, 2 * arch.word_hidden)))

    @classmethod
    def sample(cls, rng: np.random.Generator, n: int, arch: TaggerArchitecture, rate: float) -> "DropoutMasks":
        if rate <= 0.0:
            return cls.ones(n, arch)
        keep = 1.0 - rate
        return cls(
            (rng.random((n, arch.token_dim)) < keep) / keep,
            (rng.random((n, 2 * arch.word_hidden)) < keep) / keep,
        )


@dataclass
class BoundModel:
    """Model parameters recorded as leaves of one tape."""
    tape: ad.Tape
    model: "TaggerModel"
    word_table: ad.Tensor
    char_table: ad.Tensor
    char_fwd: LstmParams
    char_bwd: LstmParams
    word_fwd: LstmParams
    word_bwd: LstmParams
    proj_w: ad.Tensor
    proj_b: ad.Tensor
    crf: CrfParams

    def parameter_ids(self) -> Dict[str, int]:
        return {t.name: t.id for t in self.tape.leaves(ad.PARAMETER)}


@dataclass
class Encoding:
    """
    Emissions of one sentence plus the watched input embeddings s.

    s is laid out as [w_1, ..., w_n, c_1, ..., c_m] (row-major), so its
    dimension is D = n * word_dim + m * char_dim.
    """
    emissions: ad.Tensor
    words: ad.Tensor
    chars: ad.Tensor

    @property
    def input_dim(self) -> int:
        return self.words.size + self.chars.size

    def flatten(self, grads: Dict[int, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[self.words.id].ravel(), grads[self.chars.id].ravel()])

    def split(self, flat: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        cut = self.words.size
        return flat[:cut].reshape(self.words.shape), flat[cut:].reshape(self.chars.shape)


@dataclass
class TaggerModel:
    """
    All trainable state of the BiLSTM-CRF tagger (theta plus embedding tables).

    Example usage:
        >>> model = TaggerModel.initialize(arch, vocab, seed=1)
        >>> model.predict(["The", "cat", "sat"])
        ['DET', 'NOUN', 'VERB']
    """
    arch: TaggerArchitecture
    vocab: Vocab
    word_table: EmbeddingTable
    char_table: EmbeddingTable
    char_fwd: LstmParams
    char_bwd: LstmParams
    word_fwd: LstmParams
    word_bwd: LstmParams
    proj_w: np.ndarray
    proj_b: np.ndarray
    crf: CrfParams
    char_frequency_weighting: bool = False
    word_stats: Optional[NormalizationStats] = field(default=None, repr=False)
    char_stats: Optional[NormalizationStats] = field(default=None, repr=False)

    @classmethod
    def initialize(
        cls,
        arch: TaggerArchitecture,
        vocab: Vocab,
        seed: int = 0,
        word_table: Optional[EmbeddingTable] = None,
        char_frequency_weighting: bool = False,
    ) -> "TaggerModel":
        """
        Randomly initializes every parameter from one seed.

        Args:
            arch (TaggerArchitecture): Sizes; tag_count must match the vocabulary.
            vocab (Vocab): Vocabulary built from the training split.
            seed (int): Seed for all random draws.
            word_table (Optional[EmbeddingTable]): Pretrained word vectors, if any.
            char_frequency_weighting (bool): Weight character moments by train counts.
        """
        if arch.tag_count != len(vocab.tags):
            raise TaggerError(f"architecture has {arch.tag_count} tags, vocabulary has {len(vocab.tags)}")
        rng = np.random.default_rng(seed)
        if word_table is None:
            word_table = init_random(len(vocab.words), arch.word_dim, int(rng.integers(2**31)), vocab.word_weights())
        elif word_table.matrix.shape != (len(vocab.words), arch.word_dim):
            raise TaggerError(
                f"word table shape {word_table.matrix.shape} does not fit ({len(vocab.words)}, {arch.word_dim})"
            )
        char_table = init_random(
            len(vocab.chars), arch.char_dim, int(rng.integers(2**31)), vocab.char_weights(char_frequency_weighting)
        )
        bound = np.sqrt(6.0 / (2 * arch.word_hidden + arch.tag_count))
        model = cls(
            arch=arch,
            vocab=vocab,
            word_table=word_table,
            char_table=char_table,
            char_fwd=LstmParams.init(rng, arch.char_dim, arch.char_hidden),
            char_bwd=LstmParams.init(rng, arch.char_dim, arch.char_hidden),
            word_fwd=LstmParams.init(rng, arch.token_dim, arch.word_hidden),
            word_bwd=LstmParams.init(rng, arch.token_dim, arch.word_hidden),
            proj_w=rng.uniform(-bound, bound, size=(2 * arch.word_hidden, arch.tag_count)),
            proj_b=np.zeros(arch.tag_count),
            crf=CrfParams.zeros(arch.tag_count),
            char_frequency_weighting=char_frequency_weighting,
        )
        model.refresh_stats()
        logger.debug(f"Initialized model with {sum(a.size for a in model.parameters().values())} parameters")
        return model

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live parameter arrays by name, in a fixed order; trainable tables included."""
        named: Dict[str, np.ndarray] = {}
        if self.word_table.trainable:
            named["word_embeddings"] = self.word_table.matrix
        if self.char_table.trainable:
            named["char_embeddings"] = self.char_table.matrix
        for prefix in ("char_fwd", "char_bwd", "word_fwd", "word_bwd"):
            named.update(getattr(self, prefix).named_arrays(prefix))
        named["proj.w"] = self.proj_w
        named["proj.b"] = self.proj_b
        named.update(self.crf.named_arrays())
        return named

    def refresh_stats(self) -> None:
        self.word_stats = compute_stats(self.word_table)
        self.char_stats = compute_stats(self.char_table)

    def copy(self) -> "TaggerModel":
        return copy.deepcopy(self)

    def bind(self, tape: ad.Tape) -> BoundModel:
        def table(emb: EmbeddingTable, name: str) -> ad.Tensor:
            return tape.parameter(emb.matrix, name) if emb.trainable else tape.constant(emb.matrix)

        return BoundModel(
            tape=tape,
            model=self,
            word_table=table(self.word_table, "word_embeddings"),
            char_table=table(self.char_table, "char_embeddings"),
            char_fwd=self.char_fwd.bind(tape, "char_fwd"),
            char_bwd=self.char_bwd.bind(tape, "char_bwd"),
            word_fwd=self.word_fwd.bind(tape, "word_fwd"),
            word_bwd=self.word_bwd.bind(tape, "word_bwd"),
            proj_w=tape.parameter(self.proj_w, "proj.w"),
            proj_b=tape.parameter(self.proj_b, "proj.b"),
            crf=self.crf.bind(tape),
        )

    def predict_ids(self, words: Words) -> List[int]:
        forms = words.forms if isinstance(words, Sentence) else list(words)
        encoding = encode_sentence(self.bind(ad.Tape()), forms)
        path, _ = viterbi(encoding.emissions.data, self.crf)
        return path

    def predict(self, words: Words) -> List[str]:
        names = self.vocab.tag_names
        return [names[i] for i in self.predict_ids(words)]

    def tag_corpus(self, corpus: Corpus) -> Corpus:
        """Returns a copy of the corpus with Viterbi tags in place of the gold ones."""
        return corpus.with_tags([self.predict(sentence) for sentence in corpus])


def _watch(tape: ad.Tape, tensor: ad.Tensor, name: str) -> ad.Tensor:
    # lookups into frozen tables fold to constants, which backward() never reaches
    if tensor.kind == ad.CONSTANT:
        return tape.input(tensor.data, name)
    return tape.watch(tensor, name)


def encode_sentence(
    bound: BoundModel,
    words: Words,
    masks: Optional[DropoutMasks] = None,
    perturbation: Optional[np.ndarray] = None,
) -> Encoding:
    """
    Runs the encoder over one sentence and returns its emission scores.

    Each token is the concatenation of its normalized word embedding and its
    character BiLSTM representation. Dropout is applied to these token inputs
    and to the word-BiLSTM outputs, and an affine projection gives the n x tag_count
    emissions. The normalized embeddings s are watched on the tape.

    Args:
        bound (BoundModel): Parameters bound to the tape to record on.
        words: A Sentence or a list of surface forms, at least one.
        masks (Optional[DropoutMasks]): Dropout masks; all-ones when omitted.
        perturbation (Optional[np.ndarray]): A constant of dimension D added to s.

    Returns:
        Encoding: Emissions and the watched word/char embedding tensors.
    """
    model = bound.model
    forms = words.forms if isinstance(words, Sentence) else list(words)
    if not forms:
        raise TaggerError("cannot encode an empty sentence")
    tape = bound.tape
    arch = model.arch
    vocab = model.vocab
    n = len(forms)
    masks = masks or DropoutMasks.ones(n, arch)

    char_ids: List[int] = []
    offsets: List[Tuple[int, int]] = []
    for form in forms:
        if not form:
            raise TaggerError("cannot encode an empty word")
        ids = vocab.char_ids(form)
        offsets.append((len(char_ids), len(char_ids) + len(ids)))
        char_ids.extend(ids)

    words_s = _watch(tape, normalized_lookup(bound.word_table, model.word_stats, vocab.word_ids(forms)), "s.words")
    chars_s = _watch(tape, normalized_lookup(bound.char_table, model.char_stats, char_ids), "s.chars")
    encoding = Encoding(emissions=None, words=words_s, chars=chars_s)

    word_in, char_in = words_s, chars_s
    if perturbation is not None:
        perturbation = np.asarray(perturbation, dtype=np.float64)
        if perturbation.shape != (encoding.input_dim,):
            raise ShapeMismatchError("perturbation", perturbation.shape, (encoding.input_dim,))
        eta_words, eta_chars = encoding.split(perturbation)
        word_in = ad.add(words_s, eta_words)
        char_in = ad.add(chars_s, eta_chars)

    tokens = []
    for t, (start, stop) in enumerate(offsets):
        chars = char_representation(ad.slice(char_in, slice(start, stop)), bound.char_fwd, bound.char_bwd)
        tokens.append(ad.concat([ad.slice(word_in, t), chars]))
    token_inputs = ad.dropout(ad.stack(tokens), masks.inputs)

    forward = run_lstm(project_inputs(token_inputs, bound.word_fwd), bound.word_fwd)
    backward = run_lstm(project_inputs(token_inputs, bound.word_bwd), bound.word_bwd, reverse=True)
    outputs = ad.stack([ad.concat([f, b]) for f, b in zip(forward, backward)])
    outputs = ad.dropout(outputs, masks.outputs)
    encoding.emissions = ad.add(ad.matmul(outputs, bound.proj_w), bound.proj_b)
    return encoding
