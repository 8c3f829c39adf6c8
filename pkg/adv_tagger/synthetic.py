"""
Seeded HMM corpus generator for desk-scale experiments.

Example usage:
    >>> spec = zipf_spec(n_tags=8, vocab_size=500, seed=7)
    >>> train = generate(spec, 2000, max_len=20)
    >>> write_conllu(train, "train.conllu")
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import CONLLU, CONLLU_COLUMNS, CONLLU_FORM, CONLLU_UPOS, Corpus, Sentence, Token
from .exceptions import TaggerError

logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12

TAG_NAMES = ("NOUN", "VERB", "ADJ", "ADV", "DET", "ADP", "PRON", "NUM", "CONJ", "PRT", "PUNCT", "X")
CONSONANTS = "bcdfghjklmnprstvz"
VOWELS = "aeiou"


def _stochastic(matrix: np.ndarray, what: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=np.float64)
    if np.any(matrix < 0) or np.any(np.abs(matrix.sum(axis=-1) - 1.0) > ROW_TOLERANCE):
        raise TaggerError(f"{what} must be nonnegative with rows summing to 1")
    return matrix


@dataclass(frozen=True)
class HmmSpec:
    """
    Tag HMM: initial and transition distributions over k tags, and for each
    tag a lexicon with emission probabilities.
    """
    tags: Tuple[str, ...]
    initial: np.ndarray
    transitions: np.ndarray
    lexicons: Tuple[Tuple[str, ...], ...]
    emissions: Tuple[np.ndarray, ...]
    seed: int = 0

    def __post_init__(self):
        k = len(self.tags)
        if k < 1 or len(set(self.tags)) != k:
            raise TaggerError("tag set must be non-empty with distinct names")
        object.__setattr__(self, "initial", _stochastic(self.initial, "initial distribution"))
        object.__setattr__(self, "transitions", _stochastic(self.transitions, "transition matrix"))
        if self.initial.shape != (k,) or self.transitions.shape != (k, k):
            raise TaggerError(f"distributions do not match {k} tags")
        if len(self.lexicons) != k or len(self.emissions) != k:
            raise TaggerError(f"need one lexicon and emission distribution per tag, got {len(self.lexicons)}")
        emissions = []
        for tag, words, probs in zip(self.tags, self.lexicons, self.emissions):
            probs = _stochastic(probs, f"emissions of {tag}")
            if not words or probs.shape != (len(words),):
                raise TaggerError(f"lexicon of {tag} is empty or does not match its emissions")
            emissions.append(probs)
        object.__setattr__(self, "emissions", tuple(emissions))

    @property
    def tag_count(self) -> int:
        return len(self.tags)


def tag_names(n_tags: int) -> Tuple[str, ...]:
    if n_tags <= len(TAG_NAMES):
        return TAG_NAMES[:n_tags]
    return tuple(f"T{i}" for i in range(n_tags))


def _normalized(weights: np.ndarray) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim == 1:
        return weights / weights.sum()
    return weights / weights.sum(axis=1, keepdims=True)


def zipf_weights(n: int, exponent: float = 1.0) -> np.ndarray:
    """p(rank r) proportional to 1 / r^exponent for r = 1..n."""
    return _normalized(1.0 / np.arange(1, n + 1) ** exponent)


def _stem(rng: np.random.Generator, syllables: int) -> str:
    return "".join(rng.choice(list(CONSONANTS)) + rng.choice(list(VOWELS)) for _ in range(syllables))


def zipf_spec(
    n_tags: int = 8,
    vocab_size: int = 500,
    seed: int = 0,
    exponent: float = 1.0,
    concentration: float = 1.0,
) -> HmmSpec:
    """
    Random HMM with disjoint per-tag lexicons and Zipfian emission weights.

    Every word of a tag ends in a tag-specific suffix, so characters carry
    the tag of words that are rare or unseen in training.

    Args:
        n_tags (int): Number of tags k.
        vocab_size (int): Total lexicon size, split evenly across tags.
        seed (int): Seed for the structure and, later, for generate().
        exponent (float): Zipf exponent of the emission weights.
        concentration (float): Dirichlet concentration of the tag distributions.
    """
    if n_tags < 1 or vocab_size < n_tags:
        raise TaggerError(f"need vocab_size >= n_tags >= 1, got {vocab_size} and {n_tags}")
    rng = np.random.default_rng(seed)
    tags = tag_names(n_tags)
    suffixes: List[str] = []
    while len(suffixes) < n_tags:
        suffix = _stem(rng, 1) + rng.choice(list(CONSONANTS))
        if suffix not in suffixes:
            suffixes.append(suffix)

    seen = set()
    lexicons = []
    emissions = []
    for index in range(n_tags):
        size = vocab_size // n_tags + (index < vocab_size % n_tags)
        words: List[str] = []
        while len(words) < size:
            word = _stem(rng, int(rng.integers(1, 4))) + suffixes[index]
            if word not in seen:
                seen.add(word)
                words.append(word)
        lexicons.append(tuple(words))
        emissions.append(zipf_weights(size, exponent))

    return HmmSpec(
        tags=tags,
        initial=_normalized(rng.dirichlet(np.full(n_tags, concentration))),
        transitions=_normalized(rng.dirichlet(np.full(n_tags, concentration), size=n_tags)),
        lexicons=tuple(lexicons),
        emissions=tuple(emissions),
        seed=seed,
    )


def deterministic_spec(n_tags: int = 4, seed: int = 0) -> HmmSpec:
    """One word per tag: the tag of every token is readable off its form."""
    rng = np.random.default_rng(seed)
    tags = tag_names(n_tags)
    return HmmSpec(
        tags=tags,
        initial=_normalized(rng.dirichlet(np.ones(n_tags))),
        transitions=_normalized(rng.dirichlet(np.ones(n_tags), size=n_tags)),
        lexicons=tuple((f"w{tag.lower()}",) for tag in tags),
        emissions=tuple(np.ones(1) for _ in tags),
        seed=seed,
    )


def _token(index: int, form: str, tag: str) -> Token:
    fields = ["_"] * CONLLU_COLUMNS
    fields[0] = str(index)
    fields[CONLLU_FORM] = form
    fields[CONLLU_UPOS] = tag
    return Token(form, tag, tuple(fields))


def generate(
    spec: HmmSpec,
    n_sentences: int,
    max_len: int,
    min_len: int = 1,
    seed: Optional[int] = None,
) -> Corpus:
    """
    Samples sentences from the HMM.

    Lengths are uniform in [min_len, max_len]. The same spec and seed always
    give the same corpus.

    Args:
        spec (HmmSpec): The generating model.
        n_sentences (int): Number of sentences, at least 0.
        max_len (int): Longest sentence length.
        min_len (int): Shortest sentence length, at least 1.
        seed (Optional[int]): Overrides spec.seed, e.g. to draw separate splits.

    Returns:
        Corpus: A CoNLL-U corpus with the tag in the UPOS column.
    """
    if n_sentences < 0 or not 1 <= min_len <= max_len:
        raise TaggerError(f"bad corpus size {n_sentences} or length range [{min_len}, {max_len}]")
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    k = spec.tag_count
    sentences = []
    for number in range(n_sentences):
        length = int(rng.integers(min_len, max_len + 1))
        tokens = []
        tag = int(rng.choice(k, p=spec.initial))
        for position in range(length):
            if position:
                tag = int(rng.choice(k, p=spec.transitions[tag]))
            word = spec.lexicons[tag][int(rng.choice(len(spec.lexicons[tag]), p=spec.emissions[tag]))]
            tokens.append(_token(position + 1, word, spec.tags[tag]))
        sentences.append(Sentence(tuple(tokens), (f"# sent_id = {number + 1}",)))
    logger.info(f"Generated {n_sentences} sentences over {k} tags")
    return Corpus(tuple(sentences), CONLLU)


def split_corpus(corpus: Corpus, sizes: Sequence[int]) -> List[Corpus]:
    """Consecutive train/dev/test style slices of a generated corpus."""
    if sum(sizes) > len(corpus):
        raise TaggerError(f"requested {sum(sizes)} sentences from a corpus of {len(corpus)}")
    parts = []
    start = 0
    for size in sizes:
        parts.append(Corpus(corpus.sentences[start:start + size], corpus.format, corpus.token_col, corpus.tag_col))
        start += size
    return parts
