import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .data import PAD_ID, Vocab
from .exceptions import EmbeddingFormatError, LookupRangeError

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-6


def uniform_bound(d: int) -> float:
    return float(np.sqrt(3.0 / d))


@dataclass
class EmbeddingTable:
    """
    A V x d embedding matrix with per-row frequency weights.

    The weights drive the normalization moments; they are nonnegative and
    must not all be zero.
    """
    matrix: np.ndarray
    weights: np.ndarray
    trainable: bool = True

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise EmbeddingFormatError(f"embedding matrix must be 2-d, got shape {self.matrix.shape}")
        if self.weights.shape != (self.matrix.shape[0],):
            raise EmbeddingFormatError(
                f"{self.weights.shape[0]} weights for {self.matrix.shape[0]} rows"
            )
        if np.any(self.weights < 0) or self.weights.sum() <= 0:
            raise EmbeddingFormatError("frequency weights must be nonnegative with a positive sum")

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray

    @property
    def inv_std(self) -> np.ndarray:
        return 1.0 / self.std


def init_random(vocab_size: int, d: int, seed: int = 0, weights: Optional[np.ndarray] = None) -> EmbeddingTable:
    """
    Draws every entry uniformly in [-sqrt(3/d), +sqrt(3/d)].

    Args:
        vocab_size (int): Number of rows.
        d (int): Embedding dimension, at least 1.
        seed (int): Seed for the draw.
        weights (Optional[np.ndarray]): Frequency weights; uniform when omitted.
    """
    if d < 1:
        raise EmbeddingFormatError(f"embedding dimension must be >= 1, got {d}")
    bound = uniform_bound(d)
    matrix = np.random.default_rng(seed).uniform(-bound, bound, size=(vocab_size, d))
    return EmbeddingTable(matrix, np.ones(vocab_size) if weights is None else weights)


def load_pretrained(path: Union[str, Path], vocab: Vocab, d: int, seed: int = 0) -> EmbeddingTable:
    """
    Loads a text embedding file ("word v1 ... vd" per line) for the vocabulary.

    Rows of vocabulary words found in the file are copied; the rest keep a
    uniform random initialization. A leading "count dim" header is skipped.
    Lowercased file entries win over entries that only match after lowercasing.

    Raises:
        EmbeddingFormatError: If a line carries a vector of the wrong dimension.
    """
    table = init_random(len(vocab.words), d, seed, weights=vocab.word_weights())
    exact = set()
    found = 0
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except UnicodeDecodeError as e:
        raise EmbeddingFormatError(f"{path} is not valid UTF-8 ({e.reason} at byte {e.start})") from e
    for number, line in enumerate(lines, start=1):
        parts = line.rstrip("\n").rstrip().split(" ")
        if not parts or parts == [""]:
            continue
        if number == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
            continue
        word, values = parts[0], parts[1:]
        if len(values) != d:
            raise EmbeddingFormatError(f"expected {d} values, found {len(values)}", number)
        key = word.lower()
        index = vocab.words.get(key)
        if index is None or index in exact:
            continue
        try:
            table.matrix[index] = [float(v) for v in values]
        except ValueError as e:
            raise EmbeddingFormatError(str(e), number) from e
        if word == key:
            exact.add(index)
        found += 1
    logger.info(f"Pretrained vectors cover {len(exact)}/{len(vocab.words)} vocabulary words ({found} rows copied)")
    return table


def write_pretrained(table: EmbeddingTable, names: Sequence[str], target: Union[str, Path, IO[str]]) -> None:
    """Writes rows in the text format read by load_pretrained, losslessly."""
    owned = not hasattr(target, "write")
    stream = open(target, "w", encoding="utf-8") if owned else target
    try:
        for index, name in enumerate(names):
            if index == PAD_ID:
                continue
            stream.write(name + " " + " ".join(repr(float(v)) for v in table.matrix[index]) + "\n")
    finally:
        if owned:
            stream.close()


def compute_stats(table: EmbeddingTable, floor: float = STD_FLOOR) -> NormalizationStats:
    """
    Frequency-weighted per-dimension mean and standard deviation.

    Scaling all weights by a constant leaves the result unchanged.
    """
    weights = table.weights / table.weights.sum()
    mean = weights @ table.matrix
    variance = weights @ (table.matrix - mean) ** 2
    return NormalizationStats(mean=mean, std=np.maximum(np.sqrt(variance), floor))


def normalize(table: EmbeddingTable, stats: NormalizationStats) -> np.ndarray:
    """The whole table in normalized form (outside any tape)."""
    return (table.matrix - stats.mean) * stats.inv_std


def normalized_lookup(table: ad.Tensor, stats: NormalizationStats, ids: Sequence[int]) -> ad.Tensor:
    """
    (row - mean) / std for each id, recorded on the table's tape.

    The statistics are constants for differentiation; gradients reach the raw rows.

    Raises:
        LookupRangeError: If an id is outside the table.
    """
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise LookupRangeError(f"ids must be 1-d, got shape {ids.shape}")
    rows = ad.gather(table, ids)
    scale = np.tile(stats.inv_std, (len(ids), 1))
    return ad.mul(ad.sub(rows, stats.mean), scale)
