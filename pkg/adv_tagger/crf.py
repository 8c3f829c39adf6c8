"""
First-order linear-chain CRF with explicit start and stop scores.

Scores, log-partition and NLL are recorded on a Tape so they can be
differentiated; Viterbi decoding works on plain arrays.
"""
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .exceptions import LookupRangeError, ShapeMismatchError

logger = logging.getLogger(__name__)

Scores = Union[ad.Tensor, np.ndarray]


@dataclass
class CrfParams:
    """Transition matrix T[prev, next] plus start and stop scores."""
    transitions: Any
    start: Any
    stop: Any

    @property
    def tag_count(self) -> int:
        return self.start.shape[0]

    @classmethod
    def zeros(cls, tag_count: int) -> "CrfParams":
        return cls(np.zeros((tag_count, tag_count)), np.zeros(tag_count), np.zeros(tag_count))

    def named_arrays(self, prefix: str = "crf") -> Dict[str, Any]:
        return {
            f"{prefix}.transitions": self.transitions,
            f"{prefix}.start": self.start,
            f"{prefix}.stop": self.stop,
        }

    def bind(self, tape: ad.Tape, prefix: str = "crf") -> "CrfParams":
        return CrfParams(
            tape.parameter(self.transitions, f"{prefix}.transitions"),
            tape.parameter(self.start, f"{prefix}.start"),
            tape.parameter(self.stop, f"{prefix}.stop"),
        )


def _lift(emissions: Scores, crf: CrfParams) -> Tuple[ad.Tensor, ad.Tensor, ad.Tensor, ad.Tensor]:
    operands = (emissions, crf.transitions, crf.start, crf.stop)
    tape = next((o.tape for o in operands if isinstance(o, ad.Tensor)), None)
    if tape is None:
        tape = ad.Tape()
    lifted = [tape.lift(o) for o in operands]
    n_rows, k = lifted[0].shape if len(lifted[0].shape) == 2 else (0, -1)
    if k != lifted[2].shape[0] or lifted[1].shape != (k, k) or lifted[3].shape != (k,):
        raise ShapeMismatchError("crf", lifted[0].shape, lifted[1].shape)
    if n_rows < 1:
        raise ShapeMismatchError("crf", lifted[0].shape, (1, k))
    return tuple(lifted)


def sequence_score(emissions: Scores, crf: CrfParams, tags: Sequence[int]) -> ad.Tensor:
    """
    start[y1] + sum_t emissions[t, y_t] + sum_t T[y_(t-1), y_t] + stop[y_n].

    Raises:
        LookupRangeError: If a tag id is outside [0, tag_count).
    """
    emit, transitions, start, stop = _lift(emissions, crf)
    n, k = emit.shape
    tags = np.asarray(tags, dtype=np.int64)
    if tags.shape != (n,):
        raise ShapeMismatchError("sequence_score", emit.shape, tags.shape)
    if tags.min() < 0 or tags.max() >= k:
        raise LookupRangeError(f"tag ids must lie in [0, {k}), got {tags.tolist()}")

    chosen = np.zeros((n, k))
    chosen[np.arange(n), tags] = 1.0
    pairs = np.zeros((k, k))
    np.add.at(pairs, (tags[:-1], tags[1:]), 1.0)
    first = np.zeros(k)
    first[tags[0]] = 1.0
    last = np.zeros(k)
    last[tags[-1]] = 1.0

    score = ad.add(ad.total(ad.mul(emit, chosen)), ad.total(ad.mul(start, first)))
    score = ad.add(score, ad.total(ad.mul(transitions, pairs)))
    return ad.add(score, ad.total(ad.mul(stop, last)))


def log_partition(emissions: Scores, crf: CrfParams) -> ad.Tensor:
    """Log of the summed exp-scores of all tag sequences, by the forward recursion."""
    emit, transitions, start, stop = _lift(emissions, crf)
    incoming = ad.transpose(transitions)
    alpha = ad.add(start, ad.slice(emit, 0))
    for t in range(1, emit.shape[0]):
        alpha = ad.add(ad.logsumexp(ad.add(incoming, alpha), axis=1), ad.slice(emit, t))
    return ad.logsumexp(ad.add(alpha, stop))


def nll(emissions: Scores, crf: CrfParams, tags: Sequence[int]) -> ad.Tensor:
    """Negative log-likelihood of the tag sequence: log_partition - sequence_score."""
    emit, transitions, start, stop = _lift(emissions, crf)
    lifted = CrfParams(transitions, start, stop)
    return ad.sub(log_partition(emit, lifted), sequence_score(emit, lifted, tags))


def viterbi(emissions: Scores, crf: CrfParams) -> Tuple[List[int], float]:
    """
    Highest-scoring tag sequence and its score.

    Ties go to the lowest tag id at every backtrack step.
    """
    emit, transitions, start, stop = (t.data for t in _lift(emissions, crf))
    n, k = emit.shape
    delta = start + emit[0]
    backpointers = np.zeros((n, k), dtype=np.int64)
    for t in range(1, n):
        candidates = delta[:, None] + transitions
        backpointers[t] = np.argmax(candidates, axis=0)
        delta = candidates[backpointers[t], np.arange(k)] + emit[t]
    final = delta + stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(n - 1, 0, -1):
        best = int(backpointers[t, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])
