from typing import List, Sequence, Tuple

import numpy as np

from adv_tagger.data import Corpus, Sentence, Token
from adv_tagger.network import TaggerArchitecture


def make_corpus(sentences: Sequence[Sequence[Tuple[str, str]]]) -> Corpus:
    return Corpus(tuple(Sentence(tuple(Token(form, tag) for form, tag in s)) for s in sentences))


def tiny_arch(tag_count: int, **sizes) -> TaggerArchitecture:
    dims = dict(char_dim=3, char_hidden=2, word_dim=4, word_hidden=3)
    dims.update(sizes)
    return TaggerArchitecture(tag_count=tag_count, **dims)


def brute_force_sequences(n: int, k: int) -> List[Tuple[int, ...]]:
    return [tuple(int(d) for d in np.unravel_index(i, (k,) * n)) for i in range(k ** n)]
