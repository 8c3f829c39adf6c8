import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, IO, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import CorpusFormatError, TagSchemeError, UnknownTagError

logger = logging.getLogger(__name__)

CONLLU = "conllu"
COLUMNS = "columns"
CONLLU_COLUMNS = 10
CONLLU_FORM = 1
CONLLU_UPOS = 3
DOCSTART = "-DOCSTART-"

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1
RESERVED = frozenset((PAD, UNK))

LOW_RESOURCE_TOKENS = 60000

PathLike = Union[str, Path]


@dataclass(frozen=True)
class Token:
    form: str
    tag: str
    fields: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.form:
            raise CorpusFormatError("token surface form must be non-empty")


@dataclass(frozen=True)
class Sentence:
    tokens: Tuple[Token, ...]
    comments: Tuple[str, ...] = ()

    def __post_init__(self):
        if not self.tokens:
            raise CorpusFormatError("a sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    @property
    def forms(self) -> List[str]:
        return [t.form for t in self.tokens]

    @property
    def tags(self) -> List[str]:
        return [t.tag for t in self.tokens]

    def with_tags(self, tags: Sequence[str]) -> "Sentence":
        if len(tags) != len(self.tokens):
            raise CorpusFormatError(f"{len(tags)} tags for a sentence of {len(self.tokens)} tokens")
        return replace(self, tokens=tuple(replace(t, tag=tag) for t, tag in zip(self.tokens, tags)))


@dataclass(frozen=True)
class Corpus:
    """
    Tagged sentences plus the column layout they were read from, so that
    predictions can be written back in the same format.
    """
    sentences: Tuple[Sentence, ...] = ()
    format: str = CONLLU
    token_col: int = CONLLU_FORM
    tag_col: int = CONLLU_UPOS

    def __len__(self):
        return len(self.sentences)

    def __iter__(self) -> Iterator[Sentence]:
        return iter(self.sentences)

    def __getitem__(self, index: int) -> Sentence:
        return self.sentences[index]

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tag_sequences(self) -> List[List[str]]:
        return [s.tags for s in self.sentences]

    def with_tags(self, tag_sequences: Sequence[Sequence[str]]) -> "Corpus":
        if len(tag_sequences) != len(self.sentences):
            raise CorpusFormatError(f"{len(tag_sequences)} tag sequences for {len(self.sentences)} sentences")
        return replace(self, sentences=tuple(s.with_tags(t) for s, t in zip(self.sentences, tag_sequences)))

    def subset(self, count: int) -> "Corpus":
        return replace(self, sentences=self.sentences[:count])


# --- Readers ---

def _read_lines(path: PathLike) -> List[str]:
    raw = Path(path).read_bytes()
    try:
        return raw.decode("utf-8").splitlines()
    except UnicodeDecodeError as e:
        line = raw[:e.start].count(b"\n") + 1
        raise CorpusFormatError(f"invalid UTF-8 at byte {e.start}", str(path), line) from e


def read_conllu(path: PathLike) -> Corpus:
    """
    Reads a CoNLL-U file, keeping the FORM and UPOS columns.

    Multiword-token ranges ("3-4") and empty nodes ("5.1") are skipped.

    Raises:
        CorpusFormatError: If a token line does not have 10 tab-separated columns.
    """
    sentences: List[Sentence] = []
    tokens: List[Token] = []
    comments: List[str] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(comments)))
        tokens.clear()
        comments.clear()

    for number, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        columns = line.split("\t")
        if len(columns) != CONLLU_COLUMNS:
            raise CorpusFormatError(f"expected {CONLLU_COLUMNS} columns, found {len(columns)}", str(path), number)
        token_id = columns[0]
        if "-" in token_id or "." in token_id:
            continue
        try:
            tokens.append(Token(columns[CONLLU_FORM], columns[CONLLU_UPOS], tuple(columns)))
        except CorpusFormatError as e:
            raise CorpusFormatError(str(e), str(path), number) from e
    flush()
    logger.info(f"Read {len(sentences)} sentences from {path}")
    return Corpus(tuple(sentences), CONLLU, CONLLU_FORM, CONLLU_UPOS)


def read_conll_columns(path: PathLike, token_col: int = 0, tag_col: int = -1) -> Corpus:
    """
    Reads a whitespace-separated column file (CoNLL-2000 chunking, CoNLL-2003 NER).

    Args:
        path: File to read.
        token_col (int): Column holding the surface form.
        tag_col (int): Column holding the label; negative values count from the end.

    Raises:
        CorpusFormatError: If a requested column is missing on some line.
    """
    sentences: List[Sentence] = []
    tokens: List[Token] = []

    def flush():
        if tokens:
            sentences.append(Sentence(tuple(tokens)))
        tokens.clear()

    for number, line in enumerate(_read_lines(path), start=1):
        columns = line.split()
        if not columns:
            flush()
            continue
        if columns[0] == DOCSTART:
            flush()
            continue
        try:
            tokens.append(Token(columns[token_col], columns[tag_col], tuple(columns)))
        except IndexError:
            raise CorpusFormatError(
                f"line has {len(columns)} columns, need columns {token_col} and {tag_col}", str(path), number
            )
    flush()
    logger.info(f"Read {len(sentences)} sentences from {path}")
    return Corpus(tuple(sentences), COLUMNS, token_col, tag_col)


def read_corpus(path: PathLike, fmt: str = CONLLU, token_col: int = 0, tag_col: int = -1) -> Corpus:
    if fmt == CONLLU:
        return read_conllu(path)
    return read_conll_columns(path, token_col, tag_col)


# --- Writers ---

def _open_for_write(target: Union[PathLike, IO[str]]):
    if hasattr(target, "write"):
        return target, False
    return open(target, "w", encoding="utf-8"), True


def write_conllu(corpus: Corpus, target: Union[PathLike, IO[str]]) -> None:
    """Writes sentences as CoNLL-U, replacing UPOS with each token's tag."""
    stream, owned = _open_for_write(target)
    try:
        for sentence in corpus:
            for comment in sentence.comments:
                stream.write(comment + "\n")
            for index, token in enumerate(sentence.tokens, start=1):
                if len(token.fields) == CONLLU_COLUMNS:
                    columns = list(token.fields)
                    columns[CONLLU_FORM] = token.form
                    columns[CONLLU_UPOS] = token.tag
                else:
                    columns = [str(index), token.form, "_", token.tag] + ["_"] * 6
                stream.write("\t".join(columns) + "\n")
            stream.write("\n")
    finally:
        if owned:
            stream.close()


def write_conll_columns(corpus: Corpus, target: Union[PathLike, IO[str]]) -> None:
    """Writes sentences as space-separated columns, replacing the tag column."""
    stream, owned = _open_for_write(target)
    try:
        for sentence in corpus:
            for token in sentence.tokens:
                if token.fields:
                    columns = list(token.fields)
                    columns[corpus.token_col] = token.form
                    columns[corpus.tag_col] = token.tag
                else:
                    columns = [token.form, token.tag]
                stream.write(" ".join(columns) + "\n")
            stream.write("\n")
    finally:
        if owned:
            stream.close()


def write_corpus(corpus: Corpus, target: Union[PathLike, IO[str]]) -> None:
    if corpus.format == CONLLU:
        write_conllu(corpus, target)
    else:
        write_conll_columns(corpus, target)


# --- Tagging schemes ---

def split_tag(tag: str, position: int) -> Tuple[str, Optional[str]]:
    if tag == "O":
        return "O", None
    prefix, sep, label = tag.partition("-")
    if not sep or not label or prefix not in ("B", "I", "E", "S"):
        raise TagSchemeError(f"malformed chunk tag {tag!r}", position)
    return prefix, label


def to_iob2(tags: Sequence[str]) -> List[str]:
    """Normalizes IOB1 or IOB2 tags to IOB2 (every chunk opens with B-)."""
    result: List[str] = []
    previous_label: Optional[str] = None
    for position, tag in enumerate(tags):
        prefix, label = split_tag(tag, position)
        if prefix in ("E", "S"):
            raise TagSchemeError(f"{tag!r} is not an IOB tag", position)
        if prefix == "I" and label != previous_label:
            result.append(f"B-{label}")
        else:
            result.append(tag)
        previous_label = label
    return result


def to_iobes(tags: Sequence[str]) -> List[str]:
    """
    Converts IOB1/IOB2 tags to IOBES.

    Example usage:
        >>> to_iobes(["B-NP", "I-NP", "O"])
        ['B-NP', 'E-NP', 'O']
    """
    iob2 = to_iob2(tags)
    result: List[str] = []
    for position, tag in enumerate(iob2):
        if tag == "O":
            result.append(tag)
            continue
        prefix, label = tag.split("-", 1)
        continues = position + 1 < len(iob2) and iob2[position + 1] == f"I-{label}"
        if prefix == "B":
            result.append(f"B-{label}" if continues else f"S-{label}")
        else:
            result.append(f"I-{label}" if continues else f"E-{label}")
    return result


def from_iobes(tags: Sequence[str]) -> List[str]:
    """
    Converts valid IOBES tags back to IOB2.

    Raises:
        TagSchemeError: If the sequence is not consistent IOBES.
    """
    result: List[str] = []
    open_label: Optional[str] = None
    for position, tag in enumerate(tags):
        prefix, label = split_tag(tag, position)
        if prefix in ("I", "E"):
            if open_label != label:
                raise TagSchemeError(f"{tag!r} does not continue a {label} chunk", position)
        elif open_label is not None:
            raise TagSchemeError(f"chunk {open_label} left open before {tag!r}", position)
        result.append({"S": f"B-{label}", "E": f"I-{label}"}.get(prefix, tag))
        open_label = label if prefix in ("B", "I") else None
    if open_label is not None:
        raise TagSchemeError(f"chunk {open_label} left open at end of sequence", len(tags))
    return result


def corpus_to_iobes(corpus: Corpus) -> Corpus:
    return corpus.with_tags([to_iobes(tags) for tags in corpus.tag_sequences()])


def resource_profile(train_corpus: Corpus) -> str:
    return "low" if train_corpus.n_tokens < LOW_RESOURCE_TOKENS else "other"


# --- Vocabulary ---

@dataclass
class Vocab:
    """
    Word, character and tag inventories with training frequencies.

    Word lookups are lowercased (embedding matching); characters keep case.
    """
    words: Dict[str, int]
    chars: Dict[str, int]
    tags: Dict[str, int]
    word_counts: Dict[str, int] = field(default_factory=dict)
    char_counts: Dict[str, int] = field(default_factory=dict)
    unk_count: int = 0

    @property
    def tag_names(self) -> List[str]:
        return sorted(self.tags, key=self.tags.get)

    @property
    def word_names(self) -> List[str]:
        return sorted(self.words, key=self.words.get)

    def word_id(self, form: str) -> int:
        index = self.words.get(form.lower(), UNK_ID)
        return UNK_ID if index == PAD_ID else index

    def word_ids(self, forms: Iterable[str]) -> List[int]:
        return [self.word_id(f) for f in forms]

    def char_ids(self, form: str) -> List[int]:
        return [self.chars.get(c, UNK_ID) for c in form]

    def tag_id(self, tag: str) -> int:
        try:
            return self.tags[tag]
        except KeyError:
            raise UnknownTagError(f"tag {tag!r} is not in the training tag set")

    def tag_ids(self, tags: Iterable[str]) -> List[int]:
        return [self.tag_id(t) for t in tags]

    def frequency(self, form: str) -> int:
        """Number of occurrences in the training split (0 for unseen words)."""
        return self.word_counts.get(form.lower(), 0)

    def word_weights(self) -> np.ndarray:
        weights = np.zeros(len(self.words), dtype=np.float64)
        for word, index in self.words.items():
            weights[index] = self.word_counts.get(word, 0)
        weights[UNK_ID] = self.unk_count
        weights[PAD_ID] = 0.0
        return weights

    def char_weights(self, by_frequency: bool = False) -> np.ndarray:
        if not by_frequency:
            weights = np.ones(len(self.chars), dtype=np.float64)
        else:
            weights = np.zeros(len(self.chars), dtype=np.float64)
            for char, index in self.chars.items():
                weights[index] = self.char_counts.get(char, 0)
        weights[PAD_ID] = 0.0
        return weights

    def to_dict(self) -> Dict:
        return {
            "words": self.word_names,
            "chars": sorted(self.chars, key=self.chars.get),
            "tags": self.tag_names,
            "word_counts": dict(sorted(self.word_counts.items())),
            "char_counts": dict(sorted(self.char_counts.items())),
            "unk_count": self.unk_count,
        }

    @classmethod
    def from_dict(cls, payload: Dict) -> "Vocab":
        return cls(
            words={w: i for i, w in enumerate(payload["words"])},
            chars={c: i for i, c in enumerate(payload["chars"])},
            tags={t: i for i, t in enumerate(payload["tags"])},
            word_counts=dict(payload.get("word_counts", {})),
            char_counts=dict(payload.get("char_counts", {})),
            unk_count=int(payload.get("unk_count", 0)),
        )


def build_vocab(train_corpus: Corpus, min_count: int = 1) -> Vocab:
    """
    Builds vocabularies from the training split.

    Args:
        train_corpus (Corpus): Training sentences; frequencies come from here only.
        min_count (int): Words seen fewer times map to UNK at lookup time.

    Returns:
        Vocab: Dense 0-based ids with PAD=0 and UNK=1 for words and characters.
    """
    if not len(train_corpus):
        raise CorpusFormatError("cannot build a vocabulary from an empty corpus")

    word_counts: Counter = Counter()
    char_counts: Counter = Counter()
    tag_set = set()
    for sentence in train_corpus:
        for token in sentence:
            word_counts[token.form.lower()] += 1
            char_counts.update(token.form)
            tag_set.add(token.tag)

    # literal "<pad>" / "<unk>" forms never get rows of their own; they read as UNK
    kept = sorted(
        (w for w, c in word_counts.items() if c >= min_count and w not in RESERVED),
        key=lambda w: (-word_counts[w], w),
    )
    words = {PAD: PAD_ID, UNK: UNK_ID}
    words.update({w: i for i, w in enumerate(kept, start=2)})
    chars = {PAD: PAD_ID, UNK: UNK_ID}
    chars.update({c: i for i, c in enumerate(sorted(char_counts), start=2)})
    unk_count = sum(c for w, c in word_counts.items() if c < min_count or w in RESERVED)

    vocab = Vocab(
        words=words,
        chars=chars,
        tags={t: i for i, t in enumerate(sorted(tag_set))},
        word_counts=dict(word_counts),
        char_counts=dict(char_counts),
        unk_count=unk_count,
    )
    logger.info(
        f"Vocabulary: {len(words)} words ({unk_count} UNK tokens), {len(chars)} chars, {len(vocab.tags)} tags"
    )
    return vocab
