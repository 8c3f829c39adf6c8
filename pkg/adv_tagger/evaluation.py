"""
Measurement procedures: accuracy, chunk F1, frequency buckets, neighbor
accuracy and embedding cluster tightness.

Reports can be rendered as aligned text tables (accuracies in percent, two
decimals) or as flat records for a JsonLinesWriter.
"""
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .data import UNK_ID, Corpus, Vocab, split_tag, from_iobes
from .embeddings import EmbeddingTable, NormalizationStats, normalize
from .exceptions import AlignmentError, TagSchemeError

logger = logging.getLogger(__name__)

IOB2 = "iob2"
IOBES = "iobes"

# half-open training-frequency ranges; None means unbounded
FREQUENCY_BUCKETS: Tuple[Tuple[str, int, Optional[int]], ...] = (
    ("0", 0, 1),
    ("1-10", 1, 10),
    ("10-100", 10, 100),
    ("100-", 100, None),
)

TagSequences = Union[Corpus, Sequence[Sequence[str]]]
Span = Tuple[str, int, int]


def format_percent(rate: Optional[float]) -> str:
    return "-" if rate is None else f"{rate * 100:.2f}"


def format_table(header: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Left-aligned first column, right-aligned others, padded to the widest cell."""
    cells = [list(map(str, header))] + [list(map(str, row)) for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    lines = []
    for row in cells:
        parts = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
    return "\n".join(lines)


def _sequences(tags: TagSequences) -> List[List[str]]:
    return tags.tag_sequences() if isinstance(tags, Corpus) else [list(s) for s in tags]


def _align(gold: TagSequences, predicted: TagSequences) -> List[Tuple[List[str], List[str]]]:
    gold_seqs = _sequences(gold)
    pred_seqs = _sequences(predicted)
    if len(gold_seqs) != len(pred_seqs):
        raise AlignmentError(f"{len(gold_seqs)} gold sentences but {len(pred_seqs)} predicted")
    for index, (g, p) in enumerate(zip(gold_seqs, pred_seqs)):
        if len(g) != len(p):
            raise AlignmentError(f"sentence {index}: {len(g)} gold tokens but {len(p)} predicted")
    if not any(gold_seqs):
        raise AlignmentError("no tokens to evaluate")
    return list(zip(gold_seqs, pred_seqs))


# --- Rates ---

def token_accuracy(gold: TagSequences, predicted: TagSequences) -> float:
    pairs = _align(gold, predicted)
    total = sum(len(g) for g, _ in pairs)
    correct = sum(a == b for g, p in pairs for a, b in zip(g, p))
    return correct / total


def sentence_accuracy(gold: TagSequences, predicted: TagSequences) -> float:
    pairs = _align(gold, predicted)
    return sum(g == p for g, p in pairs) / len(pairs)


# --- Chunks ---

def chunk_spans(tags: Sequence[str], repair: bool = False) -> Set[Span]:
    """
    Decodes IOB2 or IOBES tags into typed spans (label, start, end).

    Args:
        tags (Sequence[str]): One tag sequence.
        repair (bool): Treat an I- or E- tag that does not continue an open
                       chunk of its label as the start of a new chunk instead
                       of raising.

    Raises:
        TagSchemeError: On a malformed tag, or a stray continuation when repair is off.
    """
    spans: Set[Span] = set()
    label: Optional[str] = None
    start = 0
    for position, tag in enumerate(tags):
        prefix, tag_label = split_tag(tag, position)
        if prefix in ("I", "E") and tag_label != label:
            if not repair:
                raise TagSchemeError(f"{tag!r} does not continue a {tag_label} chunk", position)
            prefix = "B" if prefix == "I" else "S"
        if prefix in ("B", "S", "O") and label is not None:
            spans.add((label, start, position))
            label = None
        if prefix in ("B", "S"):
            label, start = tag_label, position
        if prefix in ("E", "S"):
            spans.add((label, start, position + 1))
            label = None
    if label is not None:
        spans.add((label, start, len(tags)))
    return spans


@dataclass(frozen=True)
class ChunkScore:
    precision: float
    recall: float
    f1: float
    gold_chunks: int = 0
    predicted_chunks: int = 0
    matched: int = 0


def chunk_f1(gold_tags: TagSequences, predicted_tags: TagSequences, scheme: str = IOBES) -> ChunkScore:
    """
    Exact span-and-label chunk precision, recall and F1.

    Gold sequences must be valid in the scheme. Predicted sequences are
    repaired first: a stray I- or E- opens a new chunk.

    Args:
        gold_tags: Gold tag sequences (or a Corpus).
        predicted_tags: Predicted tag sequences (or a Corpus).
        scheme (str): "iobes" or "iob2".

    Returns:
        ChunkScore: P and R are 0 when their denominator is 0; F1 is 0 when P + R is 0.
    """
    if scheme not in (IOB2, IOBES):
        raise TagSchemeError(f"unknown chunk scheme {scheme!r}", 0)
    gold_total = predicted_total = matched = 0
    for gold, predicted in _align(gold_tags, predicted_tags):
        if scheme == IOBES:
            from_iobes(gold)
        gold_spans = chunk_spans(gold)
        predicted_spans = chunk_spans(predicted, repair=True)
        gold_total += len(gold_spans)
        predicted_total += len(predicted_spans)
        matched += len(gold_spans & predicted_spans)
    precision = matched / predicted_total if predicted_total else 0.0
    recall = matched / gold_total if gold_total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ChunkScore(precision, recall, f1, gold_total, predicted_total, matched)


# --- Reports ---

@dataclass
class EvalReport:
    token_accuracy: float
    sentence_accuracy: float
    n_tokens: int
    n_sentences: int
    chunks: Optional[ChunkScore] = None
    confusion: Dict[str, Dict[str, int]] = field(default_factory=dict)

    def to_record(self) -> Dict[str, object]:
        record: Dict[str, object] = {
            "report": "evaluation",
            "token_accuracy": self.token_accuracy,
            "sentence_accuracy": self.sentence_accuracy,
            "n_tokens": self.n_tokens,
            "n_sentences": self.n_sentences,
            "confusion": self.confusion,
        }
        if self.chunks is not None:
            record.update(
                chunk_precision=self.chunks.precision,
                chunk_recall=self.chunks.recall,
                chunk_f1=self.chunks.f1,
            )
        return record

    def format(self) -> str:
        rows = [
            ("Token accuracy", format_percent(self.token_accuracy)),
            ("Sentence accuracy", format_percent(self.sentence_accuracy)),
        ]
        if self.chunks is not None:
            rows += [
                ("Chunk precision", format_percent(self.chunks.precision)),
                ("Chunk recall", format_percent(self.chunks.recall)),
                ("Chunk F1", format_percent(self.chunks.f1)),
            ]
        return format_table(("Metric", "Score"), rows)


def evaluate(gold: TagSequences, predicted: TagSequences, scheme: Optional[str] = None) -> EvalReport:
    """Accuracy report with per-tag confusion counts; chunk scores when a scheme is given."""
    pairs = _align(gold, predicted)
    confusion: Dict[str, Counter] = defaultdict(Counter)
    for g, p in pairs:
        for a, b in zip(g, p):
            confusion[a][b] += 1
    return EvalReport(
        token_accuracy=token_accuracy(gold, predicted),
        sentence_accuracy=sentence_accuracy(gold, predicted),
        n_tokens=sum(len(g) for g, _ in pairs),
        n_sentences=len(pairs),
        chunks=chunk_f1(gold, predicted, scheme) if scheme else None,
        confusion={a: dict(sorted(row.items())) for a, row in sorted(confusion.items())},
    )


@dataclass
class BucketReport:
    """Counts and correct predictions per training-frequency bucket."""
    kind: str
    labels: List[str]
    counts: List[int]
    correct: List[int]

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def accuracies(self) -> List[Optional[float]]:
        return [c / n if n else None for c, n in zip(self.correct, self.counts)]

    def to_records(self) -> List[Dict[str, object]]:
        return [
            {"report": self.kind, "bucket": label, "count": n, "accuracy": acc}
            for label, n, acc in zip(self.labels, self.counts, self.accuracies)
        ]

    def format(self) -> str:
        rows = zip(self.labels, self.counts, map(format_percent, self.accuracies))
        return format_table(("Frequency", "Tokens", "Accuracy"), rows)


def bucket_of(frequency: int) -> int:
    for index, (_, low, high) in enumerate(FREQUENCY_BUCKETS):
        if frequency >= low and (high is None or frequency < high):
            return index
    raise ValueError(f"negative frequency {frequency}")


def _empty_buckets(kind: str) -> BucketReport:
    return BucketReport(
        kind=kind,
        labels=[label for label, _, _ in FREQUENCY_BUCKETS],
        counts=[0] * len(FREQUENCY_BUCKETS),
        correct=[0] * len(FREQUENCY_BUCKETS),
    )


def frequency_buckets(train_vocab: Vocab, gold: Corpus, predicted: TagSequences) -> BucketReport:
    """
    Token accuracy split by how often each test word occurred in training.

    Buckets are {0}, [1, 10), [10, 100) and [100, inf); a word seen exactly
    10 times falls in the third.
    """
    pairs = _align(gold, predicted)
    report = _empty_buckets("frequency_buckets")
    for sentence, (g, p) in zip(gold, pairs):
        for form, a, b in zip(sentence.forms, g, p):
            index = bucket_of(train_vocab.frequency(form))
            report.counts[index] += 1
            report.correct[index] += a == b
    return report


def neighbor_accuracy(train_vocab: Vocab, gold: Corpus, predicted: TagSequences) -> BucketReport:
    """
    Accuracy on the left and right neighbors of each token, bucketed by the
    training frequency of the center token. Neighbors outside the sentence
    are skipped, so an n-token sentence contributes 2(n - 1) evaluations.
    """
    pairs = _align(gold, predicted)
    report = _empty_buckets("neighbor_accuracy")
    for sentence, (g, p) in zip(gold, pairs):
        n = len(g)
        for center, form in enumerate(sentence.forms):
            index = bucket_of(train_vocab.frequency(form))
            for neighbor in (center - 1, center + 1):
                if 0 <= neighbor < n:
                    report.counts[index] += 1
                    report.correct[index] += g[neighbor] == p[neighbor]
    return report


# --- Embedding analysis ---

@dataclass
class TightnessReport:
    """Average pairwise cosine per tag cluster; overall is the mean over clusters with >= 2 members."""
    clusters: Dict[str, float]
    sizes: Dict[str, int]
    overall: Optional[float]
    normalized: bool = True
    label: str = ""

    def to_records(self) -> List[Dict[str, object]]:
        records = [
            {"report": "cluster_tightness", "model": self.label, "tag": tag, "size": self.sizes[tag], "tightness": score}
            for tag, score in self.clusters.items()
        ]
        records.append({"report": "cluster_tightness", "model": self.label, "tag": "ALL", "tightness": self.overall})
        return records


def mean_pairwise_cosine(vectors: np.ndarray) -> float:
    """Average cosine over all unordered pairs of rows; zero rows have cosine 0 with everything."""
    vectors = np.asarray(vectors, dtype=np.float64)
    m = vectors.shape[0]
    if m < 2:
        raise ValueError("need at least two vectors")
    norms = np.linalg.norm(vectors, axis=1)
    unit = np.divide(vectors, norms[:, None], out=np.zeros_like(vectors), where=norms[:, None] > 0)
    similarities = unit @ unit.T
    upper = np.triu_indices(m, k=1)
    return float(np.clip(similarities[upper].mean(), -1.0, 1.0))


def tag_clusters(vocab: Vocab, test_corpus: Corpus, tags: Optional[Sequence[str]] = None) -> Dict[str, List[int]]:
    """
    Groups in-vocabulary test words by their unique gold tag.

    Words seen with two or more distinct tags in the test corpus are dropped,
    as are words without a vocabulary row.
    """
    observed: Dict[int, Set[str]] = defaultdict(set)
    for sentence in test_corpus:
        for token in sentence:
            word = vocab.word_id(token.form)
            if word != UNK_ID:
                observed[word].add(token.tag)
    clusters: Dict[str, List[int]] = defaultdict(list)
    for word, seen in sorted(observed.items()):
        if len(seen) == 1:
            (tag,) = seen
            if tags is None or tag in tags:
                clusters[tag].append(word)
    return dict(sorted(clusters.items()))


def cluster_tightness(
    table: EmbeddingTable,
    stats: Optional[NormalizationStats],
    test_corpus: Corpus,
    vocab: Vocab,
    tags: Optional[Sequence[str]] = None,
    normalized: bool = True,
    label: str = "",
) -> TightnessReport:
    """
    Measures how close words sharing a gold tag sit in embedding space.

    Args:
        table (EmbeddingTable): Word embedding table.
        stats (Optional[NormalizationStats]): Moments for normalization; computed
                                              by the caller from the same table.
        test_corpus (Corpus): Gold-tagged text defining the clusters.
        vocab (Vocab): Vocabulary the table is indexed by.
        tags (Optional[Sequence[str]]): Restrict to these clusters.
        normalized (bool): Use normalized rows (the form the model consumes)
                           instead of the raw table.
        label (str): Name for the report row, e.g. "initial" or "adversarial".
    """
    if normalized and stats is None:
        raise ValueError("normalized tightness needs normalization statistics")
    matrix = normalize(table, stats) if normalized else table.matrix
    scores: Dict[str, float] = {}
    sizes: Dict[str, int] = {}
    for tag, rows in tag_clusters(vocab, test_corpus, tags).items():
        sizes[tag] = len(rows)
        if len(rows) >= 2:
            scores[tag] = mean_pairwise_cosine(matrix[rows])
    overall = float(np.mean(list(scores.values()))) if scores else None
    logger.debug(f"Cluster tightness over {len(scores)} clusters: {overall}")
    return TightnessReport(scores, {t: sizes[t] for t in scores}, overall, normalized, label)


def format_tightness(reports: Sequence[TightnessReport]) -> str:
    """One row per report (model), one column per cluster plus the overall mean."""
    tags = sorted({tag for report in reports for tag in report.clusters})
    rows = []
    for report in reports:
        cells = [f"{report.clusters[t]:.4f}" if t in report.clusters else "-" for t in tags]
        rows.append([report.label or "model"] + cells + ["-" if report.overall is None else f"{report.overall:.4f}"])
    return format_table(["Model"] + tags + ["ALL"], rows)
