"""
Mini-batch SGD with classical momentum, 1/(1 + decay * epoch) learning-rate
decay, global-norm gradient clipping and early stopping on dev accuracy.

Baseline training minimizes the CRF NLL of each sentence; adversarial training
minimizes the gamma-mixture of the clean and FGM-perturbed NLL.

Example usage:
    >>> trainer = Trainer(model, TrainConfig(max_epochs=30), AdvConfig(alpha=0.05))
    >>> for record in trainer.epochs(train_corpus, dev_corpus):
    ...     print(record.epoch, record.dev_accuracy)
"""
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .adversarial import AdvConfig, adversarial_loss
from .crf import nll, viterbi
from .data import Corpus, Sentence
from .evaluation import TightnessReport, cluster_tightness, token_accuracy
from .exceptions import ShapeMismatchError, TaggerError, TrainingDivergedError
from .log import JsonLinesWriter
from .network import DropoutMasks, TaggerModel, encode_sentence

logger = logging.getLogger(__name__)

SUM = "sum"
MEAN = "mean"
REFRESH_BATCH = "batch"
REFRESH_EPOCH = "epoch"

ALPHA_SELECTION_GRID = (0.001, 0.005, 0.01, 0.05, 0.1)
ALPHA_SWEEP_GRID = (0.0, 0.001, 0.01, 0.05, 0.1, 0.5)

Gradients = Dict[str, np.ndarray]
ModelFactory = Callable[[int], TaggerModel]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 10
    momentum: float = 0.9
    learning_rate: float = 0.01
    decay_rate: float = 0.05
    clip_threshold: float = 5.0
    dropout: float = 0.5
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    accumulation: str = SUM
    normalization_refresh: str = REFRESH_BATCH
    char_frequency_weighting: bool = False
    threads: int = 1

    def __post_init__(self):
        for name in ("batch_size", "max_epochs", "patience", "threads"):
            if getattr(self, name) < 1:
                raise TaggerError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.learning_rate <= 0 or self.clip_threshold <= 0:
            raise TaggerError("learning_rate and clip_threshold must be positive")
        if self.decay_rate < 0 or not 0.0 <= self.momentum < 1.0:
            raise TaggerError(f"bad decay_rate {self.decay_rate} or momentum {self.momentum}")
        if not 0.0 <= self.dropout < 1.0:
            raise TaggerError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.accumulation not in (SUM, MEAN):
            raise TaggerError(f"accumulation must be {SUM!r} or {MEAN!r}, got {self.accumulation!r}")
        if self.normalization_refresh not in (REFRESH_BATCH, REFRESH_EPOCH):
            raise TaggerError(f"unknown normalization_refresh {self.normalization_refresh!r}")


@dataclass
class TrainState:
    epoch: int
    velocity: Gradients
    rng: np.random.Generator
    best_accuracy: float = -1.0
    best_epoch: int = -1
    epochs_since_improvement: int = 0

    @classmethod
    def start(cls, model: TaggerModel, seed: int) -> "TrainState":
        velocity = {name: np.zeros_like(p) for name, p in model.parameters().items()}
        return cls(epoch=0, velocity=velocity, rng=np.random.default_rng(seed))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    dev_loss: float
    dev_accuracy: float
    improved: bool

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class TrainResult:
    model: TaggerModel
    history: List[EpochRecord]
    best_epoch: int
    best_dev_accuracy: float

    @property
    def best_dev_loss(self) -> float:
        return min(r.dev_loss for r in self.history)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """lr0 / (1 + decay * epoch)."""
    if epoch < 0:
        raise TaggerError(f"epoch must be >= 0, got {epoch}")
    return cfg.learning_rate / (1.0 + cfg.decay_rate * epoch)


def global_norm(grads: Gradients) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: Gradients, threshold: float) -> Gradients:
    """Rescales all gradients together when their global L2 norm exceeds the threshold."""
    if threshold <= 0:
        raise TaggerError(f"clip threshold must be positive, got {threshold}")
    norm = global_norm(grads)
    if norm <= threshold:
        return dict(grads)
    factor = threshold / norm
    logger.debug(f"Clipping gradient norm {norm:.3f} to {threshold}")
    return {name: g * factor for name, g in grads.items()}


def sgd_momentum_step(params: Gradients, grads: Gradients, velocity: Gradients, lr: float, momentum: float) -> None:
    """v = momentum * v - lr * grad; param = param + v. Updates params and velocity in place."""
    for name, param in params.items():
        grad = grads[name]
        v = velocity[name]
        if grad.shape != param.shape or v.shape != param.shape:
            raise ShapeMismatchError(f"sgd step {name}", param.shape, grad.shape)
        v *= momentum
        v -= lr * grad
        param += v


def sentence_loss(
    model: TaggerModel,
    tape: ad.Tape,
    sentence: Sentence,
    adv_cfg: AdvConfig,
    masks: Optional[DropoutMasks] = None,
) -> ad.Tensor:
    """Training loss of one sentence: clean NLL, or the adversarial mixture when enabled."""
    bound = model.bind(tape)
    tag_ids = model.vocab.tag_ids(sentence.tags)
    if adv_cfg.enabled:
        return adversarial_loss(bound, sentence, tag_ids, adv_cfg, masks).loss
    return nll(encode_sentence(bound, sentence, masks).emissions, bound.crf, tag_ids)


def score_corpus(model: TaggerModel, corpus: Corpus) -> Tuple[float, List[List[str]]]:
    """Mean clean NLL per sentence and Viterbi predictions, without dropout."""
    names = model.vocab.tag_names
    total = 0.0
    predictions = []
    for sentence in corpus:
        tape = ad.Tape()
        bound = model.bind(tape)
        emissions = encode_sentence(bound, sentence).emissions
        total += nll(emissions, bound.crf, model.vocab.tag_ids(sentence.tags)).item()
        path, _ = viterbi(emissions.data, model.crf)
        predictions.append([names[i] for i in path])
    return total / len(corpus), predictions


class Trainer:
    """
    Trains a TaggerModel in place and keeps a copy of the best model by dev accuracy.
    """

    def __init__(self, model: TaggerModel, cfg: Optional[TrainConfig] = None, adv_cfg: Optional[AdvConfig] = None):
        """
        Args:
            model (TaggerModel): Model to train; its arrays are updated in place.
            cfg (Optional[TrainConfig]): Optimizer and schedule settings.
            adv_cfg (Optional[AdvConfig]): Adversarial settings; baseline when omitted.
        """
        self.model = model
        self.cfg = cfg or TrainConfig()
        self.adv_cfg = adv_cfg or AdvConfig(enabled=False)
        self.state = TrainState.start(model, self.cfg.seed)
        self.best_model: Optional[TaggerModel] = None
        mode = f"adversarial (alpha={self.adv_cfg.alpha}, gamma={self.adv_cfg.gamma})" if self.adv_cfg.enabled else "baseline"
        logger.info(f"Trainer ready: {mode}, seed {self.cfg.seed}")
        if self.cfg.threads > 1:
            logger.warning(f"Parallel mode with {self.cfg.threads} threads: runs are not guaranteed bit-reproducible")

    def sentence_gradients(self, sentence: Sentence, masks: DropoutMasks) -> Tuple[float, Gradients]:
        tape = ad.Tape()
        loss = sentence_loss(self.model, tape, sentence, self.adv_cfg, masks)
        grads = tape.backward(loss).by_name()
        return loss.item(), {name: grads[name] for name in self.state.velocity}

    async def _gather_gradients(self, batch: List[Sentence], masks: List[DropoutMasks]) -> List[Tuple[float, Gradients]]:
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=self.cfg.threads) as pool:
            jobs = [loop.run_in_executor(pool, self.sentence_gradients, s, m) for s, m in zip(batch, masks)]
            return await asyncio.gather(*jobs)

    def batch_gradients(self, batch: List[Sentence]) -> List[Tuple[float, Gradients]]:
        arch = self.model.arch
        masks = [DropoutMasks.sample(self.state.rng, len(s), arch, self.cfg.dropout) for s in batch]
        if self.cfg.threads > 1:
            return asyncio.run(self._gather_gradients(batch, masks))
        return [self.sentence_gradients(s, m) for s, m in zip(batch, masks)]

    def run_epoch(self, train_corpus: Corpus) -> float:
        """One shuffled pass over the training data; returns the mean training loss."""
        cfg = self.cfg
        epoch = self.state.epoch
        lr = lr_schedule(epoch, cfg)
        params = self.model.parameters()
        order = self.state.rng.permutation(len(train_corpus))
        if cfg.normalization_refresh == REFRESH_EPOCH:
            self.model.refresh_stats()

        total_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            indices = order[start:start + cfg.batch_size]
            if cfg.normalization_refresh == REFRESH_BATCH:
                self.model.refresh_stats()
            results = self.batch_gradients([train_corpus[int(i)] for i in indices])

            accumulated = {name: np.zeros_like(p) for name, p in params.items()}
            for index, (loss, grads) in zip(indices, results):
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, int(index), loss)
                total_loss += loss
                for name, grad in grads.items():
                    accumulated[name] += grad
            if cfg.accumulation == MEAN:
                accumulated = {name: g / len(indices) for name, g in accumulated.items()}
            if not np.isfinite(global_norm(accumulated)):
                raise TrainingDivergedError(epoch, int(indices[0]), float("nan"))
            sgd_momentum_step(params, clip_gradients(accumulated, cfg.clip_threshold), self.state.velocity, lr, cfg.momentum)

        self.model.refresh_stats()
        return total_loss / len(order)

    def epochs(self, train_corpus: Corpus, dev_corpus: Corpus) -> Iterator[EpochRecord]:
        """
        Trains epoch by epoch, yielding one record per epoch.

        Stops after max_epochs, or once dev accuracy has not improved for
        `patience` consecutive epochs.

        Yields:
            EpochRecord: epoch, lr, mean train loss, mean dev NLL and dev accuracy.
        """
        if not len(train_corpus) or not len(dev_corpus):
            raise TaggerError("training and dev corpora must be non-empty")
        state = self.state
        logger.info(f"Training on {len(train_corpus)} sentences, validating on {len(dev_corpus)}")
        while state.epoch < self.cfg.max_epochs:
            lr = lr_schedule(state.epoch, self.cfg)
            train_loss = self.run_epoch(train_corpus)
            dev_loss, predicted = score_corpus(self.model, dev_corpus)
            accuracy = token_accuracy(dev_corpus, predicted)

            improved = accuracy > state.best_accuracy
            if improved:
                state.best_accuracy = accuracy
                state.best_epoch = state.epoch
                state.epochs_since_improvement = 0
                self.best_model = self.model.copy()
            else:
                state.epochs_since_improvement += 1

            record = EpochRecord(state.epoch, lr, train_loss, dev_loss, accuracy, improved)
            logger.info(
                f"Epoch {state.epoch}: lr {lr:.6f}, train loss {train_loss:.4f}, "
                f"dev loss {dev_loss:.4f}, dev accuracy {accuracy * 100:.2f}"
            )
            state.epoch += 1
            yield record
            if state.epochs_since_improvement >= self.cfg.patience:
                logger.info(f"Early stopping after epoch {state.epoch - 1}: no improvement for {self.cfg.patience} epochs")
                return

    def fit(
        self,
        train_corpus: Corpus,
        dev_corpus: Corpus,
        log: Optional[Union[str, Path, JsonLinesWriter]] = None,
    ) -> TrainResult:
        """Runs epochs() to completion, writing each record to the optional JSON-lines log."""
        writer = JsonLinesWriter(log) if isinstance(log, (str, Path)) else log
        history = []
        try:
            for record in self.epochs(train_corpus, dev_corpus):
                history.append(record)
                if writer is not None:
                    writer.write(record.to_dict())
        finally:
            if writer is not None and writer is not log:
                writer.close()
        return TrainResult(self.best_model, history, self.state.best_epoch, self.state.best_accuracy)


def train(
    model: TaggerModel,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    train_cfg: Optional[TrainConfig] = None,
    adv_cfg: Optional[AdvConfig] = None,
    log: Optional[Union[str, Path, JsonLinesWriter]] = None,
) -> TrainResult:
    """
    Trains the model and returns the best-dev-accuracy copy with the epoch log.

    Raises:
        TrainingDivergedError: If a sentence loss or the batch gradient is not finite.
    """
    return Trainer(model, train_cfg, adv_cfg).fit(train_corpus, dev_corpus, log)


# --- Experiment drivers ---

def select_alpha(
    model_factory: ModelFactory,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    train_cfg: TrainConfig,
    adv_cfg: AdvConfig,
    grid: Sequence[float] = ALPHA_SELECTION_GRID,
) -> Tuple[float, Dict[float, float]]:
    """
    Trains one adversarial model per alpha and picks the best dev accuracy.

    Returns:
        Tuple[float, Dict[float, float]]: The chosen alpha (ties go to the
        smaller value) and dev accuracy per alpha.
    """
    scores: Dict[float, float] = {}
    for alpha in sorted(grid):
        result = train(model_factory(train_cfg.seed), train_corpus, dev_corpus, train_cfg,
                       replace(adv_cfg, alpha=alpha, enabled=True))
        scores[alpha] = result.best_dev_accuracy
        logger.info(f"alpha={alpha}: best dev accuracy {result.best_dev_accuracy * 100:.2f}")
    best = max(scores, key=lambda a: (scores[a], -a))
    return best, scores


@dataclass
class RepeatedRuns:
    seeds: List[int]
    results: List[TrainResult]

    @property
    def median(self) -> TrainResult:
        """The run with the (lower) median best dev accuracy."""
        ranked = sorted(range(len(self.results)), key=lambda i: (self.results[i].best_dev_accuracy, self.seeds[i]))
        return self.results[ranked[(len(ranked) - 1) // 2]]


def repeat_runs(
    model_factory: ModelFactory,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    train_cfg: TrainConfig,
    adv_cfg: Optional[AdvConfig],
    seeds: Sequence[int],
) -> RepeatedRuns:
    """Trains the same configuration once per seed (model init and training rng alike)."""
    if not seeds:
        raise TaggerError("repeat_runs needs at least one seed")
    results = [
        train(model_factory(seed), train_corpus, dev_corpus, replace(train_cfg, seed=seed), adv_cfg)
        for seed in seeds
    ]
    return RepeatedRuns(list(seeds), results)


def alpha_sweep(
    model_factory: ModelFactory,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    test_corpus: Corpus,
    train_cfg: TrainConfig,
    adv_cfg: AdvConfig,
    alphas: Sequence[float] = ALPHA_SWEEP_GRID,
    tags: Optional[Sequence[str]] = None,
) -> List[TightnessReport]:
    """
    Cluster tightness of the trained word embeddings for each alpha.

    The first report ("initial") comes from the untrained model; alpha 0 trains
    the baseline.
    """
    initial = model_factory(train_cfg.seed)
    reports = [cluster_tightness(initial.word_table, initial.word_stats, test_corpus, initial.vocab, tags, label="initial")]
    for alpha in alphas:
        cfg = replace(adv_cfg, alpha=alpha, enabled=alpha > 0)
        model = train(model_factory(train_cfg.seed), train_corpus, dev_corpus, train_cfg, cfg).model
        reports.append(
            cluster_tightness(model.word_table, model.word_stats, test_corpus, model.vocab, tags, label=f"alpha={alpha}")
        )
    return reports
