from .adversarial import AdvConfig, Perturbation, adversarial_loss, fgm_perturbation, input_gradient
from .autodiff import GradientMap, Tape, Tensor, grad_check
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ArchitectureConfig, RunConfig, load_config
from .crf import CrfParams, log_partition, nll, sequence_score, viterbi
from .data import Corpus, Sentence, Token, Vocab, build_vocab, read_conll_columns, read_conllu, read_corpus, write_corpus
from .embeddings import EmbeddingTable, NormalizationStats, compute_stats, init_random, load_pretrained, normalize
from .evaluation import (
    BucketReport,
    EvalReport,
    TightnessReport,
    chunk_f1,
    cluster_tightness,
    frequency_buckets,
    neighbor_accuracy,
    sentence_accuracy,
    token_accuracy,
)
from .exceptions import (
    AlignmentError,
    CheckpointError,
    ConfigError,
    CorpusFormatError,
    EmbeddingFormatError,
    LookupRangeError,
    NonFiniteError,
    NonScalarRootError,
    ShapeMismatchError,
    TaggerError,
    TagSchemeError,
    TrainingDivergedError,
    UnknownTagError,
)
from .log import setup_logging
from .network import TaggerArchitecture, TaggerModel, architecture_for, encode_sentence
from .synthetic import HmmSpec, generate
from .trainer import TrainConfig, TrainResult, Trainer, alpha_sweep, repeat_runs, select_alpha, train

__all__ = [
    'AdvConfig', 'Perturbation', 'adversarial_loss', 'fgm_perturbation', 'input_gradient',
    'GradientMap', 'Tape', 'Tensor', 'grad_check',
    'load_checkpoint', 'save_checkpoint',
    'ArchitectureConfig', 'RunConfig', 'load_config',
    'CrfParams', 'log_partition', 'nll', 'sequence_score', 'viterbi',
    'Corpus', 'Sentence', 'Token', 'Vocab', 'build_vocab', 'read_conll_columns', 'read_conllu', 'read_corpus',
    'write_corpus',
    'EmbeddingTable', 'NormalizationStats', 'compute_stats', 'init_random', 'load_pretrained', 'normalize',
    'BucketReport', 'EvalReport', 'TightnessReport', 'chunk_f1', 'cluster_tightness', 'frequency_buckets',
    'neighbor_accuracy', 'sentence_accuracy', 'token_accuracy',
    'AlignmentError', 'CheckpointError', 'ConfigError', 'CorpusFormatError', 'EmbeddingFormatError',
    'LookupRangeError', 'NonFiniteError', 'NonScalarRootError', 'ShapeMismatchError', 'TaggerError',
    'TagSchemeError', 'TrainingDivergedError', 'UnknownTagError',
    'setup_logging',
    'TaggerArchitecture', 'TaggerModel', 'architecture_for', 'encode_sentence',
    'HmmSpec', 'generate',
    'TrainConfig', 'TrainResult', 'Trainer', 'alpha_sweep', 'repeat_runs', 'select_alpha', 'train',
]
