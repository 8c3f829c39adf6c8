"""
Command-line entry point: train, tag, eval, analyze, generate and sweep.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
import argparse
import json
import logging
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import data
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, build_config, load_config
from .embeddings import load_pretrained
from .evaluation import (
    IOB2,
    IOBES,
    cluster_tightness,
    evaluate,
    format_tightness,
    frequency_buckets,
    neighbor_accuracy,
)
from .exceptions import TaggerError
from .log import JsonLinesWriter, setup_logging
from .network import WORD_HIDDEN_BY_PROFILE, TaggerArchitecture, TaggerModel
from .synthetic import deterministic_spec, generate, split_corpus, zipf_spec
from .trainer import ALPHA_SWEEP_GRID, alpha_sweep, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

CHECKPOINT_NAME = "model.zip"
EPOCH_LOG_NAME = "epochs.jsonl"
MANIFEST_NAME = "manifest.json"
SPLIT_NAMES = ("train", "dev", "test")


class UsageError(Exception):
    """Raised when arguments are inconsistent in a way argparse cannot express"""
    pass


@dataclass
class RunManifest:
    """Everything needed to repeat a training run."""
    command: str
    config: Dict[str, Any]
    seed: int
    data: Dict[str, Any]
    checkpoint: Optional[str] = None
    build: str = "unknown"
    timings: Dict[str, Any] = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def read(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))


def build_id() -> str:
    """`git describe` of the source tree, or "unknown" outside a repository."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            check=True,
        )
        return result.stdout.strip() or "unknown"
    except (subprocess.CalledProcessError, FileNotFoundError):
        return "unknown"


# --- Library glue ---

FORMAT_DEFAULTS = {"format": data.CONLLU, "token_col": 0, "tag_col": -1, "iobes": False}


def read_split(path: str, args: argparse.Namespace) -> data.Corpus:
    corpus = data.read_corpus(path, args.format, args.token_col, args.tag_col)
    return data.corpus_to_iobes(corpus) if getattr(args, "iobes", False) else corpus


def architecture(config: RunConfig, train_corpus: data.Corpus, tag_count: int) -> TaggerArchitecture:
    """Resolves word_hidden from the resource profile when it is not set explicitly."""
    arch_cfg = config.architecture
    profile = arch_cfg.resource_profile or data.resource_profile(train_corpus)
    return TaggerArchitecture(
        char_dim=arch_cfg.char_dim,
        char_hidden=arch_cfg.char_hidden,
        word_dim=arch_cfg.word_dim,
        word_hidden=arch_cfg.word_hidden or WORD_HIDDEN_BY_PROFILE[profile],
        tag_count=tag_count,
    )


def model_factory(
    train_corpus: data.Corpus,
    config: RunConfig,
    embeddings: Optional[str] = None,
) -> Callable[[int], TaggerModel]:
    """Returns seed -> freshly initialized model over the training vocabulary."""
    vocab = data.build_vocab(train_corpus, config.architecture.min_count)
    arch = architecture(config, train_corpus, len(vocab.tags))

    def build(seed: int) -> TaggerModel:
        table = load_pretrained(embeddings, vocab, arch.word_dim, seed) if embeddings else None
        return TaggerModel.initialize(
            arch, vocab, seed, word_table=table,
            char_frequency_weighting=config.train.char_frequency_weighting,
        )

    return build


def flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "alpha": getattr(args, "alpha", None),
        "gamma": getattr(args, "gamma", None),
        "adversarial_enabled": getattr(args, "adversarial", None),
        "max_epochs": getattr(args, "epochs", None),
        "seed": getattr(args, "seed", None),
        "threads": getattr(args, "threads", None),
    }


def replay_manifest(args: argparse.Namespace) -> RunConfig:
    """
    Restores config, data paths and corpus format from --manifest into args.

    Raises:
        UsageError: If other flags that shape the run were given as well.
    """
    run_flags = ("train", "dev", "embeddings", "config", "alpha", "gamma", "adversarial", "epochs", "seed", "threads")
    given = [f"--{k}" for k in run_flags if getattr(args, k) is not None]
    given += [f"--{k.replace('_', '-')}" for k, v in FORMAT_DEFAULTS.items() if getattr(args, k) != v]
    if given:
        raise UsageError(f"--manifest cannot be combined with {', '.join(sorted(given))}")

    manifest = RunManifest.read(args.manifest)
    args.train = manifest.data["train"]
    args.dev = manifest.data["dev"]
    args.embeddings = manifest.data.get("embeddings")
    for key, default in FORMAT_DEFAULTS.items():
        setattr(args, key, manifest.data.get(key, default))
    logger.info(f"Replaying {args.manifest} (build {manifest.build})")
    return build_config(manifest.config)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config is not None and not Path(args.config).exists():
        raise UsageError(f"config file {args.config} not found")
    return load_config(args.config, flag_overrides(args))


# --- Commands ---

def cmd_train(args: argparse.Namespace) -> int:
    """Trains a model; writes the checkpoint, the epoch log and the run manifest to --out."""
    started = time.time()
    config = replay_manifest(args) if args.manifest else resolve_config(args)
    if not args.train or not args.dev:
        raise UsageError("train needs --train and --dev (or --manifest)")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_corpus = read_split(args.train, args)
    dev_corpus = read_split(args.dev, args)
    model = model_factory(train_corpus, config, args.embeddings)(config.train.seed)
    adv_cfg = config.adversarial
    logger.info(f"Training {'adversarial' if adv_cfg.enabled else 'baseline'} model into {out_dir}")

    result = train(model, train_corpus, dev_corpus, config.train, adv_cfg, out_dir / EPOCH_LOG_NAME)
    checkpoint = save_checkpoint(result.model, out_dir / CHECKPOINT_NAME)
    finished = time.time()
    RunManifest(
        command="train",
        config=config.to_dict(),
        seed=config.train.seed,
        data={
            "train": str(args.train),
            "dev": str(args.dev),
            "embeddings": args.embeddings,
            **{key: getattr(args, key) for key in FORMAT_DEFAULTS},
        },
        checkpoint=str(checkpoint),
        build=build_id(),
        timings={
            "started": datetime.fromtimestamp(started).isoformat(),
            "finished": datetime.fromtimestamp(finished).isoformat(),
            "seconds": round(finished - started, 3),
        },
    ).write(out_dir / MANIFEST_NAME)
    print(f"Best dev accuracy {result.best_dev_accuracy * 100:.2f} at epoch {result.best_epoch}")
    return EXIT_OK


def cmd_tag(args: argparse.Namespace) -> int:
    """Writes the input corpus back in its own format with predicted tags."""
    model = load_checkpoint(args.model)
    corpus = data.read_corpus(args.input, args.format, args.token_col, args.tag_col)
    data.write_corpus(model.tag_corpus(corpus), args.output)
    logger.info(f"Tagged {len(corpus)} sentences into {args.output}")
    return EXIT_OK


def _has_gold_tags(corpus: data.Corpus) -> bool:
    return any(tag not in ("_", "") for tags in corpus.tag_sequences() for tag in tags)


def cmd_eval(args: argparse.Namespace) -> int:
    """Prints the accuracy report and any requested analyses; optionally writes them as JSON lines."""
    model = load_checkpoint(args.model)
    gold = read_split(args.gold, args)
    if not _has_gold_tags(gold):
        raise TaggerError(f"{args.gold} carries no gold tags")
    predicted = model.tag_corpus(gold)

    report = evaluate(gold, predicted, args.chunks)
    records: List[Dict[str, Any]] = [report.to_record()]
    print(report.format())
    if args.buckets:
        buckets = frequency_buckets(model.vocab, gold, predicted)
        print("\n" + buckets.format())
        records += buckets.to_records()
    if args.neighbors:
        neighbors = neighbor_accuracy(model.vocab, gold, predicted)
        print("\n" + neighbors.format())
        records += neighbors.to_records()
    if args.tightness:
        tightness = cluster_tightness(
            model.word_table, model.word_stats, gold, model.vocab, args.tags, not args.raw, label=Path(args.model).stem
        )
        print("\n" + format_tightness([tightness]))
        records += tightness.to_records()

    if args.report:
        with JsonLinesWriter(args.report) as out:
            for record in records:
                out.write(record)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    """Side-by-side bucket, neighbor and tightness tables for several checkpoints."""
    gold = read_split(args.gold, args)
    if not _has_gold_tags(gold):
        raise TaggerError(f"{args.gold} carries no gold tags")
    tightness = []
    records: List[Dict[str, Any]] = []
    for spec in args.models:
        label, _, path = spec.rpartition("=")
        label = label or Path(path).stem
        model = load_checkpoint(path)
        predicted = model.tag_corpus(gold)
        for analysis in (frequency_buckets, neighbor_accuracy):
            report = analysis(model.vocab, gold, predicted)
            print(f"\n{label}: {report.kind}\n{report.format()}")
            records += [dict(r, model=label) for r in report.to_records()]
        tightness.append(
            cluster_tightness(model.word_table, model.word_stats, gold, model.vocab, args.tags, not args.raw, label=label)
        )
    print("\n" + format_tightness(tightness))
    records += [r for t in tightness for r in t.to_records()]
    if args.report:
        with JsonLinesWriter(args.report) as out:
            for record in records:
                out.write(record)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    """Samples a synthetic corpus and writes one CoNLL-U file per split."""
    if len(args.sizes) > len(SPLIT_NAMES):
        raise UsageError(f"at most {len(SPLIT_NAMES)} split sizes")
    if args.deterministic:
        spec = deterministic_spec(args.tags, args.seed)
    else:
        spec = zipf_spec(args.tags, args.vocab, args.seed)
    corpus = generate(spec, sum(args.sizes), args.max_len, args.min_len)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_NAMES, split_corpus(corpus, args.sizes)):
        data.write_conllu(part, out_dir / f"{name}.conllu")
        print(f"Wrote {len(part)} sentences to {out_dir / f'{name}.conllu'}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    """Trains one model per alpha and reports cluster tightness of each."""
    config = resolve_config(args)
    train_corpus = read_split(args.train, args)
    dev_corpus = read_split(args.dev, args)
    test_corpus = read_split(args.test, args)
    factory = model_factory(train_corpus, config, args.embeddings)
    reports = alpha_sweep(
        factory, train_corpus, dev_corpus, test_corpus, config.train, config.adversarial, args.alphas, args.tags
    )
    print(format_tightness(reports))
    if args.report:
        with JsonLinesWriter(args.report) as out:
            for report in reports:
                for record in report.to_records():
                    out.write(record)
    return EXIT_OK


# --- Parser ---

def _add_format(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=(data.CONLLU, data.COLUMNS), default=data.CONLLU,
                        help="corpus format")
    parser.add_argument("--token-col", type=int, default=0, help="token column (columns format)")
    parser.add_argument("--tag-col", type=int, default=-1, help="tag column (columns format)")
    parser.add_argument("--iobes", action="store_true", help="convert IOB chunk tags to IOBES")


def _add_training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file (default ~/.adv_tagger_config if present)")
    parser.add_argument("--embeddings", help="pretrained word vectors, one 'word v1 ... vd' per line")
    parser.add_argument("--alpha", type=float, help="perturbation scale")
    parser.add_argument("--gamma", type=float, help="clean/adversarial mixing weight")
    parser.add_argument("--adversarial", action=argparse.BooleanOptionalAction, default=None,
                        help="enable adversarial training")
    parser.add_argument("--epochs", type=int, help="maximum number of epochs")
    parser.add_argument("--seed", type=int, help="seed for every random draw")
    parser.add_argument("--threads", type=int, help="worker threads (above 1 forfeits bit-reproducibility)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagger",
        description="BiLSTM-CRF sequence tagger with adversarial training",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR or OFF")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="train a model")
    p.add_argument("--train", help="training corpus")
    p.add_argument("--dev", help="development corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--manifest", help="repeat the run described by this manifest")
    _add_training(p)
    _add_format(p)
    p.set_defaults(handler=cmd_train)

    p = commands.add_parser("tag", help="tag a corpus with a trained model")
    p.add_argument("--model", required=True, help="checkpoint")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_format(p)
    p.set_defaults(handler=cmd_tag)

    p = commands.add_parser("eval", help="evaluate a model on gold data")
    p.add_argument("--model", required=True, help="checkpoint")
    p.add_argument("--gold", required=True, help="gold-tagged corpus")
    p.add_argument("--report", help="write records as JSON lines here")
    p.add_argument("--chunks", choices=(IOB2, IOBES), help="also score chunks in this scheme")
    p.add_argument("--buckets", action="store_true", help="accuracy by training frequency")
    p.add_argument("--neighbors", action="store_true", help="neighbor accuracy by training frequency")
    p.add_argument("--tightness", action="store_true", help="cluster tightness of word embeddings")
    p.add_argument("--tags", nargs="+", help="restrict tightness to these clusters")
    p.add_argument("--raw", action="store_true", help="tightness on the raw, un-normalized table")
    _add_format(p)
    p.set_defaults(handler=cmd_eval)

    p = commands.add_parser("analyze", help="compare analyses across checkpoints")
    p.add_argument("--models", nargs="+", required=True, help="checkpoints, optionally label=path")
    p.add_argument("--gold", required=True)
    p.add_argument("--report")
    p.add_argument("--tags", nargs="+")
    p.add_argument("--raw", action="store_true")
    _add_format(p)
    p.set_defaults(handler=cmd_analyze)

    p = commands.add_parser("generate", help="write a synthetic HMM corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--sizes", type=int, nargs="+", default=[2000, 200, 200], help="train/dev/test sentence counts")
    p.add_argument("--tags", type=int, default=8)
    p.add_argument("--vocab", type=int, default=500)
    p.add_argument("--max-len", type=int, default=20)
    p.add_argument("--min-len", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="one word per tag")
    p.set_defaults(handler=cmd_generate)

    p = commands.add_parser("sweep", help="cluster tightness across alpha values")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--alphas", type=float, nargs="+", default=list(ALPHA_SWEEP_GRID))
    p.add_argument("--tags", nargs="+")
    p.add_argument("--report")
    _add_training(p)
    _add_format(p)
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    setup_logging(args.log_level)
    try:
        return args.handler(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (TaggerError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
