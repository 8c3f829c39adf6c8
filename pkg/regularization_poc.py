#!/usr/bin/env python3
"""
Baseline vs. adversarial training on a small synthetic training set.

Trains both configurations over several seeds and compares dev NLL learning
curves and the mean best dev NLL. Adversarial training should overfit less.
"""

from statistics import mean
from typing import Dict, List

from adv_tagger import AdvConfig, TrainConfig, build_vocab, setup_logging
from adv_tagger.evaluation import format_table
from adv_tagger.network import TaggerModel, architecture_for
from adv_tagger.synthetic import generate, split_corpus, zipf_spec
from adv_tagger.trainer import TrainResult, repeat_runs

SEEDS = [1, 2, 3, 4, 5]
TRAIN_SENTENCES = 200
EPOCHS = 20


def learning_curves(results: List[TrainResult]) -> List[float]:
    """Dev NLL per epoch, averaged over runs (shorter runs stop contributing)."""
    longest = max(len(r.history) for r in results)
    curve = []
    for epoch in range(longest):
        losses = [r.history[epoch].dev_loss for r in results if epoch < len(r.history)]
        curve.append(mean(losses))
    return curve


def main():
    print("Regularization check: baseline vs. adversarial training")
    print("=" * 56)
    setup_logging("WARNING")

    spec = zipf_spec(n_tags=8, vocab_size=500, seed=7)
    train_corpus, dev_corpus = split_corpus(generate(spec, TRAIN_SENTENCES + 200, max_len=20), [TRAIN_SENTENCES, 200])
    vocab = build_vocab(train_corpus)
    arch = architecture_for("low", word_dim=50, tag_count=len(vocab.tags))

    def factory(seed: int) -> TaggerModel:
        return TaggerModel.initialize(arch, vocab, seed)

    train_cfg = TrainConfig(max_epochs=EPOCHS, patience=EPOCHS)
    runs: Dict[str, List[TrainResult]] = {}
    for name, adv_cfg in (("baseline", AdvConfig(enabled=False)), ("adversarial", AdvConfig(alpha=0.05, gamma=0.5))):
        print(f"Training {name} over seeds {SEEDS}...")
        runs[name] = repeat_runs(factory, train_corpus, dev_corpus, train_cfg, adv_cfg, SEEDS).results

    curves = {name: learning_curves(results) for name, results in runs.items()}
    rows = [
        [str(epoch)] + [f"{curves[name][epoch]:.4f}" if epoch < len(curves[name]) else "-" for name in runs]
        for epoch in range(max(len(c) for c in curves.values()))
    ]
    print("\nMean dev NLL per epoch")
    print(format_table(["Epoch"] + list(runs), rows))

    print("\nMean best dev NLL / best dev accuracy")
    print(format_table(
        ["Model", "NLL", "Accuracy"],
        [
            [name, f"{mean(r.best_dev_loss for r in results):.4f}",
             f"{mean(r.best_dev_accuracy for r in results) * 100:.2f}"]
            for name, results in runs.items()
        ],
    ))


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\nExiting...")
