from adv_tagger import AdvConfig, TaggerModel, TrainConfig, build_vocab, setup_logging, token_accuracy, train
from adv_tagger.network import architecture_for
from adv_tagger.synthetic import generate, split_corpus, zipf_spec


def main():
    setup_logging("INFO")
    spec = zipf_spec(n_tags=8, vocab_size=500, seed=7)
    train_corpus, dev_corpus, test_corpus = split_corpus(generate(spec, 2400, max_len=20), [2000, 200, 200])

    vocab = build_vocab(train_corpus)
    arch = architecture_for("low", word_dim=50, tag_count=len(vocab.tags))
    model = TaggerModel.initialize(arch, vocab, seed=1)

    result = train(model, train_corpus, dev_corpus, TrainConfig(max_epochs=30, seed=1), AdvConfig(alpha=0.05))
    predicted = result.model.tag_corpus(test_corpus)
    print(f"Test token accuracy: {token_accuracy(test_corpus, predicted) * 100:.2f}")


if __name__ == "__main__":
    main()
