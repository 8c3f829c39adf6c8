import os

import numpy as np
import pytest

from adv_tagger.data import Corpus, build_vocab
from adv_tagger.network import TaggerModel
from helpers import make_corpus, tiny_arch

RUN_SLOW_ENV = "ADV_TAGGER_RUN_SLOW"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training runs, enabled by ADV_TAGGER_RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get(RUN_SLOW_ENV) == "1":
        return
    skip = pytest.mark.skip(reason=f"set {RUN_SLOW_ENV}=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_corpus() -> Corpus:
    return make_corpus([
        [("The", "DET"), ("cat", "NOUN"), ("sat", "VERB")],
        [("A", "DET"), ("dog", "NOUN"), ("ran", "VERB"), ("fast", "ADV")],
        [("the", "DET"), ("dog", "NOUN"), ("sat", "VERB")],
        [("Cats", "NOUN"), ("ran", "VERB")],
    ])


@pytest.fixture
def toy_vocab(toy_corpus):
    return build_vocab(toy_corpus)


@pytest.fixture
def toy_model(toy_vocab) -> TaggerModel:
    return TaggerModel.initialize(tiny_arch(len(toy_vocab.tags)), toy_vocab, seed=3)
