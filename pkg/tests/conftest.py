import pytest

from src.corpus import ParallelDocument, Side, Unit, build_vocab, make_instances
from src.latent import AugmentConfig
from src.neural import ModelConfig, Role, TrainConfig, build_model
from src.pipeline import da_vocabularies, sized_config


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow directional experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running directional experiment")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def toy_docs():
    """
    Three small aligned documents over a closed vocabulary.
    """
    return [
        ParallelDocument(doc_id="d1", src_sentences=[["a", "b", "c"], ["d", "e"]],
                         tgt_sentences=[["A", "B", "C"], ["D", "E"]]),
        ParallelDocument(doc_id="d2", src_sentences=[["b", "c", "a", "e"], ["a"]],
                         tgt_sentences=[["B", "C", "A", "E"], ["A"]]),
        ParallelDocument(doc_id="d3", src_sentences=[["e", "d", "c", "b", "a"], ["c", "c"]],
                         tgt_sentences=[["E", "D", "C", "B", "A"], ["C", "C"]]),
    ]


@pytest.fixture
def vocabs(toy_docs):
    return build_vocab(toy_docs, Side.SRC), build_vocab(toy_docs, Side.TGT)


@pytest.fixture
def sentence_instances(toy_docs, vocabs):
    return make_instances(toy_docs, Unit.SENTENCE, *vocabs)


@pytest.fixture
def document_instances(toy_docs, vocabs):
    return make_instances(toy_docs, Unit.DOCUMENT, *vocabs)


@pytest.fixture
def tiny_config(vocabs):
    src, tgt = vocabs
    return ModelConfig(layers=2, heads=2, model_dim=16, ffn_dim=32, src_vocab_size=len(src),
                       tgt_vocab_size=len(tgt), max_len=64, dropout=0.0, label_smoothing=0.0,
                       attention_mode="grouped", combined_top_layers=1)


@pytest.fixture
def da_vocabs(vocabs):
    """Input vocabulary, output vocabulary and span map of a target-side DA model."""
    return da_vocabularies(*vocabs)


@pytest.fixture
def span_map(da_vocabs):
    return da_vocabs[2]


@pytest.fixture
def da_config(tiny_config, da_vocabs):
    inputs, outputs, _ = da_vocabs
    return sized_config(tiny_config, inputs, outputs)


@pytest.fixture
def da_model(da_config):
    return build_model(da_config, Role.DA, seed=3).eval()



@pytest.fixture
def augment_config():
    return AugmentConfig(num_samples=3, beam_size=2, replicas=2, max_len_a=1, max_len_b=3)


@pytest.fixture
def quick_train():
    return TrainConfig(epochs=2, batch_size=4, learning_rate=1e-3, warmup_steps=2, patience=5, seed=5)
