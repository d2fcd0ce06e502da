import numpy as np
import pytest

from src.common.utils import get_logger
from src.neural import Example, ModelConfig, Role, TrainConfig, TrainingDivergedError, build_model, train
from src.neural.model import ModelShapeError
from src.neural.trainer import evaluate_loss, token_accuracy, warmup_inverse_sqrt

logger = get_logger(__name__)


@pytest.fixture
def toy_examples(sentence_instances):
    return [Example(i.source, i.src_group_tags, i.target, i.tgt_group_tags) for i in sentence_instances]


def test_schedule_warms_up_then_decays():
    factor = warmup_inverse_sqrt(4)
    assert factor(0) == pytest.approx(0.25)
    assert factor(3) == pytest.approx(1.0)
    assert factor(15) == pytest.approx(0.5)
    assert warmup_inverse_sqrt(0)(10) == 1.0


def test_same_seed_gives_identical_curves(tiny_config, toy_examples, quick_train):
    _, first = train(build_model(tiny_config, Role.MT, seed=1), toy_examples, quick_train)
    _, second = train(build_model(tiny_config, Role.MT, seed=1), toy_examples, quick_train)
    assert first.train_loss == second.train_loss
    assert first.steps == second.steps == 2 * 2


def test_training_reduces_loss(tiny_config, toy_examples):
    config = TrainConfig(epochs=15, batch_size=2, learning_rate=3e-3, warmup_steps=5, patience=15, seed=2)
    model = build_model(tiny_config, Role.MT, seed=1)
    before = evaluate_loss(model, toy_examples)
    model, curve = train(model, toy_examples, config)
    assert evaluate_loss(model, toy_examples) < before
    assert curve.train_loss[-1] < curve.train_loss[0]
    assert not model.training


def test_patience_zero_stops_after_first_non_improving_epoch(tiny_config, toy_examples):
    config = TrainConfig(epochs=10, batch_size=4, learning_rate=1e-4, warmup_steps=0, patience=0,
                         min_delta=1.0, seed=3)
    _, curve = train(build_model(tiny_config, seed=1), toy_examples, config, dev_examples=toy_examples)
    assert len(curve.dev_loss) == 2
    assert curve.best_epoch == 1
    assert curve.stopped_early


def test_best_epoch_parameters_are_restored(tiny_config, toy_examples):
    config = TrainConfig(epochs=4, batch_size=3, learning_rate=1e-3, warmup_steps=1, patience=4, seed=4)
    model, curve = train(build_model(tiny_config, seed=1), toy_examples, config, dev_examples=toy_examples[:2])
    assert evaluate_loss(model, toy_examples[:2]) == pytest.approx(curve.best_dev_loss, rel=1e-5)
    assert curve.best_dev_loss == min(curve.dev_loss)


def test_non_finite_loss_aborts_with_diagnostics(tiny_config, toy_examples, quick_train):
    poisoned = [e._replace(weight=float("inf")) for e in toy_examples]
    with pytest.raises(TrainingDivergedError) as info:
        train(build_model(tiny_config, seed=1), poisoned, quick_train)
    assert info.value.epoch == 1
    assert info.value.step == 0
    assert info.value.learning_rate > 0


def test_empty_training_set(tiny_config, quick_train):
    with pytest.raises(ModelShapeError):
        train(build_model(tiny_config, seed=1), [], quick_train)


@pytest.mark.slow
def test_copy_task_is_learned():
    rng = np.random.default_rng(0)

    def pairs(n):
        out = []
        for _ in range(n):
            tokens = [int(t) for t in rng.integers(5, 20, size=int(rng.integers(3, 9)))]
            out.append(Example(tokens, [1] * len(tokens), tokens, [1] * len(tokens)))
        return out

    train_set, dev_set = pairs(200), pairs(40)
    config = ModelConfig(layers=2, heads=4, model_dim=64, ffn_dim=128, src_vocab_size=20, tgt_vocab_size=20,
                         max_len=32, dropout=0.0, label_smoothing=0.0)
    model, _ = train(build_model(config, seed=1), train_set,
                     TrainConfig(epochs=50, batch_size=16, learning_rate=1e-3, warmup_steps=50, patience=50, seed=1),
                     dev_examples=dev_set)
    assert token_accuracy(model, dev_set) > 0.95
