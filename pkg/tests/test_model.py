import math

import numpy as np
import pytest
import torch
from pydantic import ValidationError

from src.common.utils import get_logger
from src.corpus.vocab import PAD_ID, SEP_ID
from src.neural import (
    CheckpointError,
    Example,
    ModelConfig,
    NumericalFault,
    Role,
    build_model,
    forward_log_probs,
    gradient_check,
    load_checkpoint,
    make_batch,
    nll_loss_and_grads,
    read_checkpoint_header,
    save_checkpoint,
    sequence_log_probs,
)
from src.neural.config import AttentionMode
from src.neural.model import ModelShapeError, weighted_loss

logger = get_logger(__name__)


def examples_of(instances):
    return [Example(i.source, i.src_group_tags, i.target, i.tgt_group_tags) for i in instances]


@pytest.fixture
def doc_batch(document_instances):
    """All three toy documents padded into one batch."""
    return make_batch(examples_of(document_instances))


def test_make_batch_layout(doc_batch, document_instances):
    first = document_instances[0]
    assert doc_batch.src.shape[0] == 3
    assert doc_batch.tgt_in[0, 0].item() == 1
    assert doc_batch.tgt_out[0, len(first.target)].item() == 2
    # pads carry tag 0
    assert (doc_batch.src_tags[doc_batch.src == PAD_ID] == 0).all()
    assert doc_batch.tgt_tags[0, len(first.target)].item() == first.tgt_group_tags[-1]


def test_empty_batch_rejected():
    with pytest.raises(ModelShapeError):
        make_batch([])


def test_output_rows_are_distributions(da_model, doc_batch):
    log_probs = forward_log_probs(da_model, doc_batch)
    assert log_probs.shape[:2] == doc_batch.tgt_in.shape
    assert torch.allclose(log_probs.exp().sum(-1), torch.ones(doc_batch.tgt_in.shape), atol=1e-5)


def test_same_seed_same_parameters(tiny_config):
    first = build_model(tiny_config, Role.MT, seed=11).state_dict()
    second = build_model(tiny_config, Role.MT, seed=11).state_dict()
    assert all(torch.equal(first[name], second[name]) for name in first)


def test_modes_share_parameters(tiny_config):
    plain = build_model(tiny_config.model_copy(update={"attention_mode": AttentionMode.PLAIN}), seed=2)
    grouped = build_model(tiny_config, seed=2)
    assert list(plain.state_dict()) == list(grouped.state_dict())
    assert [plain.layer_kind(i) for i in range(2)] == ["global", "global"]
    assert [grouped.layer_kind(i) for i in range(2)] == ["group", "combined"]


def test_unvalidated_mode_string_still_builds(tiny_config):
    model = build_model(tiny_config.model_copy(update={"attention_mode": "plain"}), seed=2)
    assert model.layer_kind(1) == "global"


def test_plain_matches_grouped_on_single_sentence(tiny_config, sentence_instances):
    plain = build_model(tiny_config.model_copy(update={"attention_mode": AttentionMode.PLAIN}), seed=2).eval()
    grouped = build_model(tiny_config, seed=2).eval()
    batch = make_batch(examples_of(sentence_instances[:1]))
    assert torch.allclose(plain(batch), grouped(batch), atol=1e-6)


def test_group_layers_isolate_sentences(tiny_config, document_instances):
    config = tiny_config.model_copy(update={"combined_top_layers": 0})
    model = build_model(config, seed=4).eval()
    doc = document_instances[0]
    base = make_batch(examples_of([doc]))
    changed_source = list(doc.source)
    changed_source[-1] = 5 if changed_source[-1] != 5 else 6
    changed = make_batch([Example(changed_source, doc.src_group_tags, doc.target, doc.tgt_group_tags)])

    first_sentence = [t == 1 for t in base.tgt_tags[0].tolist()]
    out_base, out_changed = model(base)[0], model(changed)[0]
    assert torch.allclose(out_base[first_sentence], out_changed[first_sentence], atol=1e-6)
    assert not torch.allclose(out_base, out_changed)


def test_combined_layers_see_other_sentences(tiny_config, document_instances):
    model = build_model(tiny_config, seed=4).eval()
    doc = document_instances[0]
    changed_source = list(doc.source)
    changed_source[-1] = 5 if changed_source[-1] != 5 else 6
    base = make_batch(examples_of([doc]))
    changed = make_batch([Example(changed_source, doc.src_group_tags, doc.target, doc.tgt_group_tags)])
    assert not torch.allclose(model(base)[0, 0], model(changed)[0, 0])


def test_uniform_logits_give_log_vocab_loss(da_model, doc_batch):
    with torch.no_grad():
        da_model.output.weight.zero_()
        da_model.output.bias.zero_()
    loss = weighted_loss(da_model(doc_batch), doc_batch, 0.0)
    assert abs(loss.item() - math.log(da_model.config.tgt_vocab_size)) < 0.05


def test_sequence_log_probs_match_token_sum(da_model, sentence_instances):
    batch = make_batch(examples_of(sentence_instances[:2]))
    log_probs = da_model(batch)
    scores = sequence_log_probs(da_model, batch)
    for b in range(2):
        n = len(sentence_instances[b].target) + 1
        expected = sum(log_probs[b, t, batch.tgt_out[b, t]].item() for t in range(n))
        assert abs(scores[b].item() - expected) < 1e-4


def test_gradient_step_decreases_loss(da_model, doc_batch):
    loss, grads = nll_loss_and_grads(da_model, doc_batch)
    assert set(grads) == {name for name, _ in da_model.named_parameters()}
    with torch.no_grad():
        for name, param in da_model.named_parameters():
            param -= 1e-3 * grads[name]
    after, _ = nll_loss_and_grads(da_model, doc_batch)
    assert after < loss


# float64 throughout: float32 central differences are rounding-limited near 1e-4 absolute at this loss scale
def test_gradient_check_covers_every_tensor_class(da_model, doc_batch):
    report = gradient_check(da_model, doc_batch, samples_per_tensor=2, seed=1)
    assert report.max_relative_error < 1e-3
    assert set(report.by_class()) == {"embedding", "gate", "layer_norm", "feed_forward", "output", "projection"}
    assert len(report.tensors) == len(list(da_model.parameters()))


def test_gradient_check_on_a_model_dim_64_model(da_config, doc_batch):
    config = da_config.model_copy(update={"heads": 4, "model_dim": 64, "ffn_dim": 128, "label_smoothing": 0.1})
    model = build_model(config, Role.DA, seed=6)
    report = gradient_check(model, doc_batch, samples_per_tensor=2, seed=2)
    assert report.max_relative_error < 1e-3
    assert "gate" in report.by_class()


def test_loss_ignores_batch_order(da_model, sentence_instances):
    examples = examples_of(sentence_instances)
    order = np.random.default_rng(3).permutation(len(examples))
    batches = [make_batch(examples), make_batch([examples[i] for i in order]), make_batch(examples[::-1])]
    with torch.no_grad():
        losses = [weighted_loss(da_model(batch), batch, 0.1).item() for batch in batches]
    assert losses[1] == pytest.approx(losses[0], abs=1e-6)
    assert losses[2] == pytest.approx(losses[0], abs=1e-6)


def test_non_finite_activations_name_the_layer(da_model, doc_batch):
    with torch.no_grad():
        da_model.src_embed.weight.fill_(float("nan"))
    with pytest.raises(NumericalFault) as info:
        da_model(doc_batch)
    assert info.value.layer == "encoder.0"


def test_sequence_longer_than_max_len(da_model):
    long = list(range(5, 10)) * 20
    with pytest.raises(ModelShapeError, match="max_len"):
        da_model(make_batch([Example(long, [1] * len(long), [5], [1])]))


def test_invalid_head_split():
    with pytest.raises(ValidationError):
        ModelConfig(model_dim=10, heads=4)
    with pytest.raises(ValidationError):
        ModelConfig(layers=2, combined_top_layers=3)


class TestCheckpoint:
    def test_round_trip_is_exact(self, tmp_path, da_model, doc_batch):
        path = tmp_path / "da.ckpt"
        save_checkpoint(path, da_model, seed=3, vocab_sha256={"src": "aa", "tgt": "bb"}, config_sha256="cc")
        loaded, header = load_checkpoint(path)
        assert header["role"] == "da"
        assert header["seed"] == 3
        assert header["config_sha256"] == "cc"
        assert loaded.vocab_sha256 == {"src": "aa", "tgt": "bb"}
        assert loaded.role is Role.DA
        assert not loaded.training
        assert torch.allclose(loaded(doc_batch), da_model(doc_batch), atol=1e-6)

    def test_saving_is_deterministic(self, tmp_path, da_model):
        first = save_checkpoint(tmp_path / "a.ckpt", da_model, seed=3)
        second = save_checkpoint(tmp_path / "b.ckpt", da_model, seed=3)
        assert first == second
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_header_lists_tensors(self, tmp_path, da_model):
        path = tmp_path / "da.ckpt"
        save_checkpoint(path, da_model, seed=3)
        header = read_checkpoint_header(path)
        names = [t["name"] for t in header["tensors"]]
        assert names == list(da_model.state_dict())
        assert header["model_config"]["combined_top_layers"] == 1

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b'{"format": "something-else", "version": 1}\n')
        with pytest.raises(CheckpointError, match="not a"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path, da_model):
        path = tmp_path / "da.ckpt"
        save_checkpoint(path, da_model, seed=3)
        data = path.read_bytes()
        path.write_bytes(data[:-64])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.ckpt")


def test_document_separator_is_a_vocabulary_token(document_instances):
    assert SEP_ID in document_instances[0].source
