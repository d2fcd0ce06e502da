import math

import pytest
import torch

from src.common.utils import get_logger
from src.neural.attention import (
    MASK_VALUE,
    MultiHeadAttention,
    causal_mask,
    combined_attention,
    gate_sum,
    global_attention,
    group_attention,
    group_mask,
)

logger = get_logger(__name__)


@pytest.fixture
def qkv():
    """Random [1, 2, 5, 4] query/key/value tensors (batch, heads, length, head_dim)."""
    gen = torch.Generator().manual_seed(0)
    return tuple(torch.randn(1, 2, 5, 4, generator=gen) for _ in range(3))


def test_group_mask_rule():
    mask = group_mask(torch.tensor([1, 1, 2]), torch.tensor([1, 2, 2]))
    expected = torch.tensor([[0.0, MASK_VALUE, MASK_VALUE], [0.0, MASK_VALUE, MASK_VALUE], [MASK_VALUE, 0.0, 0.0]])
    assert torch.equal(mask, expected)


def test_causal_mask_hides_future():
    mask = causal_mask(3)
    assert mask[0, 1] == MASK_VALUE and mask[0, 2] == MASK_VALUE
    assert mask[2].eq(0).all()


def test_single_key_returns_its_value():
    q = torch.randn(1, 4, 3)
    k = torch.randn(1, 1, 3)
    v = torch.tensor([[[1.0, -2.0, 0.5]]])
    out = global_attention(q, k, v)
    assert torch.allclose(out, v.expand(1, 4, 3))


def test_zero_query_gives_uniform_weights():
    q = torch.zeros(1, 2, 3)
    k = torch.randn(1, 4, 3)
    v = torch.randn(1, 4, 3)
    pad = torch.tensor([[False, False, False, True]])
    _, weights = global_attention(q, k, v, key_padding_mask=pad, return_weights=True)
    assert torch.allclose(weights[..., :3], torch.full((1, 2, 3), 1.0 / 3.0))
    assert weights[..., 3].max() < 1e-8


def test_hand_computed_two_by_two():
    q = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    k = torch.tensor([[1.0, 0.0], [1.0, 1.0]])
    v = torch.tensor([[1.0, 2.0], [3.0, 4.0]])
    out = global_attention(q, k, v)

    expected = []
    for row in q.tolist():
        scores = [sum(a * b for a, b in zip(row, key)) / math.sqrt(2) for key in k.tolist()]
        exps = [math.exp(s) for s in scores]
        total = sum(exps)
        weights = [e / total for e in exps]
        expected.append([sum(w * val[j] for w, val in zip(weights, v.tolist())) for j in range(2)])
    assert torch.allclose(out, torch.tensor(expected), atol=1e-6)


def test_rows_sum_to_one(qkv):
    q, k, v = qkv
    _, weights = global_attention(q, k, v, return_weights=True)
    assert torch.allclose(weights.sum(-1), torch.ones(1, 2, 5), atol=1e-6)


def test_no_mass_across_groups(qkv):
    q, k, v = qkv
    tags = torch.tensor([[1, 1, 2, 2, 3]])
    _, weights = group_attention(q, k, v, tags, tags, return_weights=True)
    cross = group_mask(tags, tags).unsqueeze(1) != 0
    assert weights[cross.expand_as(weights)].max() < 1e-8
    assert torch.allclose(weights.sum(-1), torch.ones(1, 2, 5), atol=1e-6)


def test_equal_tags_match_global(qkv):
    q, k, v = qkv
    tags = torch.ones(1, 5, dtype=torch.long)
    assert torch.allclose(group_attention(q, k, v, tags, tags), global_attention(q, k, v), atol=1e-6)


def test_gate_saturation():
    h_local = torch.randn(2, 3, 4)
    h_global = torch.randn(2, 3, 4)
    weight = torch.zeros(8, 4)
    assert torch.allclose(gate_sum(h_local, h_global, weight, torch.full((4,), 100.0)), h_local)
    assert torch.allclose(gate_sum(h_local, h_global, weight, torch.full((4,), -100.0)), h_global)


def test_gate_is_convex_combination():
    gen = torch.Generator().manual_seed(1)
    h_local = torch.randn(4, 6, 8, generator=gen)
    h_global = torch.randn(4, 6, 8, generator=gen)
    out = gate_sum(h_local, h_global, torch.randn(16, 8, generator=gen), torch.randn(8, generator=gen))
    lo = torch.minimum(h_local, h_global) - 1e-6
    hi = torch.maximum(h_local, h_global) + 1e-6
    assert ((out >= lo) & (out <= hi)).all()


def test_combined_attention_with_open_gate_is_group_attention(qkv):
    q, k, v = qkv
    tags = torch.tensor([[1, 1, 2, 2, 2]])
    out = combined_attention(q, k, v, tags, tags, torch.zeros(8, 4), torch.full((4,), 100.0))
    assert torch.allclose(out, group_attention(q, k, v, tags, tags), atol=1e-6)


class TestMultiHeadAttention:
    def test_group_kind_blocks_other_sentences(self):
        torch.manual_seed(0)
        attn = MultiHeadAttention(model_dim=8, heads=2, gated=False).eval()
        x = torch.randn(1, 4, 8)
        tags = torch.tensor([[1, 1, 2, 2]])
        base = attn(x, x, x, kind="group", g_q=tags, g_k=tags)
        changed = x.clone()
        changed[0, 3] += 5.0
        out = attn(changed, changed, changed, kind="group", g_q=tags, g_k=tags)
        assert torch.allclose(base[0, :2], out[0, :2], atol=1e-6)
        assert not torch.allclose(base[0, 2:], out[0, 2:])

    def test_combined_needs_gate(self):
        attn = MultiHeadAttention(model_dim=8, heads=2, gated=False)
        x = torch.randn(1, 3, 8)
        tags = torch.ones(1, 3, dtype=torch.long)
        with pytest.raises(ValueError, match="combined"):
            attn(x, x, x, kind="combined", g_q=tags, g_k=tags)

    def test_gated_layer_has_gate_parameters(self):
        attn = MultiHeadAttention(model_dim=8, heads=2, gated=True)
        assert attn.gate.weight.shape == (8, 16)
        x = torch.randn(2, 3, 8)
        tags = torch.ones(2, 3, dtype=torch.long)
        assert attn(x, x, x, kind="combined", g_q=tags, g_k=tags).shape == (2, 3, 8)


def test_row_without_group_keys_ignores_pads():
    q = torch.zeros(1, 1, 3)
    k = torch.randn(1, 4, 3)
    v = torch.randn(1, 4, 3)
    pad = torch.tensor([[False, False, False, True]])
    _, weights = group_attention(q, k, v, torch.tensor([[3]]), torch.tensor([[1, 1, 2, 0]]),
                                 key_padding_mask=pad, return_weights=True)
    assert torch.allclose(weights[..., :3], torch.full((1, 1, 3), 1.0 / 3.0))
    assert weights[..., 3].item() == 0.0


def test_all_pad_row_stays_finite():
    q = torch.randn(1, 2, 3)
    k = torch.randn(1, 2, 3)
    v = torch.randn(1, 2, 3)
    out = global_attention(q, k, v, key_padding_mask=torch.tensor([[True, True]]))
    assert torch.isfinite(out).all()
