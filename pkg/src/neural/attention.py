import math
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

# Additive mask value; finite so fully masked rows stay NaN-free in 32-bit.
MASK_VALUE = -1e9


def _pad_fill(dtype: torch.dtype) -> float:
    # below any MASK_VALUE sum, so a row with no key in its group falls back to unpadded keys
    return torch.finfo(dtype).min


def group_mask(g_q: torch.Tensor, g_k: torch.Tensor) -> torch.Tensor:
    """M(G_Q, G_K): 0 where query and key tags match, MASK_VALUE elsewhere. Shape [..., Lq, Lk]."""
    same = g_q.unsqueeze(-1) == g_k.unsqueeze(-2)
    mask = torch.zeros(same.shape, dtype=torch.get_default_dtype(), device=g_q.device)
    return mask.masked_fill(~same, MASK_VALUE)


def causal_mask(length: int, device=None, dtype=None) -> torch.Tensor:
    upper = torch.ones(length, length, dtype=torch.bool, device=device).triu(1)
    mask = torch.zeros(length, length, dtype=dtype or torch.get_default_dtype(), device=device)
    return mask.masked_fill(upper, MASK_VALUE)


def _expand_like(bias: torch.Tensor, scores: torch.Tensor) -> torch.Tensor:
    # [B, Lq, Lk] bias against [B, H, Lq, Lk] scores
    while bias.dim() < scores.dim():
        bias = bias.unsqueeze(-3)
    return bias.to(scores.dtype)


def _attend(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, bias: Optional[torch.Tensor],
            key_padding_mask: Optional[torch.Tensor], dropout_p: float = 0.0, training: bool = False,
            return_weights: bool = False):
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.size(-1))
    if bias is not None:
        scores = scores + _expand_like(bias, scores)
    if key_padding_mask is not None:
        pad = key_padding_mask.unsqueeze(-2)
        while pad.dim() < scores.dim():
            pad = pad.unsqueeze(-3)
        scores = scores.masked_fill(pad, _pad_fill(scores.dtype))
    weights = torch.softmax(scores, dim=-1)
    if dropout_p > 0.0 and training:
        weights = F.dropout(weights, p=dropout_p, training=True)
    out = weights @ v
    return (out, weights) if return_weights else out


def global_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor,
                     key_padding_mask: Optional[torch.Tensor] = None, attn_mask: Optional[torch.Tensor] = None,
                     dropout_p: float = 0.0, training: bool = False, return_weights: bool = False):
    """softmax(QK^T / sqrt(d_k)) V over [..., L, d_k] tensors; key_padding_mask is True at pads."""
    return _attend(q, k, v, attn_mask, key_padding_mask, dropout_p, training, return_weights)


def group_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, g_q: torch.Tensor, g_k: torch.Tensor,
                    key_padding_mask: Optional[torch.Tensor] = None, attn_mask: Optional[torch.Tensor] = None,
                    dropout_p: float = 0.0, training: bool = False, return_weights: bool = False):
    """softmax(QK^T / sqrt(d_k) + M(G_Q, G_K)) V."""
    bias = group_mask(g_q, g_k)
    if attn_mask is not None:
        bias = bias + attn_mask
    return _attend(q, k, v, bias, key_padding_mask, dropout_p, training, return_weights)


def gate_sum(h_local: torch.Tensor, h_global: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """H = H_L * g + H_G * (1 - g), g = sigmoid([H_L, H_G] W + b); W has shape [2d, d]."""
    g = torch.sigmoid(torch.cat([h_local, h_global], dim=-1) @ weight + bias)
    return h_local * g + h_global * (1.0 - g)


def combined_attention(q: torch.Tensor, k: torch.Tensor, v: torch.Tensor, g_q: torch.Tensor, g_k: torch.Tensor,
                       weight: torch.Tensor, bias: torch.Tensor,
                       key_padding_mask: Optional[torch.Tensor] = None,
                       attn_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
    h_local = group_attention(q, k, v, g_q, g_k, key_padding_mask, attn_mask)
    h_global = global_attention(q, k, v, key_padding_mask, attn_mask)
    return gate_sum(h_local, h_global, weight, bias)


class MultiHeadAttention(nn.Module):
    """
    Multi-head attention with shared Q/K/V/output projections for the group and global paths.
    kind='global' | 'group' | 'combined'; the gate exists only when gated=True.
    """

    def __init__(self, model_dim: int, heads: int, dropout: float = 0.0, gated: bool = False):
        super().__init__()
        self.model_dim = model_dim
        self.heads = heads
        self.head_dim = model_dim // heads
        self.dropout = dropout
        self.q_proj = nn.Linear(model_dim, model_dim)
        self.k_proj = nn.Linear(model_dim, model_dim)
        self.v_proj = nn.Linear(model_dim, model_dim)
        self.out_proj = nn.Linear(model_dim, model_dim)
        self.gate = nn.Linear(2 * model_dim, model_dim) if gated else None

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, length, _ = x.shape
        return x.view(b, length, self.heads, self.head_dim).transpose(1, 2)

    def _merge(self, x: torch.Tensor) -> torch.Tensor:
        b, _, length, _ = x.shape
        return x.transpose(1, 2).contiguous().view(b, length, self.model_dim)

    def forward(self, query: torch.Tensor, key: torch.Tensor, value: torch.Tensor, kind: str = "global",
                g_q: Optional[torch.Tensor] = None, g_k: Optional[torch.Tensor] = None,
                key_padding_mask: Optional[torch.Tensor] = None,
                attn_mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        q = self._split(self.q_proj(query))
        k = self._split(self.k_proj(key))
        v = self._split(self.v_proj(value))
        p = self.dropout

        if kind == "global":
            out = global_attention(q, k, v, key_padding_mask, attn_mask, p, self.training)
            return self.out_proj(self._merge(out))

        h_local = self.out_proj(self._merge(
            group_attention(q, k, v, g_q, g_k, key_padding_mask, attn_mask, p, self.training)
        ))
        if kind == "group":
            return h_local
        if kind != "combined" or self.gate is None:
            raise ValueError(f"unsupported attention kind {kind!r} for this layer")
        h_global = self.out_proj(self._merge(
            global_attention(q, k, v, key_padding_mask, attn_mask, p, self.training)
        ))
        return gate_sum(h_local, h_global, self.gate.weight.t(), self.gate.bias)
