import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from src.common.errors import RuntimeFault, TargetAugError, ValidationFailure
from src.common.utils import get_logger, seeded_torch
from src.corpus.vocab import BOS_ID, EOS_ID, PAD_ID
from src.neural.attention import MultiHeadAttention, causal_mask
from src.neural.config import AttentionMode, ModelConfig, Role

logger = get_logger(__name__)


class ModelError(TargetAugError):
    """Custom exception for model construction and forward errors."""
    pass


class ModelShapeError(ValidationFailure, ModelError):
    """Custom exception for batches that do not fit the model."""
    pass


class NumericalFault(RuntimeFault, ModelError):
    """Custom exception for non-finite activations; names the layer that produced them."""
    def __init__(self, message: str, layer: str):
        super().__init__(message)
        self.layer = layer


class Example(NamedTuple):
    """One training or scoring pair. Tags are per token; weight scales its token losses."""
    src: List[int]
    src_tags: List[int]
    tgt: List[int]
    tgt_tags: List[int]
    weight: float = 1.0


@dataclass
class Batch:
    src: torch.Tensor        # [B, S]
    src_tags: torch.Tensor   # [B, S]
    tgt_in: torch.Tensor     # [B, T] bos + target
    tgt_out: torch.Tensor    # [B, T] target + eos
    tgt_tags: torch.Tensor   # [B, T]
    weights: torch.Tensor    # [B]

    @property
    def src_pad_mask(self) -> torch.Tensor:
        return self.src == PAD_ID

    @property
    def tgt_pad_mask(self) -> torch.Tensor:
        return self.tgt_out == PAD_ID

    def __len__(self) -> int:
        return self.src.size(0)


def decoder_tags(tgt_tags: Sequence[int]) -> List[int]:
    """Tags of the decoder positions: one per target token plus the eos step."""
    tags = list(tgt_tags)
    return tags + [tags[-1] if tags else 1]


def make_batch(examples: Sequence[Example]) -> Batch:
    """Pad a list of examples into one batch; pad tags are 0 so they never match a real group."""
    if not examples:
        raise ModelShapeError("cannot build an empty batch")
    b = len(examples)
    s = max(1, max(len(e.src) for e in examples))
    t = max(len(e.tgt) for e in examples) + 1

    src = torch.full((b, s), PAD_ID, dtype=torch.long)
    src_tags = torch.zeros((b, s), dtype=torch.long)
    tgt_in = torch.full((b, t), PAD_ID, dtype=torch.long)
    tgt_out = torch.full((b, t), PAD_ID, dtype=torch.long)
    tgt_tags = torch.zeros((b, t), dtype=torch.long)
    weights = torch.empty(b, dtype=torch.get_default_dtype())

    for i, ex in enumerate(examples):
        if len(ex.src) != len(ex.src_tags) or len(ex.tgt) != len(ex.tgt_tags):
            raise ModelShapeError(f"example {i}: tags do not align with tokens")
        if ex.src:
            src[i, :len(ex.src)] = torch.tensor(ex.src)
            src_tags[i, :len(ex.src)] = torch.tensor(ex.src_tags)
        n = len(ex.tgt) + 1
        tgt_in[i, :n] = torch.tensor([BOS_ID] + list(ex.tgt))
        tgt_out[i, :n] = torch.tensor(list(ex.tgt) + [EOS_ID])
        tgt_tags[i, :n] = torch.tensor(decoder_tags(ex.tgt_tags))
        weights[i] = float(ex.weight)
    return Batch(src, src_tags, tgt_in, tgt_out, tgt_tags, weights)


def sinusoidal_positions(max_len: int, dim: int) -> torch.Tensor:
    position = torch.arange(max_len, dtype=torch.float32).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float32) * (-math.log(10000.0) / dim))
    table = torch.zeros(max_len, dim)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div)[:, : dim // 2]
    return table


class FeedForward(nn.Module):
    def __init__(self, model_dim: int, ffn_dim: int, dropout: float):
        super().__init__()
        self.fc1 = nn.Linear(model_dim, ffn_dim)
        self.fc2 = nn.Linear(ffn_dim, model_dim)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.dropout(torch.relu(self.fc1(x))))


class EncoderLayer(nn.Module):
    def __init__(self, config: ModelConfig, gated: bool):
        super().__init__()
        self.self_attn = MultiHeadAttention(config.model_dim, config.heads, config.dropout, gated=gated)
        self.ffn = FeedForward(config.model_dim, config.ffn_dim, config.dropout)
        self.norm1 = nn.LayerNorm(config.model_dim)
        self.norm2 = nn.LayerNorm(config.model_dim)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, tags, pad_mask, kind: str):
        x = self.norm1(x + self.dropout(self.self_attn(x, x, x, kind, tags, tags, pad_mask)))
        return self.norm2(x + self.dropout(self.ffn(x)))


class DecoderLayer(nn.Module):
    def __init__(self, config: ModelConfig, gated: bool):
        super().__init__()
        self.self_attn = MultiHeadAttention(config.model_dim, config.heads, config.dropout, gated=gated)
        self.cross_attn = MultiHeadAttention(config.model_dim, config.heads, config.dropout, gated=gated)
        self.ffn = FeedForward(config.model_dim, config.ffn_dim, config.dropout)
        self.norm1 = nn.LayerNorm(config.model_dim)
        self.norm2 = nn.LayerNorm(config.model_dim)
        self.norm3 = nn.LayerNorm(config.model_dim)
        self.dropout = nn.Dropout(config.dropout)

    def forward(self, x, tags, pad_mask, memory, src_tags, src_pad_mask, kind: str):
        future = causal_mask(x.size(1), device=x.device, dtype=x.dtype)
        x = self.norm1(x + self.dropout(self.self_attn(x, x, x, kind, tags, tags, pad_mask, future)))
        x = self.norm2(x + self.dropout(self.cross_attn(x, memory, memory, kind, tags, src_tags, src_pad_mask)))
        return self.norm3(x + self.dropout(self.ffn(x)))


class TranslationModel(nn.Module):
    """
    Post-norm encoder-decoder. In grouped mode the lower layers use group attention and the
    top `combined_top_layers` layers use gated group+global attention; plain mode uses global
    attention everywhere. Parameters are identical in both modes.
    """

    def __init__(self, config: ModelConfig, role: Role = Role.MT):
        super().__init__()
        if config.src_vocab_size < 5 or config.tgt_vocab_size < 5:
            raise ModelShapeError("vocabulary sizes must include the five reserved specials")
        self.config = config
        self.role = Role(role)
        self.vocab_sha256: dict = {}
        d = config.model_dim
        n_gated = config.combined_top_layers

        self.src_embed = nn.Embedding(config.src_vocab_size, d, padding_idx=PAD_ID)
        self.tgt_embed = nn.Embedding(config.tgt_vocab_size, d, padding_idx=PAD_ID)
        self.register_buffer("positions", sinusoidal_positions(config.max_len, d), persistent=False)
        self.encoder = nn.ModuleList(
            EncoderLayer(config, gated=i >= config.layers - n_gated) for i in range(config.layers)
        )
        self.decoder = nn.ModuleList(
            DecoderLayer(config, gated=i >= config.layers - n_gated) for i in range(config.layers)
        )
        self.output = nn.Linear(d, config.tgt_vocab_size)
        self.embed_dropout = nn.Dropout(config.dropout)
        self._init_embeddings()

    def _init_embeddings(self) -> None:
        bound = 1.0 / math.sqrt(self.config.model_dim)
        for table in (self.src_embed, self.tgt_embed):
            nn.init.uniform_(table.weight, -bound, bound)
            with torch.no_grad():
                table.weight[PAD_ID].zero_()

    def layer_kind(self, index: int) -> str:
        if AttentionMode(self.config.attention_mode) is AttentionMode.PLAIN:
            return "global"
        if index >= self.config.layers - self.config.combined_top_layers:
            return "combined"
        return "group"

    def _embed(self, table: nn.Embedding, ids: torch.Tensor) -> torch.Tensor:
        if ids.size(1) > self.config.max_len:
            raise ModelShapeError(f"sequence length {ids.size(1)} exceeds max_len={self.config.max_len}")
        x = table(ids) * math.sqrt(self.config.model_dim)
        x = x + self.positions[: ids.size(1)].to(x.dtype)
        return self.embed_dropout(x)

    @staticmethod
    def _check_finite(x: torch.Tensor, layer: str) -> None:
        if not torch.isfinite(x).all():
            logger.error(f"Non-finite activations in {layer}")
            raise NumericalFault(f"non-finite activations in {layer}", layer=layer)

    def encode(self, src: torch.Tensor, src_tags: torch.Tensor) -> torch.Tensor:
        pad = src == PAD_ID
        x = self._embed(self.src_embed, src)
        for i, layer in enumerate(self.encoder):
            x = layer(x, src_tags, pad, self.layer_kind(i))
            self._check_finite(x, f"encoder.{i}")
        return x

    def decode(self, memory: torch.Tensor, src: torch.Tensor, src_tags: torch.Tensor,
               tgt_in: torch.Tensor, tgt_tags: torch.Tensor) -> torch.Tensor:
        """Log-probabilities [B, T, V] for every decoder position."""
        src_pad = src == PAD_ID
        # bos sits at position 0, so only trailing pads are masked
        tgt_pad = tgt_in == PAD_ID
        x = self._embed(self.tgt_embed, tgt_in)
        for i, layer in enumerate(self.decoder):
            x = layer(x, tgt_tags, tgt_pad, memory, src_tags, src_pad, self.layer_kind(i))
            self._check_finite(x, f"decoder.{i}")
        logits = self.output(x)
        self._check_finite(logits, "output")
        return torch.log_softmax(logits, dim=-1)

    def forward(self, batch: Batch) -> torch.Tensor:
        memory = self.encode(batch.src, batch.src_tags)
        return self.decode(memory, batch.src, batch.src_tags, batch.tgt_in, batch.tgt_tags)

    @torch.no_grad()
    def next_log_probs(self, memory: torch.Tensor, src: torch.Tensor, src_tags: torch.Tensor,
                       prefixes: torch.Tensor, prefix_tags: torch.Tensor) -> torch.Tensor:
        """Log-distribution of the next token after each prefix; all inputs share one batch dimension."""
        return self.decode(memory, src, src_tags, prefixes, prefix_tags)[:, -1, :]

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())


def forward_log_probs(model: TranslationModel, batch: Batch) -> torch.Tensor:
    return model(batch)


def token_losses(log_probs: torch.Tensor, tgt_out: torch.Tensor, label_smoothing: float = 0.0) -> torch.Tensor:
    """Per-position loss [B, T]; pad positions hold 0."""
    nll = -log_probs.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    if label_smoothing > 0.0:
        smooth = -log_probs.mean(dim=-1)
        nll = (1.0 - label_smoothing) * nll + label_smoothing * smooth
    return nll.masked_fill(tgt_out == PAD_ID, 0.0)


def weighted_loss(log_probs: torch.Tensor, batch: Batch, label_smoothing: float = 0.0) -> torch.Tensor:
    """Token mean over non-pad targets, each token weighted by its example's weight."""
    losses = token_losses(log_probs, batch.tgt_out, label_smoothing)
    mask = (~batch.tgt_pad_mask).to(losses.dtype)
    w = batch.weights.to(losses.dtype).unsqueeze(1) * mask
    return (losses * w).sum() / w.sum()


def nll_loss_and_grads(model: TranslationModel, batch: Batch,
                       label_smoothing: Optional[float] = None) -> Tuple[float, dict]:
    """Loss value and a name -> gradient map for every parameter tensor."""
    if len(batch) == 0:
        raise ModelShapeError("batch must not be empty")
    smoothing = model.config.label_smoothing if label_smoothing is None else label_smoothing
    model.zero_grad(set_to_none=True)
    loss = weighted_loss(model(batch), batch, smoothing)
    loss.backward()
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    return float(loss.item()), grads


@torch.no_grad()
def sequence_log_probs(model: TranslationModel, batch: Batch) -> torch.Tensor:
    """Teacher-forced sum of log P over every non-pad target position, eos included. Shape [B]."""
    was_training = model.training
    model.eval()
    try:
        log_probs = model(batch)
        picked = log_probs.gather(-1, batch.tgt_out.unsqueeze(-1)).squeeze(-1)
        return picked.masked_fill(batch.tgt_pad_mask, 0.0).sum(dim=1)
    finally:
        model.train(was_training)


def build_model(config: ModelConfig, role: Role = Role.MT, seed: int = 1) -> TranslationModel:
    """Seeded construction; same config and seed give identical parameters."""
    with seeded_torch(seed):
        model = TranslationModel(config, role)
    logger.info(f"Built {Role(role).value} model: {model.num_parameters()} parameters, "
                f"{config.layers} layers, attention={AttentionMode(config.attention_mode).value}")
    return model
