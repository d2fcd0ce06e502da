from enum import Enum
from typing import Tuple

from pydantic import BaseModel, Field, model_validator


class AttentionMode(str, Enum):
    PLAIN = "plain"
    GROUPED = "grouped"


class Role(str, Enum):
    DA = "da"
    MT = "mt"


class ModelConfig(BaseModel):
    layers: int = Field(2, ge=1)
    heads: int = Field(4, ge=1)
    model_dim: int = Field(64, ge=1)
    ffn_dim: int = Field(128, ge=1)
    src_vocab_size: int = Field(0, ge=0, description="Filled from the source vocabulary")
    tgt_vocab_size: int = Field(0, ge=0, description="Filled from the target vocabulary")
    max_len: int = Field(1024, ge=8, description="Longest sequence the position table covers")
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    label_smoothing: float = Field(0.1, ge=0.0, lt=1.0)
    attention_mode: AttentionMode = AttentionMode.GROUPED
    combined_top_layers: int = Field(1, ge=0)

    @model_validator(mode="after")
    def check_shapes(self):
        if self.model_dim % self.heads != 0:
            raise ValueError(f"model_dim ({self.model_dim}) must be divisible by heads ({self.heads})")
        if self.combined_top_layers > self.layers:
            raise ValueError(
                f"combined_top_layers ({self.combined_top_layers}) must not exceed layers ({self.layers})"
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads


class TrainConfig(BaseModel):
    epochs: int = Field(30, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(5e-4, gt=0)
    warmup_steps: int = Field(200, ge=0)
    patience: int = Field(5, ge=0)
    min_delta: float = Field(0.0, ge=0.0)
    clip_norm: float = Field(1.0, ge=0.0, description="0 disables gradient clipping")
    adam_betas: Tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-9
    seed: int = 1
    drop_gold: bool = False
