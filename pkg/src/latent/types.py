from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class AugmentMode(str, Enum):
    POSTERIOR = "posterior"
    PRIOR = "prior"


class Direction(str, Enum):
    TARGET = "target"
    SOURCE = "source"
    BOTH = "both"


class AugmentConfig(BaseModel):
    beta_a: float = Field(2.0, gt=0, description="Beta(a, b) shape a of the observed ratio")
    beta_b: float = Field(3.0, gt=0, description="Beta(a, b) shape b of the observed ratio")
    ngram_min: int = Field(1, ge=1)
    ngram_max: int = Field(3, ge=1)
    num_samples: int = Field(9, ge=1, description="M, generated translations per instance")
    beam_size: int = Field(5, ge=1)
    seed: int = 1
    mode: AugmentMode = AugmentMode.POSTERIOR
    direction: Direction = Direction.TARGET
    replicas: int = Field(3, ge=1, description="Latent draws per instance when building DA training data")
    fixed_alpha: Optional[float] = Field(None, ge=0.0, le=1.0,
                                         description="Constant observed ratio instead of Beta draws")
    resample_latents: bool = False
    max_len_a: int = Field(2, ge=0)
    max_len_b: int = Field(8, ge=1)

    @model_validator(mode="after")
    def check_ngram_range(self):
        if self.ngram_min > self.ngram_max:
            raise ValueError(f"ngram_min ({self.ngram_min}) must not exceed ngram_max ({self.ngram_max})")
        return self


class LatentValue(BaseModel):
    spans: List[Tuple[int, int]] = Field(default_factory=list, description="(start, length) over the target")
    observed_ratio_requested: float = Field(0.0, ge=0.0, le=1.0)
    tokens_covered: int = Field(0, ge=0)

    @field_validator("spans")
    @classmethod
    def check_spans(cls, v: List[Tuple[int, int]]) -> List[Tuple[int, int]]:
        previous_end = 0
        for start, length in v:
            if start < 0 or length < 1:
                raise ValueError(f"invalid span ({start}, {length})")
            if start < previous_end:
                raise ValueError("spans must be sorted by start and pairwise non-overlapping")
            previous_end = start + length
        return v

    @model_validator(mode="after")
    def check_coverage(self):
        if self.tokens_covered != sum(length for _, length in self.spans):
            raise ValueError("tokens_covered must equal the sum of span lengths")
        return self

    def is_valid_for(self, target_length: int, ngram_max: Optional[int] = None) -> bool:
        for start, length in self.spans:
            if start + length > target_length:
                return False
            if ngram_max is not None and length > ngram_max:
                return False
        return True

    def span_tokens(self, target: List[int]) -> List[List[int]]:
        return [list(target[start:start + length]) for start, length in self.spans]


class ExtendedInput(BaseModel):
    tokens: List[int]
    group_tags: List[int]
    source_length: int = Field(..., ge=0, description="Length of the source part before latent tokens")
    latent_origin: Optional[LatentValue] = None

    @model_validator(mode="after")
    def check_tags(self):
        if len(self.tokens) != len(self.group_tags):
            raise ValueError("group_tags must align with tokens")
        return self
