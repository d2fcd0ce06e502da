from enum import Enum
from typing import List

from pydantic import BaseModel, Field, field_validator, model_validator


class Unit(str, Enum):
    SENTENCE = "sentence"
    DOCUMENT = "document"


class Side(str, Enum):
    SRC = "src"
    TGT = "tgt"
    JOINT = "joint"


class ParallelDocument(BaseModel):
    doc_id: str = Field(..., min_length=1, description="Document identifier")
    src_sentences: List[List[str]] = Field(..., description="Tokenized source sentences")
    tgt_sentences: List[List[str]] = Field(..., description="Tokenized target sentences, aligned")

    @model_validator(mode="after")
    def check_alignment(self):
        if len(self.src_sentences) != len(self.tgt_sentences):
            raise ValueError(
                f"document {self.doc_id} has {len(self.src_sentences)} source and "
                f"{len(self.tgt_sentences)} target sentences"
            )
        return self


class MultiRefDocument(BaseModel):
    doc_id: str = Field(..., min_length=1)
    src_sentences: List[List[str]]
    references: List[List[List[str]]] = Field(..., min_length=2)


class ParallelInstance(BaseModel):
    instance_id: str
    source: List[int]
    target: List[int]
    src_group_tags: List[int]
    tgt_group_tags: List[int]
    unit: Unit

    @field_validator("src_group_tags", "tgt_group_tags")
    @classmethod
    def check_tags(cls, v: List[int]) -> List[int]:
        if v and v[0] != 1:
            raise ValueError("group tags must start at 1")
        if any(b < a for a, b in zip(v, v[1:])):
            raise ValueError("group tags must be non-decreasing")
        return v

    @model_validator(mode="after")
    def check_lengths(self):
        if len(self.src_group_tags) != len(self.source):
            raise ValueError(f"{self.instance_id}: source tags do not match source length")
        if len(self.tgt_group_tags) != len(self.target):
            raise ValueError(f"{self.instance_id}: target tags do not match target length")
        return self

    @property
    def num_groups(self) -> int:
        return self.src_group_tags[-1] if self.src_group_tags else 0


class MultiRefInstance(BaseModel):
    """Encoded source with several encoded references, for perplexity cross-validation."""
    instance_id: str
    source: List[int]
    src_group_tags: List[int]
    references: List[List[int]] = Field(..., min_length=2)
    reference_tags: List[List[int]]
    unit: Unit
