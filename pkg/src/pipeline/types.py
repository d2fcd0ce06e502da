from collections import OrderedDict
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from src.common.errors import TargetAugError, ValidationFailure
from src.corpus.types import Unit
from src.latent.types import AugmentMode, Direction, ExtendedInput


class PipelineError(TargetAugError):
    """Custom exception for augmentation pipeline errors."""
    pass


class CardinalityError(ValidationFailure, PipelineError):
    """Custom exception for augmented corpora that break the pairs-per-instance law."""
    pass


class VocabMismatchError(ValidationFailure, PipelineError):
    """Custom exception for a model whose vocabularies differ from the corpus vocabularies."""
    pass


class Origin(str, Enum):
    GOLD = "gold"
    GENERATED = "da"


class AugmentSide(str, Enum):
    TARGET = "target"
    SOURCE = "source"


class DaTrainingRecord(BaseModel):
    extended_input: ExtendedInput
    target: List[int]
    target_tags: List[int]
    parent_instance_id: str
    replica_index: int = Field(..., ge=1)
    alpha: Optional[float] = Field(None, ge=0.0, le=1.0)


class AugmentedPair(BaseModel):
    instance_id: str
    source: List[int]
    translation: List[int]
    origin: Origin
    side: Optional[AugmentSide] = None
    alpha: Optional[float] = Field(None, ge=0.0, le=1.0)
    spans: Optional[List[Tuple[int, int]]] = None
    beam_score: Optional[float] = None
    unfinished: bool = False

    @model_validator(mode="after")
    def check_origin(self):
        if self.origin is Origin.GOLD:
            if self.alpha is not None or self.spans is not None or self.side is not None:
                raise ValueError("gold pairs carry no latent provenance")
        else:
            if self.alpha is None or self.spans is None or self.side is None:
                raise ValueError("generated pairs need side, alpha and spans")
        return self


class AugmentMeta(BaseModel):
    seed: int
    M: int = Field(..., ge=0)
    mode: AugmentMode = AugmentMode.POSTERIOR
    direction: Direction = Direction.TARGET
    unit: Unit = Unit.SENTENCE
    instances: int = Field(..., ge=0)
    da_checkpoint_sha256: Optional[str] = None
    reverse_da_checkpoint_sha256: Optional[str] = None
    config_sha256: str

    @property
    def pairs_per_instance(self) -> int:
        if self.direction is Direction.BOTH:
            return 2 * self.M + 1
        return self.M + 1


class AugmentedCorpus(BaseModel):
    """Augmented pairs in canonical order: per instance, gold first, then generated j = 1..M."""
    meta: AugmentMeta
    pairs: List[AugmentedPair] = Field(default_factory=list)

    @property
    def M(self) -> int:
        return self.meta.M

    def check_cardinality(self) -> None:
        expected = self.meta.instances * self.meta.pairs_per_instance
        if len(self.pairs) != expected:
            raise CardinalityError(
                f"expected {expected} pairs for {self.meta.instances} instances "
                f"(M={self.M}, direction={self.meta.direction.value}), found {len(self.pairs)}"
            )
        for instance_id, group in self.by_instance().items():
            golds = sum(1 for p in group if p.origin is Origin.GOLD)
            if len(group) != self.meta.pairs_per_instance or golds != 1:
                raise CardinalityError(f"instance {instance_id}: {len(group)} pairs with {golds} gold")

    def by_instance(self) -> Dict[str, List[AugmentedPair]]:
        groups: Dict[str, List[AugmentedPair]] = OrderedDict()
        for pair in self.pairs:
            groups.setdefault(pair.instance_id, []).append(pair)
        return groups

    def gold_pairs(self) -> List[AugmentedPair]:
        return [p for p in self.pairs if p.origin is Origin.GOLD]

    def generated_pairs(self) -> List[AugmentedPair]:
        return [p for p in self.pairs if p.origin is Origin.GENERATED]
