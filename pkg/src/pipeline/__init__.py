from src.pipeline.augment import (
    both_augment,
    check_vocabularies,
    gold_corpus,
    source_augment,
    target_augment,
)
from src.pipeline.da import (
    build_da_training_set,
    da_vocabularies,
    latent_stream,
    required_positions,
    sized_config,
    swap_roles,
    train_da,
)
from src.pipeline.io import read_augmented, write_augmented
from src.pipeline.jensen import jensen_gap
from src.pipeline.mt import mt_examples, train_mt
from src.pipeline.types import (
    AugmentedCorpus,
    AugmentedPair,
    AugmentMeta,
    AugmentSide,
    CardinalityError,
    DaTrainingRecord,
    Origin,
    PipelineError,
    VocabMismatchError,
)

__all__ = [
    "AugmentMeta", "AugmentSide", "AugmentedCorpus", "AugmentedPair", "CardinalityError", "DaTrainingRecord",
    "Origin", "PipelineError", "VocabMismatchError", "both_augment", "build_da_training_set",
    "check_vocabularies", "da_vocabularies", "gold_corpus", "jensen_gap", "latent_stream", "mt_examples",
    "read_augmented", "required_positions", "sized_config", "source_augment", "swap_roles", "target_augment",
    "train_da", "train_mt", "write_augmented",
]
