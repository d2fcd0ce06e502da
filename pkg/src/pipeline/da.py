from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.common.utils import derive_rng, get_logger
from src.corpus.instances import content_segments
from src.corpus.types import ParallelInstance, Unit
from src.corpus.vocab import Vocabulary
from src.latent.sampler import render_extended_input, sample_latent, sample_observed_ratio
from src.latent.types import AugmentConfig, AugmentMode, ExtendedInput, LatentValue
from src.neural.config import ModelConfig, Role, TrainConfig
from src.neural.model import Example, TranslationModel, build_model
from src.neural.trainer import LossCurve, train
from src.pipeline.types import AugmentSide, DaTrainingRecord, PipelineError

logger = get_logger(__name__)


def latent_stream(side: AugmentSide = AugmentSide.TARGET, resample: bool = False) -> str:
    """Name of the derived generator stream latents are drawn from."""
    prefix = "latent-resampled" if resample else "latent"
    return f"{prefix}:{AugmentSide(side).value}"


def swap_roles(instance: ParallelInstance) -> ParallelInstance:
    """Condition on the target and treat the source as the sequence to generate."""
    return ParallelInstance(
        instance_id=instance.instance_id, source=instance.target, target=instance.source,
        src_group_tags=instance.tgt_group_tags, tgt_group_tags=instance.src_group_tags, unit=instance.unit,
    )


def draw_extended_input(instance: ParallelInstance, config: AugmentConfig, rng: np.random.Generator,
                        span_map: Optional[Sequence[int]] = None) -> Tuple[float, LatentValue, ExtendedInput]:
    """Observed ratio, latent spans and the rendered input for one replica."""
    alpha = sample_observed_ratio(config, rng)
    segments = None
    if instance.unit is Unit.DOCUMENT:
        segments = content_segments(instance.target, instance.tgt_group_tags)
    latent = sample_latent(instance.target, alpha, config, rng, segments)
    extended = render_extended_input(instance.source, instance.src_group_tags, latent,
                                     instance.target, instance.tgt_group_tags, span_map=span_map)
    return alpha, latent, extended


def build_da_training_set(instances: Sequence[ParallelInstance], config: AugmentConfig, seed: int,
                          replicas: Optional[int] = None,
                          side: AugmentSide = AugmentSide.TARGET,
                          stream: Optional[str] = None,
                          span_map: Optional[Sequence[int]] = None) -> List[DaTrainingRecord]:
    """
    Pair each instance's gold target with `replicas` latent-extended inputs.
    Prior mode conditions on the source alone and emits one record per instance.
    """
    replicas = config.replicas if replicas is None else replicas
    if replicas < 1:
        raise PipelineError(f"replicas must be >= 1, got {replicas}")

    records: List[DaTrainingRecord] = []
    stream = stream or latent_stream(side)
    for index, instance in enumerate(instances):
        if config.mode is AugmentMode.PRIOR:
            extended = ExtendedInput(tokens=instance.source, group_tags=instance.src_group_tags,
                                     source_length=len(instance.source))
            records.append(DaTrainingRecord(
                extended_input=extended, target=instance.target, target_tags=instance.tgt_group_tags,
                parent_instance_id=instance.instance_id, replica_index=1,
            ))
            continue
        rng = derive_rng(seed, stream, index)
        for j in range(1, replicas + 1):
            alpha, _, extended = draw_extended_input(instance, config, rng, span_map)
            records.append(DaTrainingRecord(
                extended_input=extended, target=instance.target, target_tags=instance.tgt_group_tags,
                parent_instance_id=instance.instance_id, replica_index=j, alpha=alpha,
            ))
    logger.info(f"Built {len(records)} DA training records from {len(instances)} instances "
                f"(mode={config.mode.value}, side={AugmentSide(side).value})")
    return records


def da_examples(records: Sequence[DaTrainingRecord]) -> List[Example]:
    return [
        Example(r.extended_input.tokens, r.extended_input.group_tags, r.target, r.target_tags)
        for r in records
    ]


def da_vocabularies(src_vocab: Vocabulary, tgt_vocab: Vocabulary, side: AugmentSide = AugmentSide.TARGET
                    ) -> Tuple[Vocabulary, Vocabulary, List[int]]:
    """
    Input vocabulary, output vocabulary and span map of a DA model.

    The input vocabulary is the conditioning side's vocabulary extended with the
    generated side's tokens, so latent spans keep their surface form on the encoder.
    The span map sends output ids to input ids.
    """
    if AugmentSide(side) is AugmentSide.TARGET:
        conditioning, generated = src_vocab, tgt_vocab
    else:
        conditioning, generated = tgt_vocab, src_vocab
    inputs = conditioning.extended_with(generated)
    return inputs, generated, generated.id_map(inputs)


def required_positions(max_len: int, config: AugmentConfig) -> int:
    """
    Longest sequence a DA model sees for instances of at most max_len tokens per side:
    the source plus every target token observed as its own span behind a separator,
    or the decode budget. Spans shrink to fit narrow gaps, so ngram_min does not bound their count.
    """
    encoder = 3 * max_len
    decoder = config.max_len_a * max_len + config.max_len_b + 1
    return max(encoder, decoder)


def sized_config(model_config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                 positions: Optional[int] = None) -> ModelConfig:
    update = {"src_vocab_size": len(src_vocab), "tgt_vocab_size": len(tgt_vocab)}
    if positions is not None and positions > model_config.max_len:
        logger.info(f"Raising model max_len from {model_config.max_len} to {positions} to fit extended inputs")
        update["max_len"] = positions
    return model_config.model_copy(update=update)


def train_da(records: Sequence[DaTrainingRecord], model_config: ModelConfig, train_config: TrainConfig,
             dev_records: Optional[Sequence[DaTrainingRecord]] = None
             ) -> Tuple[TranslationModel, LossCurve]:
    """Plain NLL over the replicated records; returns the best-selection-loss model."""
    if not records:
        raise PipelineError("DA training needs at least one record")
    model = build_model(model_config, Role.DA, seed=train_config.seed)
    dev = da_examples(dev_records) if dev_records else None
    return train(model, da_examples(records), train_config, dev)
