from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence

from src.common.utils import Timer, canonical_json, compute_sha256, derive_rng, get_logger
from src.corpus.types import ParallelInstance
from src.corpus.vocab import Vocabulary
from src.decode.beam import beam_search, default_max_len
from src.latent.types import AugmentConfig, AugmentMode, Direction, ExtendedInput
from src.neural.config import Role
from src.neural.model import TranslationModel
from src.pipeline.da import draw_extended_input, latent_stream, swap_roles
from src.pipeline.types import (
    AugmentedCorpus,
    AugmentedPair,
    AugmentMeta,
    AugmentSide,
    Origin,
    PipelineError,
    VocabMismatchError,
)

logger = get_logger(__name__)


def check_vocabularies(model: TranslationModel, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> None:
    """Abort when the model was trained on different vocabularies than the corpus uses."""
    problems = []
    if model.config.src_vocab_size != len(src_vocab):
        problems.append(f"source size {model.config.src_vocab_size} != {len(src_vocab)}")
    if model.config.tgt_vocab_size != len(tgt_vocab):
        problems.append(f"target size {model.config.tgt_vocab_size} != {len(tgt_vocab)}")
    recorded = model.vocab_sha256 or {}
    if recorded.get("src") and recorded["src"] != src_vocab.sha256():
        problems.append("source vocabulary hash differs")
    if recorded.get("tgt") and recorded["tgt"] != tgt_vocab.sha256():
        problems.append("target vocabulary hash differs")
    if problems:
        logger.error(f"Vocabulary mismatch: {'; '.join(problems)}")
        raise VocabMismatchError("model/corpus vocabulary mismatch: " + "; ".join(problems))


def gold_pair(instance: ParallelInstance) -> AugmentedPair:
    return AugmentedPair(instance_id=instance.instance_id, source=instance.source,
                         translation=instance.target, origin=Origin.GOLD)


def _generator(model: TranslationModel, config: AugmentConfig, seed: int, side: AugmentSide,
               span_map: Optional[Sequence[int]] = None) -> Callable[[int, ParallelInstance], List[AugmentedPair]]:
    stream = latent_stream(side, config.resample_latents)

    def generate(index: int, instance: ParallelInstance) -> List[AugmentedPair]:
        max_len = default_max_len(len(instance.source), config.max_len_a, config.max_len_b)
        rng = derive_rng(seed, stream, index)
        pairs: List[AugmentedPair] = []
        prior_best = None
        for _ in range(config.num_samples):
            if config.mode is AugmentMode.PRIOR:
                if prior_best is None:
                    source = ExtendedInput(tokens=instance.source, group_tags=instance.src_group_tags,
                                           source_length=len(instance.source))
                    prior_best = beam_search(model, source, config.beam_size, max_len)[0]
                best, alpha, spans = prior_best, 0.0, []
            else:
                alpha, latent, extended = draw_extended_input(instance, config, rng, span_map)
                best = beam_search(model, extended, config.beam_size, max_len)[0]
                spans = list(latent.spans)
            if not best.finished:
                logger.warning(f"{instance.instance_id}: unfinished hypothesis kept")
            generated = best.output
            if side is AugmentSide.TARGET:
                src, tgt = instance.source, generated
            else:
                src, tgt = generated, instance.source
            pairs.append(AugmentedPair(
                instance_id=instance.instance_id, source=src, translation=tgt, origin=Origin.GENERATED,
                side=side, alpha=alpha, spans=spans, beam_score=best.score, unfinished=not best.finished,
            ))
        return pairs

    return generate


def _generate_all(instances: Sequence[ParallelInstance], model: TranslationModel, config: AugmentConfig,
                  seed: int, side: AugmentSide, threads: int,
                  span_map: Optional[Sequence[int]] = None) -> List[List[AugmentedPair]]:
    if model.role is not Role.DA:
        raise PipelineError(f"augmentation needs a DA model, got role={model.role.value}")
    model.eval()
    generate = _generator(model, config, seed, side, span_map)
    with Timer(f"Generating {side.value}-side translations for {len(instances)} instances", logger):
        if threads <= 1:
            return [generate(i, inst) for i, inst in enumerate(instances)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(generate, range(len(instances)), instances))


def augment_config_sha256(config: AugmentConfig) -> str:
    return compute_sha256(canonical_json(config.model_dump(mode="json")))


def _meta(instances, config, seed, direction, da_sha, reverse_sha, config_sha256) -> AugmentMeta:
    unit = instances[0].unit if instances else "sentence"
    return AugmentMeta(
        seed=seed, M=config.num_samples, mode=config.mode, direction=direction, unit=unit,
        instances=len(instances), da_checkpoint_sha256=da_sha, reverse_da_checkpoint_sha256=reverse_sha,
        config_sha256=config_sha256 or augment_config_sha256(config),
    )


def target_augment(instances: Sequence[ParallelInstance], da_model: TranslationModel, config: AugmentConfig,
                   seed: int, threads: int = 1, da_checkpoint_sha256: Optional[str] = None,
                   config_sha256: Optional[str] = None,
                   span_map: Optional[Sequence[int]] = None) -> AugmentedCorpus:
    """
    Gold pair plus M DA translations per instance, in canonical order.
    span_map re-encodes latent spans into the DA input vocabulary (see da_vocabularies).
    """
    generated = _generate_all(instances, da_model, config, seed, AugmentSide.TARGET, threads, span_map)
    pairs: List[AugmentedPair] = []
    for instance, own in zip(instances, generated):
        pairs.append(gold_pair(instance))
        pairs.extend(own)
    corpus = AugmentedCorpus(
        meta=_meta(instances, config, seed, Direction.TARGET, da_checkpoint_sha256, None, config_sha256),
        pairs=pairs,
    )
    corpus.check_cardinality()
    logger.info(f"Target augmentation: {len(pairs)} pairs from {len(instances)} instances (M={config.num_samples})")
    return corpus


def source_augment(instances: Sequence[ParallelInstance], reverse_da_model: TranslationModel,
                   config: AugmentConfig, seed: int, threads: int = 1,
                   reverse_da_checkpoint_sha256: Optional[str] = None,
                   config_sha256: Optional[str] = None,
                   span_map: Optional[Sequence[int]] = None) -> AugmentedCorpus:
    """Novel sources from a reverse DA model, each paired with the gold target."""
    swapped = [swap_roles(inst) for inst in instances]
    generated = _generate_all(swapped, reverse_da_model, config, seed, AugmentSide.SOURCE, threads, span_map)
    pairs: List[AugmentedPair] = []
    for instance, own in zip(instances, generated):
        pairs.append(gold_pair(instance))
        pairs.extend(own)
    corpus = AugmentedCorpus(
        meta=_meta(instances, config, seed, Direction.SOURCE, None, reverse_da_checkpoint_sha256, config_sha256),
        pairs=pairs,
    )
    corpus.check_cardinality()
    logger.info(f"Source augmentation: {len(pairs)} pairs from {len(instances)} instances (M={config.num_samples})")
    return corpus


def both_augment(instances: Sequence[ParallelInstance], da_model: TranslationModel,
                 reverse_da_model: TranslationModel, config: AugmentConfig, seed: int, threads: int = 1,
                 da_checkpoint_sha256: Optional[str] = None, reverse_da_checkpoint_sha256: Optional[str] = None,
                 config_sha256: Optional[str] = None,
                 span_map: Optional[Sequence[int]] = None,
                 reverse_span_map: Optional[Sequence[int]] = None) -> AugmentedCorpus:
    """Gold pair, M target-side and M source-side pairs per instance."""
    target_side = _generate_all(instances, da_model, config, seed, AugmentSide.TARGET, threads, span_map)
    swapped = [swap_roles(inst) for inst in instances]
    source_side = _generate_all(swapped, reverse_da_model, config, seed, AugmentSide.SOURCE, threads,
                                reverse_span_map)
    pairs: List[AugmentedPair] = []
    for instance, tgt_own, src_own in zip(instances, target_side, source_side):
        pairs.append(gold_pair(instance))
        pairs.extend(tgt_own)
        pairs.extend(src_own)
    corpus = AugmentedCorpus(
        meta=_meta(instances, config, seed, Direction.BOTH, da_checkpoint_sha256,
                   reverse_da_checkpoint_sha256, config_sha256),
        pairs=pairs,
    )
    corpus.check_cardinality()
    logger.info(f"Two-sided augmentation: {len(pairs)} pairs from {len(instances)} instances")
    return corpus


def gold_corpus(instances: Sequence[ParallelInstance], seed: int, config_sha256: str) -> AugmentedCorpus:
    """The un-augmented corpus (M = 0), used for the baseline MT model."""
    config = AugmentConfig(num_samples=1)
    meta = _meta(instances, config, seed, Direction.TARGET, None, None, config_sha256)
    meta.M = 0
    corpus = AugmentedCorpus(meta=meta, pairs=[gold_pair(inst) for inst in instances])
    corpus.check_cardinality()
    return corpus
