from typing import List, Optional, Sequence, Tuple

from src.common.utils import get_logger
from src.corpus.instances import tags_from_separators
from src.corpus.types import ParallelInstance, Unit
from src.neural.config import ModelConfig, Role, TrainConfig
from src.neural.model import Example, TranslationModel, build_model
from src.neural.trainer import LossCurve, train
from src.pipeline.types import AugmentedCorpus, Origin, PipelineError

logger = get_logger(__name__)


def pair_tags(ids: Sequence[int], unit: Unit, max_tag: Optional[int] = None) -> List[int]:
    if unit is not Unit.DOCUMENT:
        return [1] * len(ids)
    tags = tags_from_separators(ids)
    return [min(t, max_tag) for t in tags] if max_tag else tags


def mt_examples(corpus: AugmentedCorpus, drop_gold: bool = False) -> List[Example]:
    """
    One example per pair, weighted 1/|pairs of its instance| so every instance contributes
    equally and each of its pairs counts the same.
    """
    unit = corpus.meta.unit
    examples: List[Example] = []
    for instance_id, group in corpus.by_instance().items():
        kept = [p for p in group if not (drop_gold and p.origin is Origin.GOLD)]
        if not kept:
            continue
        weight = 1.0 / len(kept)
        for pair in kept:
            src_tags = pair_tags(pair.source, unit)
            max_tag = max(src_tags) if src_tags else 1
            examples.append(Example(pair.source, src_tags, pair.translation,
                                    pair_tags(pair.translation, unit, max_tag), weight))
    return examples


def instance_examples(instances: Sequence[ParallelInstance]) -> List[Example]:
    return [Example(i.source, i.src_group_tags, i.target, i.tgt_group_tags) for i in instances]


def train_mt(corpus: AugmentedCorpus, model_config: ModelConfig, train_config: TrainConfig,
             dev_instances: Optional[Sequence[ParallelInstance]] = None) -> Tuple[TranslationModel, LossCurve]:
    """Mean NLL over every pair of the augmented corpus; dev selection on gold pairs only."""
    examples = mt_examples(corpus, drop_gold=train_config.drop_gold)
    if not examples:
        raise PipelineError("no training pairs left (drop_gold on a gold-only corpus?)")
    logger.info(f"Training MT on {len(examples)} pairs (M={corpus.M}, drop_gold={train_config.drop_gold})")
    model = build_model(model_config, Role.MT, seed=train_config.seed)
    dev = instance_examples(dev_instances) if dev_instances else None
    return train(model, examples, train_config, dev)
