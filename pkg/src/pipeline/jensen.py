import math
from typing import Optional, Sequence, Tuple

import torch

from src.corpus.types import ParallelInstance
from src.latent.sampler import render_extended_input
from src.latent.types import LatentValue
from src.neural.model import Example, TranslationModel, make_batch, sequence_log_probs
from src.pipeline.types import PipelineError


def jensen_gap(model: TranslationModel, instance: ParallelInstance,
               latents: Sequence[LatentValue], span_map: Optional[Sequence[int]] = None) -> Tuple[float, float]:
    """
    (-log mean_z P(y|x,z), mean_z -log P(y|x,z)) for the instance's gold target.
    The first never exceeds the second.
    """
    if not latents:
        raise PipelineError("jensen_gap needs at least one latent value")
    examples = []
    for latent in latents:
        extended = render_extended_input(instance.source, instance.src_group_tags, latent,
                                         instance.target, instance.tgt_group_tags, span_map=span_map)
        examples.append(Example(extended.tokens, extended.group_tags, instance.target, instance.tgt_group_tags))
    log_probs = sequence_log_probs(model, make_batch(examples)).to(torch.float64)
    lhs = -(torch.logsumexp(log_probs, dim=0).item() - math.log(len(latents)))
    rhs = -log_probs.mean().item()
    return lhs, rhs
