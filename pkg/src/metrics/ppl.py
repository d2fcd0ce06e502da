import math
from typing import List, Optional, Sequence, Tuple

import torch

from src.common.utils import Timer, derive_rng, get_logger
from src.corpus.instances import content_segments
from src.corpus.types import MultiRefInstance, Unit
from src.latent.sampler import render_extended_input, sample_latent, sample_observed_ratio
from src.latent.types import AugmentConfig, AugmentMode
from src.metrics.bleu import MetricInputError
from src.neural.model import Example, TranslationModel, make_batch, sequence_log_probs

logger = get_logger(__name__)

TaggedIds = Tuple[Sequence[int], Sequence[int]]


def _posterior_inputs(source: TaggedIds, observed: TaggedIds, samples: int, config: AugmentConfig,
                      seed: int, cell: Sequence[int], unit: Unit, span_map: Optional[Sequence[int]] = None):
    src, src_tags = source
    ref, ref_tags = observed
    segments = content_segments(ref, ref_tags) if unit is Unit.DOCUMENT else None
    inputs = []
    for s in range(samples):
        rng = derive_rng(seed, "ppl", *cell, s)
        alpha = sample_observed_ratio(config, rng)
        latent = sample_latent(ref, alpha, config, rng, segments)
        inputs.append(render_extended_input(src, src_tags, latent, ref, ref_tags, span_map=span_map))
    return inputs


def mc_log_likelihood(model: TranslationModel, source: TaggedIds, observed_ref: Optional[TaggedIds],
                      test_refs: Sequence[TaggedIds], samples: int, config: AugmentConfig, seed: int,
                      cell: Sequence[int] = (), unit: Unit = Unit.SENTENCE,
                      span_map: Optional[Sequence[int]] = None) -> Tuple[float, int]:
    """
    Sum over test references of log P_hat(y), with P_hat the mean of P(y | source, z_s)
    over S latents drawn from the observed reference. Without an observed reference
    (prior mode) P_hat is P(y | source). Returns (log-likelihood, token count incl. eos).
    span_map re-encodes reference spans into the model's input vocabulary.
    """
    if samples < 1:
        raise MetricInputError(f"samples must be >= 1, got {samples}")
    if not test_refs:
        raise MetricInputError("at least one test reference is required")

    if observed_ref is None:
        inputs = [(list(source[0]), list(source[1]))]
    else:
        inputs = [(e.tokens, e.group_tags) for e in
                  _posterior_inputs(source, observed_ref, samples, config, seed, cell, unit, span_map)]

    total, tokens = 0.0, 0
    for ref, ref_tags in test_refs:
        batch = make_batch([Example(src, tags, list(ref), list(ref_tags)) for src, tags in inputs])
        log_probs = sequence_log_probs(model, batch).to(torch.float64)
        total += torch.logsumexp(log_probs, dim=0).item() - math.log(len(inputs))
        tokens += len(ref) + 1
    return total, tokens


def mc_posterior_ppl(model: TranslationModel, source: TaggedIds, observed_ref: Optional[TaggedIds],
                     test_refs: Sequence[TaggedIds], samples: int, config: AugmentConfig, seed: int,
                     cell: Sequence[int] = (), unit: Unit = Unit.SENTENCE,
                     span_map: Optional[Sequence[int]] = None) -> float:
    """exp(-per-token log P_hat) over the test references."""
    total, tokens = mc_log_likelihood(model, source, observed_ref, test_refs, samples, config, seed, cell, unit,
                                     span_map)
    return math.exp(-total / tokens)


def cross_validated_ppl(model: TranslationModel, items: Sequence[MultiRefInstance], samples: int,
                        config: AugmentConfig, seed: int, span_map: Optional[Sequence[int]] = None) -> float:
    """
    Rotate the observed reference over every reference of every item, scoring the others,
    and pool token log-likelihoods. Prior mode ignores the observed reference.
    """
    if not items:
        raise MetricInputError("no multi-reference items to evaluate")
    prior = config.mode is AugmentMode.PRIOR
    total, tokens = 0.0, 0
    with Timer(f"Cross-validated PPL over {len(items)} items (S={samples}, mode={config.mode.value})", logger):
        for index, item in enumerate(items):
            refs: List[TaggedIds] = list(zip(item.references, item.reference_tags))
            source = (item.source, item.src_group_tags)
            for observed_index, observed in enumerate(refs):
                test = refs[:observed_index] + refs[observed_index + 1:]
                lp, n = mc_log_likelihood(
                    model, source, None if prior else observed, test, samples, config, seed,
                    cell=(index, observed_index), unit=item.unit, span_map=span_map,
                )
                total += lp
                tokens += n
    ppl = math.exp(-total / tokens)
    logger.info(f"Cross-validated PPL = {ppl:.4f} over {tokens} tokens")
    return ppl


def model_ppl(model: TranslationModel, examples: Sequence[Example], batch_size: int = 64) -> float:
    """Teacher-forced per-token perplexity of a pair set."""
    if not examples:
        raise MetricInputError("model_ppl needs at least one pair")
    total, tokens = 0.0, 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        total += sequence_log_probs(model, make_batch(chunk)).to(torch.float64).sum().item()
        tokens += sum(len(e.tgt) + 1 for e in chunk)
    return math.exp(-total / tokens)
