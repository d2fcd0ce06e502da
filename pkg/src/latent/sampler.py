import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.common.errors import TargetAugError, ValidationFailure
from src.common.utils import get_logger
from src.corpus.instances import tags_from_separators
from src.corpus.vocab import SEP_ID
from src.latent.types import AugmentConfig, ExtendedInput, LatentValue

logger = get_logger(__name__)


class LatentError(ValidationFailure, TargetAugError):
    """Custom exception for invalid latent sampling or rendering requests."""
    pass


def sample_observed_ratio(config: AugmentConfig, rng: np.random.Generator) -> float:
    """One observed ratio: Beta(a, b), or the configured constant."""
    if config.fixed_alpha is not None:
        return float(config.fixed_alpha)
    return float(rng.beta(config.beta_a, config.beta_b))


def coverage_budget(alpha: float, length: int) -> int:
    """round(alpha * length), halves rounded up."""
    return min(length, int(math.floor(alpha * length + 0.5)))


def _free_gaps(free: np.ndarray, segments: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    gaps = []
    for seg_start, seg_end in segments:
        pos = seg_start
        while pos < seg_end:
            if not free[pos]:
                pos += 1
                continue
            gap_start = pos
            while pos < seg_end and free[pos]:
                pos += 1
            gaps.append((gap_start, pos))
    return gaps


def sample_latent(target: Sequence[int], alpha: float, config: AugmentConfig, rng: np.random.Generator,
                  segments: Optional[Sequence[Tuple[int, int]]] = None) -> LatentValue:
    """
    Sample non-overlapping n-gram spans covering round(alpha * L) target tokens.

    Each span length is uniform in [ngram_min, ngram_max], truncated to the remaining budget,
    and shrunk to the largest free gap when nothing longer fits. Its start is uniform over every
    feasible start. Spans never cross a segment boundary.
    """
    if not 0.0 <= alpha <= 1.0:
        raise LatentError(f"observed ratio must lie in [0, 1], got {alpha}")
    if len(target) == 0:
        raise LatentError("cannot sample a latent value from an empty target")
    if segments is None:
        segments = [(0, len(target))]

    free = np.zeros(len(target), dtype=bool)
    for seg_start, seg_end in segments:
        free[seg_start:seg_end] = True
    length = int(free.sum())
    budget = coverage_budget(alpha, length)

    spans: List[Tuple[int, int]] = []
    remaining = budget
    while remaining > 0:
        n = int(rng.integers(config.ngram_min, config.ngram_max + 1))
        n = min(n, remaining)
        gaps = _free_gaps(free, segments)
        widest = max(end - start for start, end in gaps)
        n = min(n, widest)
        starts = np.concatenate([
            np.arange(start, end - n + 1) for start, end in gaps if end - start >= n
        ])
        start = int(starts[rng.integers(len(starts))])
        free[start:start + n] = False
        spans.append((start, n))
        remaining -= n

    spans.sort()
    return LatentValue(spans=spans, observed_ratio_requested=float(alpha), tokens_covered=budget)


def latent_coverage(latent: LatentValue, target_len: int) -> float:
    if target_len < 1:
        raise LatentError("target_len must be >= 1")
    return latent.tokens_covered / target_len


def render_extended_input(source: Sequence[int], src_group_tags: Sequence[int], latent: Optional[LatentValue],
                          target: Sequence[int], target_tags: Optional[Sequence[int]] = None,
                          sep_id: int = SEP_ID, span_map: Optional[Sequence[int]] = None) -> ExtendedInput:
    """
    Append each span as [sep] + span tokens, in ascending target position.
    With several groups, a sentence's spans go right after that sentence's source tokens,
    before its closing separator, and carry its tag.

    Span tokens are target ids; span_map re-encodes them into the input vocabulary
    (see Vocabulary.id_map). Without it the two vocabularies must coincide.
    """
    source = list(source)
    src_group_tags = list(src_group_tags)
    if latent is None or not latent.spans:
        return ExtendedInput(tokens=source, group_tags=src_group_tags, source_length=len(source),
                             latent_origin=latent)
    if not latent.is_valid_for(len(target)):
        raise LatentError("latent spans fall outside the target")

    if target_tags is None:
        target_tags = tags_from_separators(target, sep_id)
    last_group = src_group_tags[-1] if src_group_tags else 1

    blocks = {}
    for start, length in latent.spans:
        group = min(target_tags[start], last_group)
        span = target[start:start + length]
        if span_map is not None:
            span = [span_map[t] for t in span]
        blocks.setdefault(group, []).extend([sep_id] + list(span))

    tokens: List[int] = []
    tags: List[int] = []
    pos = 0
    while pos < len(source):
        group = src_group_tags[pos]
        end = pos
        while end < len(source) and src_group_tags[end] == group:
            end += 1
        body_end = end - 1 if (end < len(source) and source[end - 1] == sep_id) else end
        tokens.extend(source[pos:body_end])
        tags.extend(src_group_tags[pos:body_end])
        block = blocks.pop(group, [])
        tokens.extend(block)
        tags.extend([group] * len(block))
        tokens.extend(source[body_end:end])
        tags.extend(src_group_tags[body_end:end])
        pos = end

    for group, block in sorted(blocks.items()):
        # spans whose sentence has no source group
        tokens.extend(block)
        tags.extend([last_group] * len(block))

    return ExtendedInput(tokens=tokens, group_tags=tags, source_length=len(source), latent_origin=latent)
