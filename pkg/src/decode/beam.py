from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field

from src.common.errors import TargetAugError, ValidationFailure
from src.common.utils import get_logger
from src.corpus.instances import split_sentences
from src.corpus.types import ParallelInstance
from src.corpus.vocab import BOS_ID, EOS_ID, SEP_ID
from src.latent.types import ExtendedInput

logger = get_logger(__name__)


class DecodeError(ValidationFailure, TargetAugError):
    """Custom exception for invalid decoding requests."""
    pass


class StepModel(Protocol):
    """What beam search needs from a model."""

    def encode(self, src: torch.Tensor, src_tags: torch.Tensor) -> torch.Tensor: ...

    def next_log_probs(self, memory: torch.Tensor, src: torch.Tensor, src_tags: torch.Tensor,
                       prefixes: torch.Tensor, prefix_tags: torch.Tensor) -> torch.Tensor: ...


class Hypothesis(BaseModel):
    tokens: List[int] = Field(..., min_length=1, description="Generated ids, eos included when finished")
    score: float = Field(..., le=0.0)
    finished: bool = True
    finish_step: int = 0

    @property
    def normalized_score(self) -> float:
        return self.score / len(self.tokens)

    @property
    def output(self) -> List[int]:
        """Tokens without the closing eos."""
        return self.tokens[:-1] if self.finished and self.tokens[-1] == EOS_ID else list(self.tokens)


def default_max_len(source_length: int, a: int = 2, b: int = 8) -> int:
    return a * source_length + b


def fit_max_len(model: StepModel, max_len: int) -> int:
    """Clamp a decode budget to the decoder positions the model has."""
    capacity = getattr(getattr(model, "config", None), "max_len", None)
    if capacity is not None and max_len > capacity:
        logger.warning(f"Decode budget {max_len} exceeds model max_len={capacity}; clamping")
        return capacity
    return max_len


def prefix_tags(prefix: Sequence[int], max_tag: int, sep_id: int = SEP_ID) -> List[int]:
    """Decoder tags for bos + prefix: position j gets 1 + separators among the first j generated ids."""
    tags = []
    seps = 0
    for j in range(len(prefix) + 1):
        tags.append(min(1 + seps, max_tag))
        if j < len(prefix) and prefix[j] == sep_id:
            seps += 1
    return tags


def _rank(hypotheses: List[Hypothesis]) -> List[Hypothesis]:
    return sorted(hypotheses, key=lambda h: (-h.normalized_score, h.tokens, h.finish_step))


@torch.no_grad()
def beam_search(model: StepModel, source: ExtendedInput, beam_size: int = 5, max_len: Optional[int] = None,
                sep_id: int = SEP_ID) -> List[Hypothesis]:
    """
    Beam search ranked by mean token log-probability.
    Candidates are ordered by score, then token id, then beam index. Returns at most
    beam_size hypotheses; when none finish within max_len the surviving beams come back
    flagged unfinished.
    """
    if beam_size < 1:
        raise DecodeError(f"beam_size must be >= 1, got {beam_size}")
    if max_len is None:
        max_len = default_max_len(source.source_length)
    max_len = fit_max_len(model, max_len)
    if max_len < 1:
        raise DecodeError(f"max_len must be >= 1, got {max_len}")

    src = torch.tensor([source.tokens], dtype=torch.long)
    src_tags = torch.tensor([source.group_tags], dtype=torch.long)
    max_tag = max(source.group_tags) if source.group_tags else 1
    memory = model.encode(src, src_tags)

    alive: List[Tuple[List[int], float]] = [([], 0.0)]
    finished: List[Hypothesis] = []

    for step in range(max_len):
        n = len(alive)
        prefixes = torch.tensor([[BOS_ID] + tokens for tokens, _ in alive], dtype=torch.long)
        tags = torch.tensor([prefix_tags(tokens, max_tag, sep_id) for tokens, _ in alive], dtype=torch.long)
        log_probs = model.next_log_probs(
            memory.expand(n, -1, -1), src.expand(n, -1), src_tags.expand(n, -1), prefixes, tags,
        ).to(torch.float64).cpu().numpy()

        vocab = log_probs.shape[1]
        totals = np.array([score for _, score in alive])[:, None] + log_probs
        flat = totals.reshape(-1)
        token_ids = np.tile(np.arange(vocab), n)
        beam_ids = np.repeat(np.arange(n), vocab)
        order = np.lexsort((beam_ids, token_ids, -flat))

        next_alive: List[Tuple[List[int], float]] = []
        for rank, idx in enumerate(order):
            if len(next_alive) == beam_size:
                break
            token, beam, score = int(token_ids[idx]), int(beam_ids[idx]), float(flat[idx])
            if not np.isfinite(score):
                break
            tokens = alive[beam][0] + [token]
            if token == EOS_ID:
                if rank < beam_size:
                    finished.append(Hypothesis(tokens=tokens, score=min(score, 0.0), finished=True, finish_step=step))
                continue
            next_alive.append((tokens, score))

        alive = next_alive
        if len(finished) >= beam_size or not alive:
            break

    if finished:
        return _rank(finished)[:beam_size]

    logger.warning(f"No hypothesis finished within max_len={max_len}; returning unfinished beams")
    return _rank([
        Hypothesis(tokens=tokens, score=min(score, 0.0), finished=False, finish_step=max_len)
        for tokens, score in alive
    ])[:beam_size]


@torch.no_grad()
def greedy_decode(model: StepModel, source: ExtendedInput, max_len: Optional[int] = None,
                  sep_id: int = SEP_ID) -> Hypothesis:
    """Stepwise argmax decoding."""
    if max_len is None:
        max_len = default_max_len(source.source_length)
    max_len = fit_max_len(model, max_len)
    src = torch.tensor([source.tokens], dtype=torch.long)
    src_tags = torch.tensor([source.group_tags], dtype=torch.long)
    max_tag = max(source.group_tags) if source.group_tags else 1
    memory = model.encode(src, src_tags)

    tokens: List[int] = []
    score = 0.0
    for step in range(max_len):
        prefixes = torch.tensor([[BOS_ID] + tokens], dtype=torch.long)
        tags = torch.tensor([prefix_tags(tokens, max_tag, sep_id)], dtype=torch.long)
        log_probs = model.next_log_probs(memory, src, src_tags, prefixes, tags)[0].to(torch.float64)
        token = int(torch.argmax(log_probs).item())
        score += float(log_probs[token].item())
        tokens.append(token)
        if token == EOS_ID:
            return Hypothesis(tokens=tokens, score=min(score, 0.0), finished=True, finish_step=step)
    return Hypothesis(tokens=tokens, score=min(score, 0.0), finished=False, finish_step=max_len)


def translate(model: StepModel, instances: Sequence[ParallelInstance], beam_size: int = 5,
              max_len_a: int = 2, max_len_b: int = 8) -> List[List[List[int]]]:
    """
    Top hypothesis per instance, split into sentences at separators.
    Sentence-unit instances come back as a single sentence each.
    """
    if hasattr(model, "eval"):
        model.eval()
    outputs = []
    for instance in instances:
        source = ExtendedInput(tokens=instance.source, group_tags=instance.src_group_tags,
                               source_length=len(instance.source))
        best = beam_search(model, source, beam_size, default_max_len(len(instance.source), max_len_a, max_len_b))[0]
        outputs.append(split_sentences(best.output) if instance.num_groups > 1 else [best.output])
    logger.info(f"Translated {len(outputs)} instances with beam={beam_size}")
    return outputs
