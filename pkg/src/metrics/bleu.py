from collections import Counter
from itertools import combinations
from typing import Callable, Hashable, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field
from sacrebleu.metrics.bleu import BLEU
from sacrebleu.metrics.helpers import extract_all_word_ngrams

from src.common.errors import TargetAugError, ValidationFailure
from src.common.utils import get_logger

logger = get_logger(__name__)

NGRAM_ORDER = 4

Tokens = Sequence[Hashable]


class MetricError(TargetAugError):
    """Custom exception for metric computation errors."""
    pass


class MetricInputError(ValidationFailure, MetricError):
    """Custom exception for misaligned or undersized metric inputs."""
    pass


class BleuStats(BaseModel):
    """Sufficient statistics: clipped matches and totals per order, plus lengths."""
    correct: List[int] = Field(default_factory=lambda: [0] * NGRAM_ORDER)
    total: List[int] = Field(default_factory=lambda: [0] * NGRAM_ORDER)
    sys_len: int = 0
    ref_len: int = 0

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            correct=[a + b for a, b in zip(self.correct, other.correct)],
            total=[a + b for a, b in zip(self.total, other.total)],
            sys_len=self.sys_len + other.sys_len,
            ref_len=self.ref_len + other.ref_len,
        )


class BleuScore(BaseModel):
    score: float = Field(..., ge=0.0, le=100.0)
    precisions: List[float]
    brevity_penalty: float
    sys_len: int
    ref_len: int


def as_line(tokens: Tokens) -> str:
    """Pre-tokenized ids or words as the whitespace-joined line sacrebleu splits again."""
    return " ".join(str(tok) for tok in tokens)


def extract_ngrams(tokens: Tokens, max_order: int = NGRAM_ORDER) -> Counter:
    ngrams, _ = extract_all_word_ngrams(as_line(tokens), 1, max_order)
    return ngrams


def segment_stats(hyp: Tokens, ref: Tokens) -> BleuStats:
    hyp_ngrams = extract_ngrams(hyp)
    ref_ngrams = extract_ngrams(ref)
    stats = BleuStats(sys_len=len(hyp), ref_len=len(ref))
    for ngram, count in hyp_ngrams.items():
        n = len(ngram)
        stats.total[n - 1] += count
        stats.correct[n - 1] += min(count, ref_ngrams.get(ngram, 0))
    return stats


def compute_bleu(stats: BleuStats, smooth: bool = True) -> BleuScore:
    """
    BLEU-4 from sufficient statistics, x100.
    With smoothing, an order n >= 2 with no matches uses (0 + 1) / (total + 1).
    No unigram matches always scores 0.
    """
    if stats.sys_len == 0 and stats.ref_len == 0:
        return BleuScore(score=100.0, precisions=[1.0] * NGRAM_ORDER, brevity_penalty=1.0, sys_len=0, ref_len=0)

    correct, total = list(stats.correct), list(stats.total)
    if smooth:
        for n in range(1, NGRAM_ORDER):
            if correct[n] == 0:
                correct[n], total[n] = 1, total[n] + 1
    bleu = BLEU.compute_bleu(correct, total, stats.sys_len, stats.ref_len, smooth_method="none",
                             max_ngram_order=NGRAM_ORDER)
    precisions = [p / 100.0 for p in bleu.precisions]
    score = bleu.score if stats.correct[0] > 0 else 0.0
    return BleuScore(score=min(100.0, max(0.0, score)), precisions=precisions, brevity_penalty=bleu.bp,
                     sys_len=stats.sys_len, ref_len=stats.ref_len)


def corpus_bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens], smooth: bool = True) -> BleuScore:
    if len(hyps) != len(refs):
        raise MetricInputError(f"{len(hyps)} hypotheses but {len(refs)} references")
    stats = BleuStats()
    for hyp, ref in zip(hyps, refs):
        stats = stats + segment_stats(hyp, ref)
    return compute_bleu(stats, smooth)


def s_bleu(hyps: Sequence[Tokens], refs: Sequence[Tokens], smooth: bool = True) -> float:
    """Corpus BLEU over aligned sentence pairs."""
    return corpus_bleu(hyps, refs, smooth).score


def d_bleu(hyp_docs: Sequence[Sequence[Tokens]], ref_docs: Sequence[Sequence[Tokens]], smooth: bool = True) -> float:
    """Corpus BLEU where each document is one token sequence."""
    if len(hyp_docs) != len(ref_docs):
        raise MetricInputError(f"{len(hyp_docs)} hypothesis documents but {len(ref_docs)} reference documents")
    flatten = lambda doc: [tok for sent in doc for tok in sent]  # noqa: E731
    return corpus_bleu([flatten(d) for d in hyp_docs], [flatten(d) for d in ref_docs], smooth).score


def deviation(hyp: Tokens, ref: Tokens, smooth: bool = True) -> float:
    """Distance to a perfect score: 100 - BLEU of the single pair."""
    return 100.0 - corpus_bleu([hyp], [ref], smooth).score


def diversity(translations: Sequence[Tokens], distance: Optional[Callable[[Tokens, Tokens], float]] = None) -> float:
    """Mean pairwise deviation over the unordered pairs of M >= 2 translations."""
    if len(translations) < 2:
        raise MetricInputError(f"diversity needs at least 2 translations, got {len(translations)}")
    distance = distance or deviation
    pairs = list(combinations(range(len(translations)), 2))
    return sum(distance(translations[i], translations[j]) for i, j in pairs) / len(pairs)


def set_deviation(generated: Sequence[Tokens], gold: Sequence[Tokens], smooth: bool = True) -> Tuple[float, float]:
    """(100 - corpus BLEU of the set against gold, mean per-pair deviation)."""
    if not generated:
        raise MetricInputError("set_deviation needs at least one pair")
    corpus = 100.0 - s_bleu(generated, gold, smooth)
    per_pair = sum(deviation(h, r, smooth) for h, r in zip(generated, gold)) / len(generated)
    return corpus, per_pair
