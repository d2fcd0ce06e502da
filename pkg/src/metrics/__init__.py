from src.metrics.bleu import (
    BleuScore,
    BleuStats,
    MetricError,
    MetricInputError,
    compute_bleu,
    corpus_bleu,
    d_bleu,
    deviation,
    diversity,
    s_bleu,
    set_deviation,
)
from src.metrics.ppl import cross_validated_ppl, mc_log_likelihood, mc_posterior_ppl, model_ppl
from src.metrics.report import MetricReport

__all__ = [
    "BleuScore", "BleuStats", "MetricError", "MetricInputError", "MetricReport", "compute_bleu", "corpus_bleu",
    "cross_validated_ppl", "d_bleu", "deviation", "diversity", "mc_log_likelihood", "mc_posterior_ppl",
    "model_ppl", "s_bleu", "set_deviation",
]
