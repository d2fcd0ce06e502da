from src.latent.sampler import (
    LatentError,
    coverage_budget,
    latent_coverage,
    render_extended_input,
    sample_latent,
    sample_observed_ratio,
)
from src.latent.types import AugmentConfig, AugmentMode, Direction, ExtendedInput, LatentValue

__all__ = [
    "AugmentConfig", "AugmentMode", "Direction", "ExtendedInput", "LatentError", "LatentValue",
    "coverage_budget", "latent_coverage", "render_extended_input", "sample_latent", "sample_observed_ratio",
]
