from src.decode.beam import (
    DecodeError,
    Hypothesis,
    StepModel,
    beam_search,
    default_max_len,
    greedy_decode,
    prefix_tags,
    translate,
)

__all__ = [
    "DecodeError", "Hypothesis", "StepModel", "beam_search", "default_max_len", "greedy_decode",
    "prefix_tags", "translate",
]
