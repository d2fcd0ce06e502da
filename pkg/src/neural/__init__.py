from src.neural.attention import combined_attention, gate_sum, global_attention, group_attention, group_mask
from src.neural.checkpoint import CheckpointError, load_checkpoint, read_checkpoint_header, save_checkpoint
from src.neural.config import AttentionMode, ModelConfig, Role, TrainConfig
from src.neural.gradcheck import GradCheckReport, gradient_check
from src.neural.model import (
    Batch,
    Example,
    ModelError,
    NumericalFault,
    TranslationModel,
    build_model,
    forward_log_probs,
    make_batch,
    nll_loss_and_grads,
    sequence_log_probs,
)
from src.neural.trainer import LossCurve, TrainingDivergedError, train

__all__ = [
    "AttentionMode", "Batch", "CheckpointError", "Example", "GradCheckReport", "LossCurve", "ModelConfig",
    "ModelError", "NumericalFault", "Role", "TrainConfig", "TrainingDivergedError", "TranslationModel",
    "build_model", "combined_attention", "forward_log_probs", "gate_sum", "global_attention",
    "gradient_check", "group_attention", "group_mask", "load_checkpoint", "make_batch",
    "nll_loss_and_grads", "read_checkpoint_header", "save_checkpoint", "sequence_log_probs", "train",
]
