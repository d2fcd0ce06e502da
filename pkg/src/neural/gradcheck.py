import copy
from typing import Dict, List

import torch
from pydantic import BaseModel, Field

from src.common.utils import derive_rng, get_logger
from src.neural.model import Batch, TranslationModel, weighted_loss

logger = get_logger(__name__)


class TensorCheck(BaseModel):
    name: str
    tensor_class: str
    entries: int
    max_relative_error: float


class GradCheckReport(BaseModel):
    eps: float
    tensors: List[TensorCheck] = Field(default_factory=list)

    @property
    def max_relative_error(self) -> float:
        return max((t.max_relative_error for t in self.tensors), default=0.0)

    def by_class(self) -> Dict[str, float]:
        worst: Dict[str, float] = {}
        for t in self.tensors:
            worst[t.tensor_class] = max(worst.get(t.tensor_class, 0.0), t.max_relative_error)
        return worst


def tensor_class(name: str) -> str:
    if "embed" in name:
        return "embedding"
    if ".gate." in name:
        return "gate"
    if "norm" in name:
        return "layer_norm"
    if ".ffn." in name:
        return "feed_forward"
    if name.startswith("output."):
        return "output"
    return "projection"


def gradient_check(model: TranslationModel, batch: Batch, eps: float = 1e-5, samples_per_tensor: int = 3,
                   seed: int = 0, dtype: torch.dtype = torch.float64, floor: float = 1e-6) -> GradCheckReport:
    """
    Central finite differences against autograd on sampled entries of every parameter tensor.
    Runs on a copy in eval mode; relative error is |a - n| / max(|a|, |n|, floor).
    """
    shadow = copy.deepcopy(model).to(dtype)
    shadow.eval()
    smoothing = shadow.config.label_smoothing

    def loss_value() -> torch.Tensor:
        return weighted_loss(shadow(batch), batch, smoothing)

    shadow.zero_grad(set_to_none=True)
    loss_value().backward()

    report = GradCheckReport(eps=eps)
    with torch.no_grad():
        for index, (name, param) in enumerate(shadow.named_parameters()):
            flat = param.data.view(-1)
            grad = param.grad.view(-1) if param.grad is not None else torch.zeros_like(flat)
            rng = derive_rng(seed, "gradcheck", index)
            picks = rng.choice(flat.numel(), size=min(samples_per_tensor, flat.numel()), replace=False)
            worst = 0.0
            for i in picks.tolist():
                original = flat[i].item()
                flat[i] = original + eps
                plus = loss_value().item()
                flat[i] = original - eps
                minus = loss_value().item()
                flat[i] = original
                numeric = (plus - minus) / (2 * eps)
                analytic = grad[i].item()
                scale = max(abs(analytic), abs(numeric), floor)
                worst = max(worst, abs(analytic - numeric) / scale)
            report.tensors.append(TensorCheck(
                name=name, tensor_class=tensor_class(name), entries=len(picks), max_relative_error=worst,
            ))
    logger.info(f"Gradient check over {len(report.tensors)} tensors: "
                f"max relative error {report.max_relative_error:.2e}")
    return report
