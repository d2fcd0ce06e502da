import copy
import math
from typing import List, Optional, Sequence, Tuple

import torch
from pydantic import BaseModel, Field
from tqdm import tqdm

from src.common.errors import RuntimeFault
from src.common.utils import Timer, derive_rng, get_logger, seeded_torch
from src.neural.config import TrainConfig
from src.neural.model import Example, ModelError, ModelShapeError, TranslationModel, make_batch, weighted_loss

logger = get_logger(__name__)


class TrainingDivergedError(RuntimeFault, ModelError):
    """Custom exception for a non-finite training loss."""
    def __init__(self, message: str, epoch: int, step: int, learning_rate: float, recent_losses: List[float]):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
        self.learning_rate = learning_rate
        self.recent_losses = recent_losses


class LossCurve(BaseModel):
    train_loss: List[float] = Field(default_factory=list, description="Mean training loss per epoch")
    dev_loss: List[float] = Field(default_factory=list, description="Selection loss per epoch")
    best_epoch: int = 0
    best_dev_loss: float = math.inf
    steps: int = 0
    stopped_early: bool = False


def warmup_inverse_sqrt(warmup_steps: int):
    """Linear warmup to the base rate, then decay with 1/sqrt(step)."""
    def factor(step: int) -> float:
        step = step + 1
        if warmup_steps <= 0:
            return 1.0
        return min(step / warmup_steps, math.sqrt(warmup_steps / step))
    return factor


def batches(examples: Sequence[Example], batch_size: int, order: Optional[Sequence[int]] = None):
    order = range(len(examples)) if order is None else order
    chunk = []
    for i in order:
        chunk.append(examples[i])
        if len(chunk) == batch_size:
            yield make_batch(chunk)
            chunk = []
    if chunk:
        yield make_batch(chunk)


@torch.no_grad()
def evaluate_loss(model: TranslationModel, examples: Sequence[Example], batch_size: int = 64) -> float:
    """Weighted token NLL without label smoothing."""
    was_training = model.training
    model.eval()
    total, weight = 0.0, 0.0
    try:
        for batch in batches(examples, batch_size):
            log_probs = model(batch)
            mask = (~batch.tgt_pad_mask).to(log_probs.dtype)
            w = (batch.weights.to(log_probs.dtype).unsqueeze(1) * mask).sum().item()
            total += weighted_loss(log_probs, batch, 0.0).item() * w
            weight += w
    finally:
        model.train(was_training)
    return total / weight


@torch.no_grad()
def token_accuracy(model: TranslationModel, examples: Sequence[Example], batch_size: int = 64) -> float:
    """Teacher-forced argmax accuracy over non-pad target positions."""
    was_training = model.training
    model.eval()
    correct, total = 0, 0
    try:
        for batch in batches(examples, batch_size):
            predicted = model(batch).argmax(dim=-1)
            mask = ~batch.tgt_pad_mask
            correct += int(((predicted == batch.tgt_out) & mask).sum().item())
            total += int(mask.sum().item())
    finally:
        model.train(was_training)
    return correct / max(total, 1)


def train(model: TranslationModel, examples: Sequence[Example], config: TrainConfig,
          dev_examples: Optional[Sequence[Example]] = None, show_progress: bool = False
          ) -> Tuple[TranslationModel, LossCurve]:
    """
    Adam with warmup/inverse-sqrt schedule and early stopping.
    Selection uses dev loss when dev examples are given, else the epoch's training loss.
    The returned model holds the best epoch's parameters.
    """
    if not examples:
        raise ModelShapeError("training set must not be empty")

    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                                 betas=config.adam_betas, eps=config.adam_eps)
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, warmup_inverse_sqrt(config.warmup_steps))
    curve = LossCurve()
    best_state = copy.deepcopy(model.state_dict())
    bad_epochs = 0
    smoothing = model.config.label_smoothing

    with Timer(f"Training {model.role.value} model", logger), seeded_torch(config.seed):
        for epoch in range(1, config.epochs + 1):
            model.train()
            order = derive_rng(config.seed, "shuffle", epoch).permutation(len(examples))
            epoch_total, epoch_batches, recent = 0.0, 0, []
            iterator = batches(examples, config.batch_size, order)
            if show_progress:
                iterator = tqdm(iterator, desc=f"epoch {epoch}", leave=False)

            for batch in iterator:
                optimizer.zero_grad(set_to_none=True)
                loss = weighted_loss(model(batch), batch, smoothing)
                value = float(loss.item())
                recent = (recent + [value])[-5:]
                if not math.isfinite(value):
                    lr = optimizer.param_groups[0]["lr"]
                    logger.error(f"Loss diverged at epoch {epoch}, step {curve.steps}, lr={lr:.3e}: {recent}")
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch}, step {curve.steps}",
                        epoch=epoch, step=curve.steps, learning_rate=lr, recent_losses=recent,
                    )
                loss.backward()
                if config.clip_norm > 0:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.clip_norm)
                optimizer.step()
                scheduler.step()
                curve.steps += 1
                epoch_total += value
                epoch_batches += 1

            train_loss = epoch_total / epoch_batches
            selection = evaluate_loss(model, dev_examples) if dev_examples else train_loss
            curve.train_loss.append(train_loss)
            curve.dev_loss.append(selection)
            logger.info(f"epoch {epoch}: train={train_loss:.4f} select={selection:.4f}")

            if selection < curve.best_dev_loss - config.min_delta:
                curve.best_dev_loss = selection
                curve.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > config.patience:
                    curve.stopped_early = True
                    logger.info(f"Early stop after epoch {epoch}; best epoch {curve.best_epoch}")
                    break

    model.load_state_dict(best_state)
    model.eval()
    return model, curve
