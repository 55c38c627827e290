"""Adam training loop with early stopping and best-checkpoint restore.

Only unfrozen parameters own optimizer state and receive updates. A run is
fully determined by (seed, data order, config); validation is checked once
per epoch against a pre-training baseline, and the best parameters seen are
restored on return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Microformer, Parameter
from .tensor import Matrix, SeededRng

SMALL_DATASET_EPOCHS = 50
LARGE_DATASET_EPOCHS = 10
SMALL_DATASET_THRESHOLD = 5000  # records; below this the 50-epoch default applies
MIN_IMPROVEMENT = 1e-4


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the offending epoch and batch index."""

    def __init__(self, epoch: int, batch_index: int, loss: float):
        super().__init__(
            f"non-finite loss {loss!r} at epoch {epoch}, batch {batch_index}")
        self.epoch = epoch
        self.batch_index = batch_index


@dataclass
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int | None = None  # resolved per dataset size when None
    batch_size: int = 8
    early_stop_patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def resolved_epochs(self, n_records: int) -> int:
        if self.epochs is not None:
            return self.epochs
        return (SMALL_DATASET_EPOCHS if n_records < SMALL_DATASET_THRESHOLD
                else LARGE_DATASET_EPOCHS)


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)  # one per epoch
    val_loss: list[float] = field(default_factory=list)  # one per check
    initial_val_loss: float = math.inf
    stopped_early: bool = False
    best_epoch: int = 0  # 0 means the pre-training baseline
    best_val_loss: float = math.inf

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "initial_val_loss": self.initial_val_loss,
            "stopped_early": self.stopped_early,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
        }


def adam_update(value: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                t: int, lr: float, beta1: float, beta2: float, eps: float):
    """One bias-corrected Adam update; returns (new_value, new_m, new_v)."""
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


class AdamState:
    """Moment buffers, kept only for unfrozen parameters."""

    def __init__(self, model: Microformer):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0
        for name, p in model.named_parameters():
            if not p.frozen:
                self.m[name] = np.zeros(p.value.shape)
                self.v[name] = np.zeros(p.value.shape)


def clip_global_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale unfrozen gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if not p.frozen:
            total += float(np.sum(p.grad.array**2))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for p in params:
            if not p.frozen:
                p.grad = Matrix.from_array(p.grad.array * factor)
    return norm


def step(model: Microformer, batch: list[tuple[list[int], list[int]]],
         state: AdamState, config: TrainConfig) -> float:
    """One Adam update over a batch of (tokens, targets) sequences."""
    if not batch:
        raise ValueError("batch is empty")
    model.zero_grad()
    loss = 0.0
    for tokens, targets in batch:
        loss += model.loss_and_backward(tokens, targets)
    loss /= len(batch)
    # per-sequence losses were accumulated; rescale grads to the batch mean
    inv = 1.0 / len(batch)
    for _, p in model.named_parameters():
        if not p.frozen:
            p.grad = Matrix.from_array(p.grad.array * inv)
    clip_global_norm([p for _, p in model.named_parameters()], config.clip_norm)
    state.t += 1
    for name, p in model.named_parameters():
        if p.frozen:
            continue
        new_value, state.m[name], state.v[name] = adam_update(
            p.value.array, p.grad.array, state.m[name], state.v[name],
            state.t, config.learning_rate, config.adam_beta1, config.adam_beta2,
            config.adam_eps)
        p.set_value(Matrix.from_array(new_value))
    return loss


def evaluate_loss(model: Microformer,
                  dataset: list[tuple[list[int], list[int]]]) -> float:
    """Mean per-sequence loss without touching gradients."""
    model.zero_grad()
    total = 0.0
    for tokens, targets in dataset:
        total += model.loss_and_backward(tokens, targets)
    model.zero_grad()
    return total / len(dataset)


def train(model: Microformer, train_set: list[tuple[list[int], list[int]]],
          valid_set: list[tuple[list[int], list[int]]],
          config: TrainConfig) -> TrainHistory:
    """Run the optimization loop and restore the best parameters seen.

    Early stopping fires after `early_stop_patience` consecutive validation
    checks without an improvement of at least 1e-4 over the best loss so
    far; the pre-training validation loss is the baseline. A non-finite
    training loss aborts with TrainingDiverged.
    """
    if not train_set:
        raise ValueError("training set is empty")
    if not valid_set:
        raise ValueError("validation set is empty")

    epochs = config.resolved_epochs(len(train_set))
    rng = SeededRng(config.seed)
    state = AdamState(model)
    history = TrainHistory()

    def snapshot() -> dict[str, Matrix]:
        return {name: p.value for name, p in model.named_parameters() if not p.frozen}

    history.initial_val_loss = evaluate_loss(model, valid_set)
    history.best_val_loss = history.initial_val_loss
    best_params = snapshot()
    bad_checks = 0

    for epoch in range(1, epochs + 1):
        order = list(range(len(train_set)))
        rng.shuffle(order)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            loss = step(model, batch, state, config)
            if not math.isfinite(loss):
                raise TrainingDiverged(epoch, n_batches, loss)
            epoch_loss += loss * len(batch)  # example-weighted epoch mean
            n_batches += 1
        history.train_loss.append(epoch_loss / len(train_set))

        val = evaluate_loss(model, valid_set)
        history.val_loss.append(val)
        if val <= history.best_val_loss - MIN_IMPROVEMENT:
            history.best_val_loss = val
            history.best_epoch = epoch
            best_params = snapshot()
            bad_checks = 0
        else:
            bad_checks += 1
            if bad_checks >= config.early_stop_patience:
                history.stopped_early = True
                break

    for name, p in model.named_parameters():
        if name in best_params:
            p.set_value(best_params[name])
    return history
