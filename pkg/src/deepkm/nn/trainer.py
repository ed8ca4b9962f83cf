"""Momentum SGD training loop, evaluation and the regularizer hook protocol."""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, Field

from deepkm.core.config import TrainConfig
from deepkm.core.exceptions import ContractViolation, TrainingDivergedError
from deepkm.data.datasets import Dataset
from deepkm.nn.layers import softmax
from deepkm.nn.network import Gradients, ModelParams, backward, forward

logger = logging.getLogger(__name__)

Array = NDArray[np.float64]


class RegularizerHook(Protocol):
    """Extra per-conv-layer gradient terms plus an epoch-boundary callback."""

    def on_epoch_start(self, model: ModelParams, epoch: int) -> None: ...

    def extra_gradients(self, model: ModelParams) -> dict[str, Array]: ...

    def penalties(self, model: ModelParams) -> dict[str, float]: ...


class EpochRecord(BaseModel):
    """One structured training-log record."""

    epoch: int
    learning_rate: float
    loss: float
    accuracy: float
    penalty: dict[str, float] = Field(default_factory=dict)

    def summary(self) -> str:
        text = (
            f"epoch={self.epoch} lr={self.learning_rate:.5g}"
            f" loss={self.loss:.6f} acc={self.accuracy:.4f}"
        )
        for name, value in self.penalty.items():
            text += f" penalty[{name}]={value:.6g}"
        return text


@dataclass
class TrainResult:
    model: ModelParams
    history: list[EpochRecord] = field(default_factory=list)


def sgd_step(
    model: ModelParams,
    gradients: Gradients,
    config: TrainConfig,
    extra_grads: dict[str, Array] | None = None,
    velocity: dict[str, Array] | None = None,
    learning_rate: float | None = None,
) -> ModelParams:
    """Momentum SGD update applied in place.

    ``extra_grads`` (regularizer terms for conv weights) are added to the raw
    task gradient before the momentum buffer sees it.
    """
    lr = config.learning_rate if learning_rate is None else learning_rate
    extra_grads = extra_grads or {}
    for name in extra_grads:
        if name not in model.conv_names:
            raise ContractViolation(f"extra gradient for non-conv layer {name}")

    for kind, params, grads in (
        ("weight", model.weights, gradients.weights),
        ("bias", model.biases, gradients.biases),
    ):
        for name, param in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(param)
            elif g.shape != param.shape:
                raise ContractViolation(f"{kind} gradient {g.shape} for {name} {param.shape}")
            if kind == "weight" and name in extra_grads:
                extra = extra_grads[name]
                if extra.shape != param.shape:
                    raise ContractViolation(
                        f"extra gradient {extra.shape} for {name} {param.shape}"
                    )
                g = g + extra
            if velocity is not None and config.momentum > 0:
                key = f"{kind}:{name}"
                v = velocity.get(key)
                v = g.copy() if v is None else config.momentum * v + g
                velocity[key] = v
                g = v
            param -= lr * g
    model.version += 1
    return model


def predict_proba(model: ModelParams, images: Array, batch_size: int = 256) -> Array:
    """Softmax class probabilities, one row per image."""
    out = []
    for start in range(0, images.shape[0], batch_size):
        logits, _ = forward(model, images[start : start + batch_size])
        out.append(softmax(logits))
    return np.concatenate(out)


def predict(model: ModelParams, images: Array, batch_size: int = 256) -> NDArray[np.int64]:
    return predict_proba(model, images, batch_size).argmax(axis=1).astype(np.int64)


def evaluate(model: ModelParams, dataset: Dataset, batch_size: int = 256) -> float:
    """Top-1 accuracy in [0, 1]."""
    if len(dataset) == 0:
        raise ContractViolation("cannot evaluate on an empty dataset")
    predictions = predict(model, dataset.images, batch_size)
    return float(np.mean(predictions == dataset.labels))


def train(
    model: ModelParams,
    dataset: Dataset,
    config: TrainConfig,
    regularizer: RegularizerHook | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
    log_path: Path | None = None,
) -> TrainResult:
    """Train in place; deterministic given ``config.seed``.

    The accuracy of each record is measured on the batches as they are
    seen during the epoch.
    """
    if len(dataset) == 0:
        raise ContractViolation("cannot train on an empty dataset")
    if dataset.input_shape != model.arch.input_shape:
        raise ContractViolation(
            f"dataset images {dataset.input_shape}"
            f" do not match model input {model.arch.input_shape}"
        )
    rng = np.random.default_rng(config.seed)
    velocity: dict[str, Array] = {}
    result = TrainResult(model=model)
    n = len(dataset)

    for epoch in range(config.epochs):
        lr = config.learning_rate_at(epoch)
        if regularizer is not None:
            regularizer.on_epoch_start(model, epoch)
        order = rng.permutation(n)
        total_loss = 0.0
        correct = 0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            labels = dataset.labels[idx]
            logits, cache = forward(model, dataset.images[idx])
            grads = backward(cache, labels)
            if not np.isfinite(grads.loss):
                raise TrainingDivergedError(epoch, grads.loss)
            total_loss += grads.loss * len(idx)
            correct += int(np.sum(logits.argmax(axis=1) == labels))
            extra = regularizer.extra_gradients(model) if regularizer is not None else None
            sgd_step(model, grads, config, extra, velocity, lr)

        record = EpochRecord(
            epoch=epoch,
            learning_rate=lr,
            loss=total_loss / n,
            accuracy=correct / n,
            penalty=regularizer.penalties(model) if regularizer is not None else {},
        )
        result.history.append(record)
        logger.info(record.summary())
        if log_path is not None:
            with open(log_path, "a") as f:
                f.write(record.model_dump_json() + "\n")
        if on_epoch is not None:
            on_epoch(record)
    return result
