"""Loss functions, Adam optimizer, and the mini-batch training loop with
validation-loss early stopping."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .arch import ArchitectureSpec
from .epochs import EpochSet
from .nn import Model, build_model

BCE_CLAMP = 1e-12

LOSS_KINDS = ("binary_cross_entropy", "categorical_cross_entropy")


class TrainingError(RuntimeError):
    """Raised when training cannot continue (e.g. non-finite gradients)."""


@dataclass
class TrainConfig:
    max_epochs: int = 200
    patience: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    loss: str = "binary_cross_entropy"

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not 1 <= self.patience <= self.max_epochs:
            raise ValueError("patience must satisfy 1 <= patience <= max_epochs")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")

    def replace(self, **kwargs) -> "TrainConfig":
        values = {**self.__dict__, **kwargs}
        return TrainConfig(**values)


def loss_for_spec(spec: ArchitectureSpec) -> str:
    """Loss matching the architecture's head: sigmoid -> BCE, softmax -> CCE."""
    last = spec.layers[-1]
    if last.kind == "activation" and last.get("fn") == "softmax":
        return "categorical_cross_entropy"
    return "binary_cross_entropy"


def bce_loss(y_hat, y):
    """Binary cross-entropy per element, with the prediction clamped away
    from 0 and 1 before the logarithm. Returns (loss, dloss/dy_hat)."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(y_hat, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad


def cce_loss(probs, y):
    """Categorical cross-entropy against integer labels for a 2-class head.

    probs has shape (..., 2); returns (loss per row, dloss/dprobs).
    """
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, y[..., None], 1.0, axis=-1)
    p = np.clip(probs, BCE_CLAMP, 1.0)
    loss = -(onehot * np.log(p)).sum(axis=-1)
    grad = -onehot / p
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def for_params(cls, n: int) -> "AdamState":
        return cls(np.zeros(n, dtype=np.float64), np.zeros(n, dtype=np.float64), 0)


def adam_step(model, adam: AdamState, config: TrainConfig):
    """One bias-corrected Adam update of model.params from model.grads."""
    g = model.grads
    if not np.isfinite(g).all():
        bad = int(np.flatnonzero(~np.isfinite(g))[0])
        raise TrainingError(
            f"non-finite gradient at parameter index {bad} on step {adam.t + 1}")
    adam.t += 1
    adam.m *= config.beta1
    adam.m += (1.0 - config.beta1) * g
    adam.v *= config.beta2
    adam.v += (1.0 - config.beta2) * g * g
    m_hat = adam.m / (1.0 - config.beta1 ** adam.t)
    v_hat = adam.v / (1.0 - config.beta2 ** adam.t)
    model.params[:] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)


@dataclass
class TrainHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    epochs_ran: int = 0

    def to_csv(self, path):
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{e},{tl!r},{vl!r}" for e, tl, vl in self.rows]
        Path(path).write_text("\n".join(lines) + "\n")


def _losses(out, y, loss_kind):
    if loss_kind == "categorical_cross_entropy":
        return cce_loss(out, y)
    return bce_loss(out, y)


def mean_loss(model, epochs: EpochSet, loss_kind: str) -> float:
    """Dataset mean loss with dropout off."""
    out = model.forward(epochs.epochs, training=False)
    losses, _ = _losses(out, epochs.labels, loss_kind)
    return float(losses.mean())


def train_model(spec_or_model, train_set: EpochSet, val_set: EpochSet,
                config: TrainConfig) -> tuple[Model, TrainHistory]:
    """Train with Adam and early stopping on validation loss.

    Runs up to max_epochs; each epoch shuffles the training set (seeded),
    applies one Adam update per mini-batch, then measures the full
    validation loss with dropout off. Stops once the best validation loss
    has not strictly improved for `patience` consecutive epochs and
    restores the weights of the best epoch. Sets are expected to be
    standardized already.
    """
    if train_set.n_trials == 0:
        raise ValueError("training set is empty")
    if val_set.n_trials == 0:
        raise ValueError("validation set is empty")
    if isinstance(spec_or_model, ArchitectureSpec):
        model = build_model(spec_or_model, seed=config.seed)
    else:
        model = spec_or_model
    if getattr(model, "output_dim", 1) == 2:
        if config.loss != "categorical_cross_entropy":
            raise ValueError("two-class head requires categorical_cross_entropy loss")
    elif config.loss != "binary_cross_entropy":
        raise ValueError("scalar head requires binary_cross_entropy loss")

    adam = AdamState.for_params(model.params.size)
    shuffle_rng = np.random.default_rng([config.seed, 2])
    y_train = train_set.labels
    n = train_set.n_trials

    # pre-transpose to (trials, samples, channels) and pre-apply the leading
    # parameter-free layers once; stub models fall back to the plain interface
    flow = getattr(model, "forward_flow", None)
    if flow is not None:
        x_train, entry = model.prepare_flow(
            np.ascontiguousarray(train_set.epochs.transpose(0, 2, 1)))
        x_val, _ = model.prepare_flow(
            np.ascontiguousarray(val_set.epochs.transpose(0, 2, 1)))
        run = lambda xb, training: flow(xb, training, entry)
    else:
        x_train = train_set.epochs
        x_val = val_set.epochs
        run = lambda xb, training: model.forward(xb, training=training)

    history = TrainHistory()
    best_params = model.params.copy()
    since_best = 0
    # single-threaded BLAS: the matrices are tiny, thread fan-out only adds
    # overhead, and fold-level process parallelism owns the cores
    with threadpool_limits(limits=1):
        for epoch in range(1, config.max_epochs + 1):
            perm = shuffle_rng.permutation(n)
            loss_sum = 0.0
            for batch_start in range(0, n, config.batch_size):
                idx = perm[batch_start:batch_start + config.batch_size]
                losses, dloss = _losses(run(x_train[idx], True), y_train[idx],
                                        config.loss)
                loss_sum += float(losses.sum())
                model.zero_grads()
                model.backward(dloss / len(idx))
                try:
                    adam_step(model, adam, config)
                except TrainingError as exc:
                    raise TrainingError(
                        f"epoch {epoch}, batch starting at {batch_start}: {exc}"
                    ) from exc
            train_loss = loss_sum / n
            val_losses, _ = _losses(run(x_val, False), val_set.labels, config.loss)
            val_loss = float(val_losses.mean())
            history.rows.append((epoch, train_loss, val_loss))
            history.epochs_ran = epoch
            if np.isnan(val_loss):
                break
            if val_loss < history.best_val_loss:
                history.best_val_loss = val_loss
                history.best_epoch = epoch
                best_params[:] = model.params
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    break
    model.params[:] = best_params
    return model, history
