"""Losses, gradient clipping, AdamW and the plateau learning-rate schedule.

Parameters and gradients are ordered ``{name: ndarray}`` dicts of float64.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, InvalidArgument


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    plateau_factor: float = 0.3
    plateau_patience: int = 10
    plateau_threshold: float = 1e-4
    min_lr: float = 1e-6
    clip_norm: float = 1.0
    weight_decay: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 300
    input_noise: float = 0.05
    seed: int = 0
    val_fraction: float = 0.2

    def __post_init__(self):
        if not 0 < self.plateau_factor < 1:
            raise ConfigurationError("plateau_factor must lie in (0, 1)")
        if not self.clip_norm > 0:
            raise ConfigurationError("clip_norm must be positive")
        if not 0 < self.val_fraction < 1:
            raise ConfigurationError("val_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigurationError("batch_size and max_epochs must be >= 1")
        if self.input_noise < 0 or self.learning_rate <= 0:
            raise ConfigurationError("input_noise must be >= 0 and learning_rate > 0")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown training options {sorted(unknown)}")
        return cls(**d)


def l1_loss(pred, target):
    """Mean absolute error and its gradient ``sign(pred - target) / n`` (0 at ties)."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise InvalidArgument(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.abs(diff).mean()), np.sign(diff) / diff.size


def softmax(z, axis=-1):
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy over the batch and its gradient wrt the logits."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or len(labels) != len(logits):
        raise InvalidArgument("logits must be (batch, classes) with one label per row")
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads, max_norm=1.0):
    """Scale all gradients by ``max_norm / norm`` when the global L2 norm exceeds ``max_norm``."""
    if not max_norm > 0:
        raise InvalidArgument("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return dict(grads), norm
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, norm


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(state, params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
    """One AdamW update in place: decoupled decay, then bias-corrected Adam step."""
    state.step += 1
    c1 = 1.0 - beta1**state.step
    c2 = 1.0 - beta2**state.step
    for k, p in params.items():
        if p.shape != state.m[k].shape:
            raise InvalidArgument(f"optimizer state shape mismatch for {k}")
        g = grads[k]
        p *= 1.0 - lr * weight_decay
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


@dataclass
class PlateauSchedule:
    """Multiply the learning rate by ``factor`` after ``patience`` epochs without a
    relative improvement larger than ``threshold``."""

    lr: float = 1e-3
    factor: float = 0.3
    patience: int = 10
    threshold: float = 1e-4
    min_lr: float = 1e-6
    best: float = float("inf")
    bad_epochs: int = 0
    epoch: int = 0
    events: list = field(default_factory=list)

    def step(self, val_loss):
        if not np.isfinite(val_loss):
            raise InvalidArgument("validation loss must be finite")
        self.epoch += 1
        if val_loss < self.best * (1.0 - self.threshold):
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                new = max(self.lr * self.factor, self.min_lr)
                if new < self.lr:
                    self.events.append({"epoch": self.epoch, "from": self.lr, "to": new})
                self.lr = new
                self.bad_epochs = 0
        return self.lr


def plateau_schedule(state, val_loss):
    return state.step(val_loss)


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)
