"""Feature-to-taxel regressor: a ReLU MLP trained with L1 loss and AdamW."""

from dataclasses import dataclass, field

import numpy as np

from .. import dataset
from ..errors import ConfigurationError, InvalidArgument
from ..rng import make_rng
from .core import AdamState, PlateauSchedule, TrainConfig, adamw_step, clip_grad_norm, l1_loss, uniform_init

DEFAULT_LAYERS = (8, 64, 64, 8)


@dataclass
class MlpParams:
    weights: list  # (in, out) per layer
    biases: list
    activation: str = "relu"
    in_mean: np.ndarray = field(default_factory=lambda: np.zeros(8))
    in_std: np.ndarray = field(default_factory=lambda: np.ones(8))
    out_mean: np.ndarray = field(default_factory=lambda: np.zeros(8))
    out_std: np.ndarray = field(default_factory=lambda: np.ones(8))
    baselines: np.ndarray = field(default_factory=lambda: np.zeros(8))

    def __post_init__(self):
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise InvalidArgument("consecutive layer dimensions do not chain")
        if np.any(np.asarray(self.in_std) <= 0) or np.any(np.asarray(self.out_std) <= 0):
            raise InvalidArgument("normalization std must be positive")

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def param_dict(self):
        """Trainable arrays keyed ``W0, b0, W1, ...``; they alias the stored arrays."""
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        return out

    def copy(self):
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation,
                         self.in_mean.copy(), self.in_std.copy(), self.out_mean.copy(), self.out_std.copy(),
                         self.baselines.copy())


def init_mlp(rng, dims=DEFAULT_LAYERS):
    weights = [uniform_init(rng, a, (a, b)) for a, b in zip(dims[:-1], dims[1:])]
    biases = [np.zeros(b) for b in dims[1:]]
    return MlpParams(weights, biases)


def _forward(params, x):
    acts = [x]
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def mlp_forward(params, x):
    """Affine/ReLU chain on normalized inputs; the final layer is affine only."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise InvalidArgument(f"input has {x.shape[-1]} features, network expects {params.weights[0].shape[0]}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("non-finite network input")
    out, _ = _forward(params, np.atleast_2d(x))
    return out.reshape(x.shape[:-1] + (out.shape[-1],))


def mlp_backward(params, acts, dout):
    grads = {}
    delta = dout
    for i in range(len(params.weights) - 1, -1, -1):
        grads[f"W{i}"] = acts[i].T @ delta
        grads[f"b{i}"] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ params.weights[i].T) * (acts[i] > 0)
    return {k: grads[k] for k in params.param_dict()}


def backward(params, x, target):
    """Mean L1 loss of a normalized batch and exact gradients for every parameter."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    target = np.atleast_2d(np.asarray(target, dtype=float))
    if len(x) == 0:
        raise InvalidArgument("empty batch")
    out, acts = _forward(params, x)
    loss, dout = l1_loss(out, target)
    return loss, mlp_backward(params, acts, dout)


def _standardize_stats(data, names):
    mean = data.mean(axis=0)
    std = data.std(axis=0)
    for i, s in enumerate(std):
        if s == 0:
            raise ConfigurationError(f"channel {names[i]} has zero variance in the training split")
    return mean, std


def train_digitac(inputs, targets, config=TrainConfig(), baselines=np.zeros(8), dims=DEFAULT_LAYERS):
    """Fit the regressor on (feature, gauge-pressure) pairs.

    Inputs and targets are standardized with training-split statistics; every
    presentation adds N(0, input_noise^2) to the standardized inputs. Returns the
    best-validation parameters and a report with per-epoch losses.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = len(inputs)
    if n < 2 or len(targets) != n:
        raise InvalidArgument("need at least two input/target pairs of equal count")
    rng = make_rng(config.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(config.val_fraction * n)))
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    if len(train_idx) == 0:
        raise ConfigurationError("no training pairs left after the validation split")

    in_mean, in_std = _standardize_stats(inputs[train_idx], [f"f{i + 1}" for i in range(inputs.shape[1])])
    out_mean, out_std = _standardize_stats(targets[train_idx], [f"s{i + 1}" for i in range(targets.shape[1])])
    X = (inputs - in_mean) / in_std
    Y = (targets - out_mean) / out_std

    params = init_mlp(rng, dims)
    params.in_mean, params.in_std, params.out_mean, params.out_std = in_mean, in_std, out_mean, out_std
    params.baselines = np.asarray(baselines, dtype=float).copy()
    theta = params.param_dict()
    opt = AdamState.zeros_like(theta)
    sched = PlateauSchedule(config.learning_rate, config.plateau_factor, config.plateau_patience,
                            config.plateau_threshold, config.min_lr)
    best, best_loss, best_epoch = params.copy(), np.inf, -1
    history = []
    for epoch in range(config.max_epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            b = order[start : start + config.batch_size]
            xb = X[b] + rng.normal(0.0, 1.0, X[b].shape) * config.input_noise
            loss, grads = backward(params, xb, Y[b])
            grads, _ = clip_grad_norm(grads, config.clip_norm)
            adamw_step(opt, theta, grads, sched.lr, weight_decay=config.weight_decay)
            total += loss * len(b)
        train_loss = total / len(order)
        val_loss = l1_loss(_forward(params, X[val_idx])[0], Y[val_idx])[0]
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": sched.lr})
        if val_loss < best_loss:
            best, best_loss, best_epoch = params.copy(), val_loss, epoch
        sched.step(val_loss)

    report = {
        "model": "digitac_mlp",
        "dims": list(dims),
        "seed": config.seed,
        "config": dict(config.__dict__),
        "n_pairs": int(n),
        "n_train": int(len(train_idx)),
        "n_val": int(len(val_idx)),
        "best_epoch": int(best_epoch),
        "best_val_loss": float(best_loss),
        "history": history,
        "lr_events": sched.events,
        "dataset_digest": dataset.fnv1a64(np.ascontiguousarray(inputs).tobytes() + np.ascontiguousarray(targets).tobytes()),
    }
    return best, report


def predict_digitac(model, features):
    """Absolute taxel readings (kPa) for a (T, 8) stack of feature frames."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    z = mlp_forward(model, (f - model.in_mean) / model.in_std)
    return z * model.out_std + model.out_mean + model.baselines


def save_mlp(model, path):
    arrays = dict(model.param_dict())
    arrays.update(in_mean=model.in_mean, in_std=model.in_std, out_mean=model.out_mean, out_std=model.out_std,
                  baselines=model.baselines)
    header = {"architecture": {"type": "mlp", "dims": model.dims, "activation": model.activation}}
    return dataset.write_blob_document(path, "model", header, arrays)


def load_mlp(path):
    header, arrays = dataset.read_blob_document(path, "model")
    arch = header["architecture"]
    if arch.get("type") != "mlp":
        raise InvalidArgument(f"{path}: not an MLP model")
    n = len(arch["dims"]) - 1
    return MlpParams([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)], arch["activation"],
                     arrays["in_mean"], arrays["in_std"], arrays["out_mean"], arrays["out_std"], arrays["baselines"])
