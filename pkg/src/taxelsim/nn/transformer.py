"""Time-series encoder classifier with hand-written reverse mode.

Architecture: input projection plus a fixed sinusoidal position table, a stack
of pre-norm encoder blocks (multi-head scaled dot-product self-attention and a
ReLU feed-forward, each with a residual connection), a final layer norm, mean
pooling over time and a linear class head.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import dataset
from ..errors import ConfigurationError, InvalidArgument
from ..rng import make_rng
from .core import (
    AdamState,
    PlateauSchedule,
    TrainConfig,
    adamw_step,
    clip_grad_norm,
    cross_entropy,
    softmax,
    uniform_init,
)

LN_EPS = 1e-5


@dataclass(frozen=True)
class ClassifierConfig:
    length: int = 64
    channels: int = 8
    d_model: int = 32
    n_blocks: int = 2
    n_heads: int = 2
    d_ff: int = 64

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ConfigurationError("n_heads must divide d_model")
        if min(self.length, self.channels, self.d_model, self.n_blocks, self.n_heads, self.d_ff) < 1:
            raise ConfigurationError("classifier dimensions must be positive")


@dataclass
class ClassifierParams:
    config: ClassifierConfig
    labels: list
    params: dict
    in_mean: np.ndarray = field(default_factory=lambda: np.zeros(8))
    in_std: np.ndarray = field(default_factory=lambda: np.ones(8))

    def __post_init__(self):
        if self.params["head_W"].shape[1] != len(self.labels):
            raise InvalidArgument("class head width does not match the label list")

    @property
    def positions(self):
        return sinusoidal_positions(self.config.length, self.config.d_model)

    def copy(self):
        return ClassifierParams(self.config, list(self.labels), {k: v.copy() for k, v in self.params.items()},
                                self.in_mean.copy(), self.in_std.copy())


def sinusoidal_positions(length, d_model):
    pos = np.arange(length)[:, None]
    i = np.arange(d_model)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def init_classifier(rng, config, n_classes):
    d, f = config.d_model, config.d_ff
    p = {"in_W": uniform_init(rng, config.channels, (config.channels, d)), "in_b": np.zeros(d)}
    for l in range(config.n_blocks):
        p[f"b{l}.ln1_g"] = np.ones(d)
        p[f"b{l}.ln1_b"] = np.zeros(d)
        for name in ("Wq", "Wk", "Wv", "Wo"):
            p[f"b{l}.{name}"] = uniform_init(rng, d, (d, d))
            p[f"b{l}.{name.replace('W', 'b')}"] = np.zeros(d)
        p[f"b{l}.ln2_g"] = np.ones(d)
        p[f"b{l}.ln2_b"] = np.zeros(d)
        p[f"b{l}.W1"] = uniform_init(rng, d, (d, f))
        p[f"b{l}.b1"] = np.zeros(f)
        p[f"b{l}.W2"] = uniform_init(rng, f, (f, d))
        p[f"b{l}.b2"] = np.zeros(d)
    p["lnf_g"] = np.ones(d)
    p["lnf_b"] = np.zeros(d)
    p["head_W"] = uniform_init(rng, d, (d, n_classes))
    p["head_b"] = np.zeros(n_classes)
    return p


# ------------------------------------------------------------- layer norm


def layer_norm_forward(x, g, b, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def layer_norm_backward(dy, cache):
    xhat, inv, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    n = dy.shape[-1]
    dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
    return dx, dg, db


# ------------------------------------------------------------- attention


def attention_forward(x, Wq, bq, Wk, bk, Wv, bv, Wo, bo, n_heads):
    """Multi-head self-attention on (B, T, d). Returns output, cache (with weights)."""
    B, T, d = x.shape
    dh = d // n_heads

    def heads(z):
        return z.reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)

    q, k, v = heads(x @ Wq + bq), heads(x @ Wk + bk), heads(x @ Wv + bv)
    scale = 1.0 / np.sqrt(dh)
    att = softmax(q @ k.transpose(0, 1, 3, 2) * scale, axis=-1)
    ctx = (att @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
    out = ctx @ Wo + bo
    return out, (x, q, k, v, att, ctx, scale, Wq, Wk, Wv, Wo, n_heads)


def attention_backward(dout, cache):
    x, q, k, v, att, ctx, scale, Wq, Wk, Wv, Wo, n_heads = cache
    B, T, d = x.shape
    dh = d // n_heads

    def merge(z):
        return z.transpose(0, 2, 1, 3).reshape(B, T, d)

    g = {"Wo": ctx.reshape(-1, d).T @ dout.reshape(-1, d), "bo": dout.sum(axis=(0, 1))}
    dctx = (dout @ Wo.T).reshape(B, T, n_heads, dh).transpose(0, 2, 1, 3)
    datt = dctx @ v.transpose(0, 1, 3, 2)
    dv = att.transpose(0, 1, 3, 2) @ dctx
    dscores = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) * scale
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q
    dx = np.zeros_like(x)
    xf = x.reshape(-1, d)
    for name, dz, W in (("q", dq, Wq), ("k", dk, Wk), ("v", dv, Wv)):
        dzm = merge(dz)
        g["W" + name] = xf.T @ dzm.reshape(-1, d)
        g["b" + name] = dzm.sum(axis=(0, 1))
        dx += dzm @ W.T
    return dx, g


# ---------------------------------------------------------------- network


def _forward(p, config, x):
    B, T, C = x.shape
    if T != config.length or C != config.channels:
        raise InvalidArgument(f"expected sequences of shape ({config.length}, {config.channels}), got ({T}, {C})")
    caches = {}
    h = x @ p["in_W"] + p["in_b"] + sinusoidal_positions(T, config.d_model)
    for l in range(config.n_blocks):
        pre = f"b{l}."
        a, c_ln1 = layer_norm_forward(h, p[pre + "ln1_g"], p[pre + "ln1_b"])
        o, c_att = attention_forward(a, p[pre + "Wq"], p[pre + "bq"], p[pre + "Wk"], p[pre + "bk"],
                                     p[pre + "Wv"], p[pre + "bv"], p[pre + "Wo"], p[pre + "bo"], config.n_heads)
        h = h + o
        c, c_ln2 = layer_norm_forward(h, p[pre + "ln2_g"], p[pre + "ln2_b"])
        z = c @ p[pre + "W1"] + p[pre + "b1"]
        r = np.maximum(z, 0.0)
        h = h + r @ p[pre + "W2"] + p[pre + "b2"]
        caches[l] = (c_ln1, c_att, c_ln2, c, z, r)
    hf, c_lnf = layer_norm_forward(h, p["lnf_g"], p["lnf_b"])
    pooled = hf.mean(axis=1)
    logits = pooled @ p["head_W"] + p["head_b"]
    return logits, (x, caches, c_lnf, pooled, T)


def _backward(p, config, cache, dlogits):
    x, caches, c_lnf, pooled, T = cache
    g = {"head_W": pooled.T @ dlogits, "head_b": dlogits.sum(axis=0)}
    dhf = np.repeat((dlogits @ p["head_W"].T)[:, None, :], T, axis=1) / T
    dh, g["lnf_g"], g["lnf_b"] = layer_norm_backward(dhf, c_lnf)
    d = config.d_model
    for l in range(config.n_blocks - 1, -1, -1):
        pre = f"b{l}."
        c_ln1, c_att, c_ln2, c, z, r = caches[l]
        g[pre + "W2"] = r.reshape(-1, config.d_ff).T @ dh.reshape(-1, d)
        g[pre + "b2"] = dh.sum(axis=(0, 1))
        dz = (dh @ p[pre + "W2"].T) * (z > 0)
        g[pre + "W1"] = c.reshape(-1, d).T @ dz.reshape(-1, config.d_ff)
        g[pre + "b1"] = dz.sum(axis=(0, 1))
        dc = dz @ p[pre + "W1"].T
        dx2, g[pre + "ln2_g"], g[pre + "ln2_b"] = layer_norm_backward(dc, c_ln2)
        dh = dh + dx2
        da, ga = attention_backward(dh, c_att)
        for k, v in ga.items():
            g[pre + k] = v
        dx1, g[pre + "ln1_g"], g[pre + "ln1_b"] = layer_norm_backward(da, c_ln1)
        dh = dh + dx1
    g["in_W"] = x.reshape(-1, config.channels).T @ dh.reshape(-1, d)
    g["in_b"] = dh.sum(axis=(0, 1))
    return {k: g[k] for k in p}


def classifier_forward(model, sequences):
    """Class logits for normalized sequences of shape (T, C) or (B, T, C)."""
    x = np.asarray(sequences, dtype=float)
    single = x.ndim == 2
    x = x[None] if single else x
    if x.ndim != 3:
        raise InvalidArgument("sequences must be (T, C) or (B, T, C)")
    logits, _ = _forward(model.params, model.config, x)
    return logits[0] if single else logits


def attention_weights(model, sequences, block=0):
    """Softmax attention weights (B, heads, T, T) of one block, for inspection."""
    x = np.asarray(sequences, dtype=float)
    x = x[None] if x.ndim == 2 else x
    p, config = model.params, model.config
    h = x @ p["in_W"] + p["in_b"] + sinusoidal_positions(x.shape[1], config.d_model)
    for l in range(block + 1):
        pre = f"b{l}."
        a, _ = layer_norm_forward(h, p[pre + "ln1_g"], p[pre + "ln1_b"])
        o, cache = attention_forward(a, p[pre + "Wq"], p[pre + "bq"], p[pre + "Wk"], p[pre + "bk"],
                                     p[pre + "Wv"], p[pre + "bv"], p[pre + "Wo"], p[pre + "bo"], config.n_heads)
        if l == block:
            return cache[4]
        h = h + o
        c, _ = layer_norm_forward(h, p[pre + "ln2_g"], p[pre + "ln2_b"])
        h = h + np.maximum(c @ p[pre + "W1"] + p[pre + "b1"], 0) @ p[pre + "W2"] + p[pre + "b2"]


def loss_and_grads(params, config, x, labels):
    logits, cache = _forward(params, config, x)
    loss, dlogits = cross_entropy(logits, labels)
    return loss, _backward(params, config, cache, dlogits)


def confusion_matrix(true, pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(true, int), np.asarray(pred, int)), 1)
    return cm


def normalize(model, sequences):
    return (np.asarray(sequences, float) - model.in_mean) / model.in_std


def predict_classes(model, sequences):
    return np.argmax(classifier_forward(model, normalize(model, sequences)), axis=-1)


def evaluate(model, sequences, labels):
    pred = predict_classes(model, sequences)
    cm = confusion_matrix(labels, pred, len(model.labels))
    per_class = np.divide(np.diag(cm), cm.sum(axis=1), out=np.zeros(len(cm)), where=cm.sum(axis=1) > 0)
    return {
        "accuracy": float(np.mean(pred == np.asarray(labels))),
        "per_class_accuracy": per_class.tolist(),
        "confusion_matrix": cm.tolist(),
    }


def train_classifier(sequences, labels, label_names, config=TrainConfig(), model_config=ClassifierConfig(),
                     val_groups=None):
    """Softmax cross-entropy training with AdamW, clipping and the plateau schedule.

    Validation sequences are drawn per trial (``val_groups`` ties sequences that
    belong to the same trial); the best-validation parameters are returned.
    """
    x = np.asarray(sequences, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    n_classes = len(label_names)
    if n_classes < 2:
        raise ConfigurationError("need at least two classes")
    counts = np.bincount(y, minlength=n_classes)
    for c, cnt in enumerate(counts):
        if cnt == 0:
            raise ConfigurationError(f"class {label_names[c]!r} has no training sequences")
    rng = make_rng(config.seed)

    groups = np.arange(len(x)) if val_groups is None else np.asarray(val_groups)
    units = np.unique(groups)
    # stratified trial-level validation split
    val_units = []
    unit_label = np.array([y[groups == u][0] for u in units])
    for c in range(n_classes):
        cu = units[unit_label == c]
        k = int(round(config.val_fraction * len(cu)))
        if 0 < k < len(cu):
            val_units.extend(cu[rng.permutation(len(cu))[:k]])
    is_val = np.isin(groups, val_units)
    train_idx, val_idx = np.flatnonzero(~is_val), np.flatnonzero(is_val)

    in_mean = x[train_idx].mean(axis=(0, 1))
    in_std = x[train_idx].std(axis=(0, 1))
    in_std = np.where(in_std > 0, in_std, 1.0)
    xn = (x - in_mean) / in_std

    params = init_classifier(rng, model_config, n_classes)
    model = ClassifierParams(model_config, list(label_names), params, in_mean, in_std)
    opt = AdamState.zeros_like(params)
    sched = PlateauSchedule(config.learning_rate, config.plateau_factor, config.plateau_patience,
                            config.plateau_threshold, config.min_lr)
    best, best_loss, best_epoch, history = model.copy(), np.inf, -1, []
    for epoch in range(config.max_epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            b = order[start : start + config.batch_size]
            xb = xn[b] + rng.normal(0.0, 1.0, xn[b].shape) * config.input_noise
            loss, grads = loss_and_grads(params, model_config, xb, y[b])
            grads, _ = clip_grad_norm(grads, config.clip_norm)
            adamw_step(opt, params, grads, sched.lr, weight_decay=config.weight_decay)
            total += loss * len(b)
        entry = {"epoch": epoch, "train_loss": total / len(order), "lr": sched.lr}
        if len(val_idx):
            logits, _ = _forward(params, model_config, xn[val_idx])
            val_loss, _ = cross_entropy(logits, y[val_idx])
            entry["val_loss"] = val_loss
            entry["val_accuracy"] = float(np.mean(np.argmax(logits, axis=1) == y[val_idx]))
        else:
            val_loss = entry["train_loss"]
        history.append(entry)
        if val_loss < best_loss:
            best, best_loss, best_epoch = model.copy(), val_loss, epoch
        sched.step(val_loss)

    report = {
        "model": "sequence_classifier",
        "seed": config.seed,
        "config": dict(config.__dict__),
        "architecture": dict(model_config.__dict__),
        "labels": list(label_names),
        "n_train": int(len(train_idx)),
        "n_val": int(len(val_idx)),
        "best_epoch": int(best_epoch),
        "best_val_loss": float(best_loss),
        "history": history,
        "lr_events": sched.events,
    }
    return best, report


def save_classifier(model, path):
    arrays = dict(model.params)
    arrays["in_mean"] = model.in_mean
    arrays["in_std"] = model.in_std
    arrays["positions"] = model.positions
    header = {"architecture": {"type": "sequence_classifier", **model.config.__dict__}, "labels": model.labels}
    return dataset.write_blob_document(path, "model", header, arrays)


def load_classifier(path):
    header, arrays = dataset.read_blob_document(path, "model")
    arch = dict(header["architecture"])
    if arch.pop("type") != "sequence_classifier":
        raise InvalidArgument(f"{path}: not a sequence classifier")
    config = ClassifierConfig(**arch)
    in_mean, in_std = arrays.pop("in_mean"), arrays.pop("in_std")
    arrays.pop("positions")
    return ClassifierParams(config, header["labels"], arrays, in_mean, in_std)
