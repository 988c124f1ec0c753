import numpy as np
import pytest

from taxelsim.errors import ConfigurationError, InvalidArgument
from taxelsim.nn.core import (
    AdamState,
    PlateauSchedule,
    TrainConfig,
    adamw_step,
    clip_grad_norm,
    cross_entropy,
    l1_loss,
)
from taxelsim.nn.mlp import backward, init_mlp, load_mlp, mlp_forward, predict_digitac, save_mlp, train_digitac
from taxelsim.nn.transformer import (
    ClassifierConfig,
    ClassifierParams,
    attention_backward,
    attention_forward,
    classifier_forward,
    evaluate,
    init_classifier,
    layer_norm_backward,
    layer_norm_forward,
    load_classifier,
    loss_and_grads,
    save_classifier,
    train_classifier,
)

from oracles import central_difference

torch = pytest.importorskip("torch")


def rel_err(a, f):
    return np.max(np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-5))


# ------------------------------------------------------------ gradient checks


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    params = init_mlp(rng, (8, 16, 16, 8))
    x = rng.normal(size=(5, 8))
    y = rng.normal(size=(5, 8))
    _, grads = backward(params, x, y)
    for k, p in params.param_dict().items():
        num = central_difference(lambda: backward(params, x, y)[0], p)
        assert rel_err(grads[k], num) < 1e-4, k


def test_l1_gradient():
    rng = np.random.default_rng(1)
    pred, target = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    _, g = l1_loss(pred, target)
    num = central_difference(lambda: l1_loss(pred, target)[0], pred)
    assert rel_err(g, num) < 1e-6
    assert l1_loss([1.0, 2.0], [1.0, 2.0]) == (0.0, pytest.approx(np.zeros(2)))
    with pytest.raises(InvalidArgument):
        l1_loss(np.zeros(2), np.zeros(3))


def test_cross_entropy_gradient():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(6, 4))
    labels = rng.integers(0, 4, 6)
    _, g = cross_entropy(logits, labels)
    num = central_difference(lambda: cross_entropy(logits, labels)[0], logits)
    assert rel_err(g, num) < 1e-6


def test_layer_norm_gradient():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 6))
    gam, bet = rng.normal(size=6), rng.normal(size=6)
    w = rng.normal(size=(2, 3, 6))

    def f():
        return float(np.sum(layer_norm_forward(x, gam, bet)[0] * w))

    _, cache = layer_norm_forward(x, gam, bet)
    dx, dg, db = layer_norm_backward(w, cache)
    for analytic, arr in ((dx, x), (dg, gam), (db, bet)):
        assert rel_err(analytic, central_difference(f, arr)) < 1e-5


def test_attention_gradient():
    rng = np.random.default_rng(4)
    d, heads = 6, 2
    x = rng.normal(size=(2, 5, d))
    W = {n: rng.normal(size=(d, d)) * 0.5 for n in ("Wq", "Wk", "Wv", "Wo")}
    b = {n: rng.normal(size=d) * 0.1 for n in ("bq", "bk", "bv", "bo")}
    w = rng.normal(size=(2, 5, d))

    def run():
        return attention_forward(x, W["Wq"], b["bq"], W["Wk"], b["bk"], W["Wv"], b["bv"], W["Wo"], b["bo"], heads)

    out, cache = run()
    dx, g = attention_backward(w, cache)
    f = lambda: float(np.sum(run()[0] * w))  # noqa: E731
    assert rel_err(dx, central_difference(f, x)) < 1e-5
    for name, arr in {**W, **b}.items():
        if name == "bk":
            # adds the same score to every key of a query: softmax ignores it
            np.testing.assert_allclose(central_difference(f, arr), 0.0, atol=1e-8)
            np.testing.assert_allclose(g[name], 0.0, atol=1e-12)
            continue
        assert rel_err(g[name], central_difference(f, arr)) < 1e-5, name


def test_classifier_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    cfg = ClassifierConfig(length=6, channels=8, d_model=8, n_blocks=2, n_heads=2, d_ff=12)
    params = init_classifier(rng, cfg, 3)
    x = rng.normal(size=(3, 6, 8))
    y = np.array([0, 2, 1])
    _, grads = loss_and_grads(params, cfg, x, y)
    for k, p in params.items():
        num = central_difference(lambda: loss_and_grads(params, cfg, x, y)[0], p)
        assert rel_err(grads[k], num) < 1e-4, k


# ------------------------------------------------------------ torch oracles


def test_cross_entropy_matches_torch():
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(7, 5)) * 4
    labels = rng.integers(0, 5, 7)
    loss, g = cross_entropy(logits, labels)
    t = torch.tensor(logits, requires_grad=True)
    ref = torch.nn.functional.cross_entropy(t, torch.tensor(labels))
    ref.backward()
    assert loss == pytest.approx(ref.item(), rel=1e-12)
    np.testing.assert_allclose(g, t.grad.numpy(), rtol=1e-10, atol=1e-15)


def test_layer_norm_matches_torch():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(3, 4, 8)) * 3 + 1
    gam, bet = rng.normal(size=8), rng.normal(size=8)
    y, _ = layer_norm_forward(x, gam, bet)
    ref = torch.nn.functional.layer_norm(torch.tensor(x), (8,), torch.tensor(gam), torch.tensor(bet), eps=1e-5)
    np.testing.assert_allclose(y, ref.numpy(), rtol=1e-10, atol=1e-12)


def test_adamw_matches_torch():
    rng = np.random.default_rng(8)
    p0 = rng.normal(size=(4, 3))
    grads = [rng.normal(size=(4, 3)) for _ in range(5)]
    params = {"w": p0.copy()}
    state = AdamState.zeros_like(params)
    tp = torch.nn.Parameter(torch.tensor(p0.copy()))
    opt = torch.optim.AdamW([tp], lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.1)
    for g in grads:
        adamw_step(state, params, {"w": g}, 0.01, weight_decay=0.1)
        tp.grad = torch.tensor(g)
        opt.step()
    np.testing.assert_allclose(params["w"], tp.detach().numpy(), rtol=1e-12, atol=1e-14)


def test_clipping_matches_torch():
    rng = np.random.default_rng(9)
    grads = {"a": rng.normal(size=(3, 3)) * 5, "b": rng.normal(size=4)}
    clipped, norm = clip_grad_norm(grads, 1.0)
    ts = [torch.nn.Parameter(torch.zeros(g.shape, dtype=torch.float64)) for g in grads.values()]
    for t, g in zip(ts, grads.values()):
        t.grad = torch.tensor(g)
    ref_norm = torch.nn.utils.clip_grad_norm_(ts, 1.0)
    assert norm == pytest.approx(ref_norm.item(), rel=1e-12)
    # torch divides by (norm + 1e-6), hence the loose tolerance
    for t, g in zip(ts, clipped.values()):
        np.testing.assert_allclose(g, t.grad.numpy(), rtol=1e-5)
    small = {"a": np.full(2, 0.1)}
    assert clip_grad_norm(small, 1.0)[0]["a"] is small["a"]


def test_plateau_matches_torch():
    losses = [1.0, 0.9, 0.9, 0.95, 0.91, 0.9, 0.89999, 0.8, 0.85, 0.86, 0.87, 0.88, 0.5, 0.6, 0.6, 0.6]
    ours = PlateauSchedule(lr=0.1, factor=0.5, patience=3, threshold=1e-4, min_lr=1e-3)
    p = torch.nn.Parameter(torch.zeros(1))
    opt = torch.optim.SGD([p], lr=0.1)
    ref = torch.optim.lr_scheduler.ReduceLROnPlateau(opt, factor=0.5, patience=2, threshold=1e-4, min_lr=1e-3)
    for v in losses:
        ours.step(v)
        ref.step(v)
        assert ours.lr == pytest.approx(opt.param_groups[0]["lr"], rel=1e-12)
    assert ours.events


def test_plateau_floor_and_nonfinite():
    s = PlateauSchedule(lr=1e-3, factor=0.1, patience=1, min_lr=5e-4)
    s.step(1.0)
    s.step(1.0)
    assert s.lr == 5e-4
    s.step(1.0)
    assert s.lr == 5e-4
    with pytest.raises(InvalidArgument):
        s.step(float("nan"))


# ------------------------------------------------------------ training


def test_mlp_fits_linear_teacher():
    rng = np.random.default_rng(10)
    A = rng.normal(size=(8, 8))
    x = rng.normal(size=(600, 8))
    y = x @ A + 100.0
    cfg = TrainConfig(max_epochs=120, input_noise=0.0, learning_rate=3e-3, seed=1)
    model, report = train_digitac(x, y, cfg, baselines=np.full(8, 100.0))
    pred = predict_digitac(model, x) - 100.0
    assert np.mean(np.abs(pred - y)) / np.mean(np.abs(y - y.mean(0))) < 0.1
    assert report["n_train"] + report["n_val"] == 600
    assert len(report["history"]) == 120


def test_zero_variance_channel_is_named():
    x = np.random.default_rng(0).normal(size=(20, 8))
    x[:, 2] = 1.0
    with pytest.raises(ConfigurationError, match="f3"):
        train_digitac(x, x, TrainConfig(max_epochs=1))


def test_mlp_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    model = init_mlp(rng)
    model.baselines = np.arange(8.0)
    save_mlp(model, tmp_path / "m.json")
    back = load_mlp(tmp_path / "m.json")
    f = rng.normal(size=(4, 8))
    np.testing.assert_array_equal(predict_digitac(back, f), predict_digitac(model, f))
    with pytest.raises(InvalidArgument):
        mlp_forward(model, np.zeros((2, 5)))
    with pytest.raises(InvalidArgument):
        mlp_forward(model, np.full((1, 8), np.nan))


def _toy_sequences(rng, n, cfg):
    y = np.arange(n) % 2
    t = np.linspace(0, 1, cfg.length)
    x = rng.normal(size=(n, cfg.length, cfg.channels)) * 0.3
    x[y == 1] += np.sin(2 * np.pi * t)[None, :, None]
    return x, y


def test_classifier_learns_and_round_trips(tmp_path):
    rng = np.random.default_rng(12)
    cfg = ClassifierConfig(length=16, d_model=16, n_blocks=1, n_heads=2, d_ff=16)
    x, y = _toy_sequences(rng, 80, cfg)
    model, report = train_classifier(x, y, ["a", "b"], TrainConfig(max_epochs=30, batch_size=16, seed=2), cfg)
    xt, yt = _toy_sequences(rng, 40, cfg)
    res = evaluate(model, xt, yt)
    assert res["accuracy"] >= 0.9
    assert np.sum(res["confusion_matrix"]) == 40
    save_classifier(model, tmp_path / "c.json")
    back = load_classifier(tmp_path / "c.json")
    np.testing.assert_array_equal(classifier_forward(back, xt), classifier_forward(model, xt))


def test_classifier_rejects_bad_inputs():
    cfg = ClassifierConfig(length=4, d_model=4, n_heads=2, d_ff=4, n_blocks=1)
    params = init_classifier(np.random.default_rng(0), cfg, 2)
    model = ClassifierParams(cfg, ["a", "b"], params)
    with pytest.raises(InvalidArgument):
        classifier_forward(model, np.zeros((5, 8)))
    with pytest.raises(ConfigurationError):
        ClassifierConfig(d_model=6, n_heads=4)
    with pytest.raises(ConfigurationError):
        train_classifier(np.zeros((4, 4, 8)), [0, 0, 0, 0], ["a", "b"], TrainConfig(max_epochs=1), cfg)
