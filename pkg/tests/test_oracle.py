from dataclasses import replace

import numpy as np
import pytest

from taxelsim import mesh as meshlib, oracle
from taxelsim.errors import DegenerateInputError, InvalidArgument
from taxelsim.oracle import ContactHistory, OracleParams

from conftest import DIMS

TAXELS = meshlib.taxel_grid(DIMS)
QUIET = OracleParams(noise_sigma=0.0, force_noise_sigma=0.0, lag_time_constant=0.0, latency=0.0)


def step_history(force=2.0, t_on=0.5, duration=2.0, xy=None, rate=200.0):
    t = np.arange(int(duration * rate) + 1) / rate
    f = np.where(t >= t_on, force, 0.0)
    xy = TAXELS[2, :2] if xy is None else xy
    return ContactHistory(t, f, np.tile(xy, (len(t), 1)))


def test_weights_normalized_and_peaked():
    rng = np.random.default_rng(0)
    pts = rng.uniform([0, 0], DIMS[:2], size=(50, 2))
    w = oracle.taxel_weights(pts, TAXELS, 0.006)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, rtol=1e-12)
    d = np.linalg.norm(pts[:, None] - TAXELS[None, :, :2], axis=2)
    np.testing.assert_array_equal(np.argmax(w, axis=1), np.argmin(d, axis=1))
    one_hot = oracle.taxel_weights(pts, TAXELS, 0.0)
    np.testing.assert_array_equal(one_hot, np.eye(8)[np.argmin(d, axis=1)])


def test_gaussian_weight_ratio():
    # two taxels at distances d1, d2: w1/w2 = exp(-(d1^2 - d2^2) / (2 sigma^2))
    p = TAXELS[0, :2] + [0.001, 0.0]
    w = oracle.taxel_weights(p, TAXELS, 0.005)[0]
    d = np.linalg.norm(TAXELS[:, :2] - p, axis=1)
    assert w[0] / w[1] == pytest.approx(np.exp(-(d[0] ** 2 - d[1] ** 2) / (2 * 0.005**2)), rel=1e-12)


def test_output_rate_and_quantization():
    hist = step_history()
    taxels, force = oracle.emulate(hist, TAXELS, OracleParams(seed=4))
    np.testing.assert_allclose(np.diff(taxels.times), 1 / 55, rtol=1e-12)
    assert taxels.rate == 55.0 and force.rate == 55.0
    q = taxels.samples / 0.01
    np.testing.assert_allclose(q, np.round(q), atol=1e-9)
    assert taxels.times[-1] <= hist.times[-1] + 0.08 + 1e-12
    assert len(taxels) == len(force)


def test_steady_reading_is_sensitivity_times_force_share():
    lam = tuple(np.linspace(100.0, 101.4, 8))
    params = replace(QUIET, baselines=lam)
    taxels, force = oracle.emulate(step_history(force=2.0), TAXELS, params)
    late = taxels.times > 1.0
    w = oracle.taxel_weights(TAXELS[2, :2], TAXELS, params.footprint_sigma)[0]
    expect = oracle.quantize(np.asarray(lam) + 7.24 * 2.0 * w, 0.01)
    np.testing.assert_allclose(taxels.samples[late], np.broadcast_to(expect, taxels.samples[late].shape), atol=1e-9)
    np.testing.assert_allclose(force.samples[late], 2.0)
    # before contact every taxel reads its baseline
    np.testing.assert_allclose(taxels.samples[taxels.times < 0.49], np.broadcast_to(oracle.quantize(lam, 0.01), (
        np.sum(taxels.times < 0.49), 8)), atol=1e-9)


def test_first_order_lag():
    # after one time constant the response covers 1 - 1/e of the step
    tau = 0.1
    params = replace(QUIET, lag_time_constant=tau, quantization=1e-9, footprint_sigma=0.0)
    taxels, _ = oracle.emulate(step_history(force=1.0, t_on=0.5, rate=1000.0), TAXELS, params)
    i = np.argmin(np.abs(taxels.times - (0.5 + tau)))
    dt = taxels.times[i] - 0.5
    assert taxels.samples[i, 2] == pytest.approx(7.24 * (1 - np.exp(-dt / tau)), rel=2e-2)


def test_latency_delays_the_signal():
    params = replace(QUIET, latency=0.2, footprint_sigma=0.0)
    taxels, force = oracle.emulate(step_history(force=1.0, t_on=0.5), TAXELS, params)
    first = taxels.times[np.argmax(taxels.samples[:, 2] > 1.0)]
    assert 0.7 - 1 / 55 < first <= 0.7 + 1 / 55
    assert force.times[np.argmax(force.samples > 0.5)] == pytest.approx(first, abs=1 / 55)


def test_noise_is_seeded():
    hist = step_history()
    a, fa = oracle.emulate(hist, TAXELS, OracleParams(seed=1))
    b, fb = oracle.emulate(hist, TAXELS, OracleParams(seed=1))
    c, _ = oracle.emulate(hist, TAXELS, OracleParams(seed=2))
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(fa.samples, fb.samples)
    assert not np.array_equal(a.samples, c.samples)


def test_noise_level():
    params = replace(QUIET, noise_sigma=0.5, quantization=1e-6, seed=9)
    taxels, _ = oracle.emulate(step_history(force=0.0, duration=40.0, rate=20.0), TAXELS, params)
    assert taxels.samples.std() == pytest.approx(0.5, rel=0.05)


def test_linearity_probe_recovers_sensitivity():
    assert oracle.linearity_probe(OracleParams(seed=5)) == pytest.approx(7.24, rel=5e-3)
    assert oracle.linearity_probe(OracleParams(sensitivity=3.0)) == pytest.approx(3.0, rel=5e-3)


def test_linearity_probe_needs_spread():
    with pytest.raises(DegenerateInputError):
        oracle.linearity_probe(forces=(2.0, 2.0, 2.0))


@pytest.mark.parametrize("kw", [{"sensitivity": 0}, {"noise_sigma": -1}, {"baselines": (0.0,) * 7}])
def test_invalid_params(kw):
    with pytest.raises(InvalidArgument):
        OracleParams(**kw)
