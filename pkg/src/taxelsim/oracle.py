"""Synthetic stand-in for the physical taxel array and force/torque sensor.

Given a simulated indentation (total axial force and contact centroid over
time) the emulator produces what the hardware would log:

1. ideal pressure per taxel ``lambda_i + sensitivity * F(t) * w_i(t)``, where
   ``w_i`` are Gaussian weights of the contact centroid's xy distance to each
   taxel, normalized over the 8 taxels (one-hot on the nearest taxel when
   ``footprint_sigma == 0``);
2. a first-order lag with time constant ``lag_time_constant``;
3. a ``latency`` shift, resampling at ``sample_rate``, additive Gaussian noise
   and quantization to multiples of ``quantization``.

The force channel is the latency-shifted, resampled force plus noise.
The spatial model and the lag/latency/noise defaults are invented knobs that
make the alignment step non-trivial; only sensitivity, quantization and
sample rate describe the real device.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .errors import DegenerateInputError, InvalidArgument
from .mesh import N_TAXELS, taxel_grid
from .rng import make_rng

FINE_DT = 1e-3
DEFAULT_DIMS = (0.040, 0.024, 0.010)


@dataclass(frozen=True)
class OracleParams:
    sensitivity: float = 7.24  # kPa/N
    quantization: float = 0.01  # kPa
    sample_rate: float = 55.0  # Hz
    baselines: tuple = (0.0,) * N_TAXELS  # kPa
    footprint_sigma: float = 0.006  # m
    lag_time_constant: float = 0.05  # s
    latency: float = 0.08  # s
    noise_sigma: float = 0.02  # kPa
    force_noise_sigma: float = 0.05  # N
    seed: int = 0

    def __post_init__(self):
        if not (self.sensitivity > 0 and self.quantization > 0 and self.sample_rate > 0):
            raise InvalidArgument("sensitivity, quantization and sample_rate must be positive")
        for name in ("footprint_sigma", "lag_time_constant", "latency", "noise_sigma", "force_noise_sigma"):
            if getattr(self, name) < 0:
                raise InvalidArgument(f"{name} must be >= 0")
        if len(self.baselines) != N_TAXELS:
            raise InvalidArgument(f"need {N_TAXELS} baselines")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))


@dataclass
class TaxelTrace:
    times: np.ndarray
    samples: np.ndarray  # (n, 8) kPa
    rate: float

    def __len__(self):
        return len(self.times)


@dataclass
class ForceTrace:
    times: np.ndarray
    samples: np.ndarray  # (n,) N
    rate: float

    def __len__(self):
        return len(self.times)


@dataclass
class ContactHistory:
    """The parts of a simulated recording the emulator consumes."""

    times: np.ndarray
    force: np.ndarray
    contact_xy: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


def taxel_weights(contact_xy, taxel_xy, sigma):
    """Normalized share of the contact for each taxel, shape (n, 8)."""
    c = np.atleast_2d(np.asarray(contact_xy, float))
    d2 = ((c[:, None, :] - np.asarray(taxel_xy, float)[None, :, :2]) ** 2).sum(axis=2)
    if sigma == 0:
        w = np.zeros_like(d2)
        w[np.arange(len(d2)), np.argmin(d2, axis=1)] = 1.0
        return w
    logw = -(d2 - d2.min(axis=1, keepdims=True)) / (2 * sigma * sigma)
    w = np.exp(logw)
    return w / w.sum(axis=1, keepdims=True)


def quantize(x, q):
    return np.round(np.asarray(x) / q) * q


def emulate(recording, taxel_xy, params=OracleParams()):
    """Return ``(TaxelTrace, ForceTrace)`` for one simulated indentation."""
    ts = np.asarray(recording.times, float)
    if len(ts) == 0:
        raise InvalidArgument("empty recording")
    force = np.asarray(recording.force, float)
    cxy = np.asarray(recording.contact_xy, float)
    lam = np.asarray(params.baselines, float)

    end = ts[-1] + params.latency
    fine = np.arange(0.0, end + FINE_DT, FINE_DT)
    f_fine = np.interp(fine, ts, force)
    c_fine = np.column_stack([np.interp(fine, ts, cxy[:, 0]), np.interp(fine, ts, cxy[:, 1])])
    ideal = lam + params.sensitivity * f_fine[:, None] * taxel_weights(c_fine, taxel_xy, params.footprint_sigma)

    if params.lag_time_constant > 0:
        a = np.exp(-FINE_DT / params.lag_time_constant)
        lagged = lfilter([1 - a], [1, -a], ideal, axis=0, zi=a * ideal[:1])[0]
    else:
        lagged = ideal

    n = int(np.floor(end * params.sample_rate + 1e-9)) + 1
    t_out = np.arange(n) / params.sample_rate
    src = t_out - params.latency
    clean = np.column_stack([np.interp(src, fine, lagged[:, i]) for i in range(N_TAXELS)])

    rng = make_rng(params.seed)
    noisy = clean + rng.normal(0.0, 1.0, clean.shape) * params.noise_sigma
    taxels = quantize(noisy, params.quantization)
    f_real = np.interp(src, ts, force) + rng.normal(0.0, 1.0, n) * params.force_noise_sigma
    return (TaxelTrace(t_out, taxels, params.sample_rate), ForceTrace(t_out, f_real, params.sample_rate))


def static_contact(force, xy, duration, rate=100.0):
    """Constant force at a fixed contact point, for characterization runs."""
    n = int(round(duration * rate)) + 1
    t = np.arange(n) / rate
    return ContactHistory(t, np.full(n, float(force)), np.tile(np.asarray(xy, float), (n, 1)))


def linearity_probe(params=OracleParams(), forces=tuple(range(1, 11)), taxel_xy=None, taxel=0, duration=2.0):
    """Least-squares slope (kPa/N) of one taxel's steady reading against a static force.

    The contact is a point load directly over ``taxel`` (footprint -> 0), held for
    ``duration`` seconds; the reading is averaged over the second half of the hold.
    """
    forces = np.asarray(forces, float)
    if len(forces) < 2:
        raise InvalidArgument("linearity_probe needs at least two force levels")
    if np.ptp(forces) == 0:
        raise DegenerateInputError("force grid has zero spread; slope is undefined")
    if taxel_xy is None:
        taxel_xy = taxel_grid(DEFAULT_DIMS)
    taxel_xy = np.asarray(taxel_xy, float)
    point = replace(params, footprint_sigma=0.0)
    readings = []
    for k, f in enumerate(forces):
        hist = static_contact(f, taxel_xy[taxel, :2], duration)
        trace, _ = emulate(hist, taxel_xy, point.with_seed(params.seed + k))
        steady = trace.times >= duration / 2
        readings.append(trace.samples[steady, taxel].mean() - params.baselines[taxel])
    slope, _ = np.polyfit(forces, np.asarray(readings), 1)
    return float(slope)
