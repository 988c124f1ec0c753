"""Dynamic time warping between force traces and warping of taxel readings."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, InvalidArgument


@dataclass
class WarpPath:
    pairs: list  # [(sim index, real index), ...]
    total_cost: float

    def __len__(self):
        return len(self.pairs)

    def as_array(self):
        return np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)


def accumulated_cost(a, b, band=None):
    """DP table ``D[i, j] = |a_i - b_j| + min(D[i-1, j-1], D[i-1, j], D[i, j-1])``."""
    n, m = len(a), len(b)
    cost = np.abs(np.subtract.outer(a, b))
    if band is not None:
        # Sakoe-Chiba band around the rescaled diagonal
        i = np.arange(n)[:, None] * (m - 1) / max(n - 1, 1)
        cost = np.where(np.abs(np.arange(m)[None, :] - i) <= band, cost, np.inf)
    D = np.empty((n, m))
    D[0] = np.cumsum(cost[0])
    D[:, 0] = np.cumsum(cost[:, 0])
    for i in range(1, n):
        prev = D[i - 1]
        # best of diagonal and vertical predecessor for every column, then a left-to-right scan
        best = np.minimum(prev[:-1], prev[1:]) + cost[i, 1:]
        row = D[i]
        for j in range(1, m):
            left = row[j - 1] + cost[i, j]
            row[j] = best[j - 1] if best[j - 1] <= left else left
    return D


def dtw(a, b, band=None):
    """Align ``a`` (simulation) with ``b`` (real) under the |a_i - b_j| cost.

    Backtracking prefers the diagonal step, then (+1, 0), then (0, +1) on ties.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) == 0 or len(b) == 0:
        raise InvalidArgument("dtw needs two nonempty sequences")
    D = accumulated_cost(a, b, band)
    if not np.isfinite(D[-1, -1]):
        raise InvalidArgument("band too narrow: no admissible warping path")
    i, j = len(a) - 1, len(b) - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return WarpPath(path, float(D[-1, -1]))


def warp_taxels(taxels, path, sim_length, policy="mean"):
    """Resample real-timeline samples onto the simulation timeline along ``path``.

    Each simulation index takes the mean (or, with ``policy="first"``, the first)
    of the real samples paired with it.
    """
    samples = np.asarray(getattr(taxels, "samples", taxels), dtype=float)
    pairs = path.as_array()
    if pairs[:, 1].min() < 0 or pairs[:, 1].max() >= len(samples):
        raise InvalidArgument("warp path real index out of range of the taxel trace")
    if pairs[:, 0].min() != 0 or pairs[:, 0].max() != sim_length - 1:
        raise InvalidArgument(f"warp path sim index range does not cover sim_length={sim_length}")
    if policy not in ("mean", "first"):
        raise InvalidArgument(f"unknown many-to-one policy {policy!r}")
    flat = samples.reshape(len(samples), -1)
    out = np.zeros((sim_length, flat.shape[1]))
    if policy == "first":
        first = np.full(sim_length, -1)
        for i, j in pairs[::-1]:
            first[i] = j
        out = flat[first]
    else:
        counts = np.bincount(pairs[:, 0], minlength=sim_length).astype(float)
        for c in range(flat.shape[1]):
            out[:, c] = np.bincount(pairs[:, 0], weights=flat[pairs[:, 1], c], minlength=sim_length)
        out /= counts[:, None]
        # mean of identical values must reproduce them exactly
        lo, hi = _group_extrema(pairs, flat, sim_length)
        out = np.clip(out, lo, hi)
    return out.reshape((sim_length,) + samples.shape[1:])


def _group_extrema(pairs, flat, sim_length):
    lo = np.full((sim_length, flat.shape[1]), np.inf)
    hi = np.full((sim_length, flat.shape[1]), -np.inf)
    np.minimum.at(lo, pairs[:, 0], flat[pairs[:, 1]])
    np.maximum.at(hi, pairs[:, 0], flat[pairs[:, 1]])
    return lo, hi


def normalize_for_dtw(trace, mode="none"):
    x = np.asarray(trace, dtype=float)
    if mode == "none":
        return x.copy()
    if mode != "zscore":
        raise InvalidArgument(f"unknown normalization mode {mode!r}")
    std = x.std()
    if std == 0:
        raise DegenerateInputError("zscore normalization of a constant trace")
    return (x - x.mean()) / std
