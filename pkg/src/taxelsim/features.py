"""Distance-weighted stress aggregation over the taxel clusters.

For taxel ``i`` with reference point ``x_i`` and cluster rows ``k``:

    F_i = mean_k( s_k / max(|p_k - x_i|, epsilon_floor) )

where ``p_k`` and ``s_k`` are a tetrahedron centroid and its Von Mises stress
(one row of a recorded frame).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidArgument
from .mesh import N_TAXELS, _radius_clusters

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class StressClusters:
    rows: tuple  # 8 arrays of frame-row (tet) indices
    taxel_positions: np.ndarray  # (8, 3)

    def __post_init__(self):
        if len(self.rows) != N_TAXELS:
            raise ConfigurationError(f"need {N_TAXELS} clusters, got {len(self.rows)}")
        for i, r in enumerate(self.rows):
            if len(r) == 0:
                raise ConfigurationError(f"taxel {i}: empty stress cluster")


def centroid_clusters(mesh, taxel_positions, cluster_radius, top_fraction=0.3):
    """Tets whose centroid lies within ``cluster_radius`` (xy) of a taxel and in the top
    ``top_fraction`` of the block height; a tet belongs to its nearest such taxel only."""
    taxel_positions = np.asarray(taxel_positions, float)
    c = mesh.centroids()
    lo, hi = mesh.bounds
    near_top = np.flatnonzero(c[:, 2] >= hi[2] - top_fraction * (hi[2] - lo[2]))
    rows = _radius_clusters(c[near_top, :2], taxel_positions[:, :2], cluster_radius, exclusive=True)
    return StressClusters(tuple(near_top[r] for r in rows), taxel_positions)


def aggregate_stress(frame, clusters, epsilon_floor=DEFAULT_EPSILON):
    """Eight features (Pa/m) from one frame of rows ``(cx, cy, cz, s)``."""
    frame = np.asarray(frame, dtype=float)
    out = np.empty(N_TAXELS)
    for i, rows in enumerate(clusters.rows):
        if len(rows) == 0:
            raise ConfigurationError(f"taxel {i}: empty stress cluster")
        sub = frame[rows]
        dist = np.linalg.norm(sub[:, :3] - clusters.taxel_positions[i], axis=1)
        out[i] = np.mean(sub[:, 3] / np.maximum(dist, epsilon_floor))
    return out


def aggregate_frames(frames, clusters, epsilon_floor=DEFAULT_EPSILON):
    """``aggregate_stress`` over a (T, n, 4) stack, returned as (T, 8)."""
    frames = np.asarray(frames, dtype=float)
    out = np.empty((len(frames), N_TAXELS))
    for i, rows in enumerate(clusters.rows):
        sub = frames[:, rows]
        dist = np.linalg.norm(sub[..., :3] - clusters.taxel_positions[i], axis=2)
        out[:, i] = np.mean(sub[..., 3] / np.maximum(dist, epsilon_floor), axis=1)
    return out


def build_pairs(recording, warped_taxels, clusters, baselines=np.zeros(N_TAXELS), epsilon_floor=DEFAULT_EPSILON):
    """Per frame: input = aggregated stress features, target = warped reading minus baseline."""
    warped = np.asarray(warped_taxels, dtype=float)
    if len(warped) != len(recording.frames):
        raise InvalidArgument(f"{len(warped)} warped samples for {len(recording.frames)} frames")
    inputs = aggregate_frames(recording.frames, clusters, epsilon_floor)
    targets = warped - np.asarray(baselines, float)
    return np.asarray(recording.times, float).copy(), inputs, targets
