"""Structured tetrahedral meshing of the elastomer block.

The block spans ``[0, Lx] x [0, Ly] x [0, Lz]``; ``z = 0`` is the bottom
(bonded to the rigid shell) and ``z = Lz`` is the exposed contact surface.
"""

from dataclasses import dataclass
from itertools import permutations
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, InvalidArgument

PLANE_TOL = 1e-9
N_TAXELS = 8


@dataclass(frozen=True)
class TetMesh:
    vertices: np.ndarray  # (nv, 3) float64, meters
    tets: np.ndarray  # (nt, 4) int64
    surface_faces: np.ndarray  # (nf, 3) int64, outward oriented

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @property
    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def signed_volumes(self):
        return signed_volumes(self.vertices, self.tets)

    def centroids(self):
        return self.vertices[self.tets].mean(axis=1)


@dataclass(frozen=True)
class NodeSets:
    fixed: np.ndarray
    top_surface: np.ndarray
    taxel_clusters: tuple
    taxel_positions: np.ndarray  # (8, 3)


def signed_volumes(vertices, tets):
    p = vertices[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def _kuhn_template():
    # Six tets per unit cube, each a monotone corner path from (0,0,0) to (1,1,1).
    # Corner index = bx + 2*by + 4*bz.
    tets = []
    for perm in permutations(range(3)):
        corner = [0, 0, 0]
        path = [0]
        for axis in perm:
            corner[axis] = 1
            path.append(corner[0] + 2 * corner[1] + 4 * corner[2])
        bits = np.array([[(c >> k) & 1 for k in range(3)] for c in path], dtype=float)
        vol = np.linalg.det(bits[1:] - bits[0])
        if vol < 0:
            path[1], path[2] = path[2], path[1]
        tets.append(path)
    return np.array(tets, dtype=np.int64)


KUHN_TETS = _kuhn_template()


def generate_box_mesh(dims, resolution):
    """Kuhn-split a structured hex grid over the box ``dims`` into tetrahedra.

    Vertex ``(i, j, k)`` of the lattice gets index ``i + (nx+1) * (j + (ny+1) * k)``,
    so the ordering depends only on the lattice.
    """
    dims = tuple(float(d) for d in dims)
    resolution = tuple(int(n) for n in resolution)
    if len(dims) != 3 or len(resolution) != 3:
        raise InvalidArgument("dims and resolution must have three entries")
    if any(not np.isfinite(d) or d <= 0 for d in dims):
        raise InvalidArgument(f"block dimensions must be positive, got {dims}")
    if any(n < 1 for n in resolution):
        raise InvalidArgument(f"resolution must be >= 1 per axis, got {resolution}")

    nx, ny, nz = resolution
    xs = np.linspace(0.0, dims[0], nx + 1)
    ys = np.linspace(0.0, dims[1], ny + 1)
    zs = np.linspace(0.0, dims[2], nz + 1)
    zz, yy, xx = np.meshgrid(zs, ys, xs, indexing="ij")
    vertices = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    corners = np.stack(
        [vid(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) for c in range(8)], axis=1
    )
    tets = corners[:, KUHN_TETS].reshape(-1, 4)
    return TetMesh(vertices, tets, boundary_faces(vertices, tets))


def boundary_faces(vertices, tets):
    """Faces owned by exactly one tet, oriented with outward normals."""
    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    faces = tets[:, local].reshape(-1, 3)
    opposite = tets[:, [0, 1, 2, 3]].reshape(-1)
    key = np.sort(faces, axis=1)
    _, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    once = counts[inverse.ravel()] == 1
    faces, opposite = faces[once], opposite[once]

    p = vertices[faces]
    normal = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    inward = np.einsum("ij,ij->i", normal, vertices[opposite] - p[:, 0]) > 0
    faces[inward] = faces[inward][:, [0, 2, 1]]
    order = np.lexsort(np.sort(faces, axis=1).T[::-1])
    return faces[order]


def classify_nodes(mesh, taxel_positions, cluster_radius, exclusive=True):
    """Fixed (bottom), top-surface and per-taxel node sets.

    A cluster holds the top-surface nodes within ``cluster_radius`` (xy distance)
    of its taxel. With ``exclusive`` a node inside several balls is kept only by the
    nearest taxel (lowest index on exact ties) so clusters stay disjoint.
    """
    taxel_positions = np.asarray(taxel_positions, dtype=float)
    if taxel_positions.shape != (N_TAXELS, 3):
        raise InvalidArgument(f"expected {N_TAXELS} taxel positions, got shape {taxel_positions.shape}")
    if not cluster_radius > 0:
        raise InvalidArgument("cluster_radius must be positive")
    lo, hi = mesh.bounds
    xy = taxel_positions[:, :2]
    if np.any(xy < lo[:2] - PLANE_TOL) or np.any(xy > hi[:2] + PLANE_TOL):
        raise InvalidArgument("taxel positions must lie within the block footprint")

    z = mesh.vertices[:, 2]
    fixed = np.flatnonzero(np.abs(z - lo[2]) <= PLANE_TOL)
    top = np.flatnonzero(np.abs(z - hi[2]) <= PLANE_TOL)
    clusters = _radius_clusters(mesh.vertices[top, :2], xy, cluster_radius, exclusive)
    clusters = tuple(top[c] for c in clusters)
    for i, c in enumerate(clusters):
        if len(c) == 0:
            raise ConfigurationError(
                f"taxel {i}: no top-surface node within cluster_radius={cluster_radius} m"
            )
    return NodeSets(fixed, top, clusters, taxel_positions)


def _radius_clusters(points_xy, taxel_xy, radius, exclusive):
    d = np.linalg.norm(points_xy[:, None, :] - taxel_xy[None, :, :], axis=2)
    inside = d <= radius
    if exclusive:
        nearest = np.argmin(np.where(inside, d, np.inf), axis=1)
        owned = np.zeros_like(inside)
        rows = np.flatnonzero(inside.any(axis=1))
        owned[rows, nearest[rows]] = True
        inside = owned
    return [np.flatnonzero(inside[:, i]) for i in range(taxel_xy.shape[0])]


def taxel_grid(dims, pitch=0.008, depth=0.002, layout=(4, 2)):
    """Taxel reference points on a ``layout`` grid centered in the block footprint."""
    nx, ny = layout
    if nx * ny != N_TAXELS:
        raise InvalidArgument(f"layout {layout} does not give {N_TAXELS} taxels")
    cx, cy = dims[0] / 2.0, dims[1] / 2.0
    xs = cx + pitch * (np.arange(nx) - (nx - 1) / 2.0)
    ys = cy + pitch * (np.arange(ny) - (ny - 1) / 2.0)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    z = np.full(N_TAXELS, dims[2] - depth)
    return np.column_stack([gx.ravel(), gy.ravel(), z])


def write_mesh(mesh, path):
    lines = [f"TETMESH v1 {mesh.n_vertices} {mesh.n_tets}"]
    lines += ["%.17g %.17g %.17g" % tuple(v) for v in mesh.vertices]
    lines += ["%d %d %d %d" % tuple(t) for t in mesh.tets]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    text = Path(path).read_text().splitlines()
    header = text[0].split()
    if len(header) != 4 or header[0] != "TETMESH":
        raise InvalidArgument(f"{path}: not a TETMESH file")
    if header[1] != "v1":
        from .errors import UnsupportedVersionError

        raise UnsupportedVersionError(f"{path}: unsupported mesh version {header[1]}")
    nv, nt = int(header[2]), int(header[3])
    if len(text) < 1 + nv + nt:
        raise InvalidArgument(f"{path}: truncated mesh file")
    vertices = np.array([[float(x) for x in line.split()] for line in text[1 : 1 + nv]]).reshape(nv, 3)
    tets = np.array(
        [[int(x) for x in line.split()] for line in text[1 + nv : 1 + nv + nt]], dtype=np.int64
    ).reshape(nt, 4)
    if tets.size and (tets.min() < 0 or tets.max() >= nv):
        raise InvalidArgument(f"{path}: tet index out of range")
    return TetMesh(vertices, tets, boundary_faces(vertices, tets))
