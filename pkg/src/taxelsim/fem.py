"""Small-strain linear elasticity on constant-strain tetrahedra.

DOF numbering is node-major: DOF ``3 * node + axis``. Strains and stresses use
Voigt order ``(xx, yy, zz, yz, xz, xy)`` with engineering shear strains.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateElementError,
    InvalidArgument,
    SingularSystemError,
    SolverFailure,
)

MIN_VOLUME = 1e-18
AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class MaterialParams:
    young_modulus: float = 100e3
    poisson_ratio: float = 0.45

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise InvalidArgument(f"young_modulus must be > 0, got {self.young_modulus}")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise InvalidArgument(f"poisson_ratio must lie in (-1, 0.5), got {self.poisson_ratio}")

    def elasticity_matrix(self):
        E, nu = self.young_modulus, self.poisson_ratio
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        C = np.zeros((6, 6))
        C[:3, :3] = lam
        C[np.arange(3), np.arange(3)] += 2 * mu
        C[np.arange(3, 6), np.arange(3, 6)] = mu
        return C


class ConstraintSet:
    """Prescribed displacements ``(node, axis, value)``; at most one per DOF."""

    def __init__(self, nodes=(), axes=(), values=()):
        nodes = np.asarray(nodes, dtype=np.int64).ravel()
        axes = np.array([AXES.get(a, a) for a in axes] if len(axes) else [], dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (len(nodes) == len(axes) == len(values)):
            raise InvalidArgument("nodes, axes and values must have equal length")
        if np.any((axes < 0) | (axes > 2)):
            raise InvalidArgument("axis must be one of x, y, z")
        dofs = 3 * nodes + axes
        if len(np.unique(dofs)) != len(dofs):
            raise InvalidArgument("duplicate (node, axis) constraint")
        order = np.argsort(dofs, kind="stable")
        self.dofs = dofs[order]
        self.values = values[order]

    @classmethod
    def fix_nodes(cls, nodes, values=None):
        """Constrain all three axes of each node (to zero unless ``values`` (n, 3) given)."""
        nodes = np.asarray(nodes, dtype=np.int64)
        vals = np.zeros((len(nodes), 3)) if values is None else np.asarray(values, dtype=float)
        return cls(np.repeat(nodes, 3), np.tile([0, 1, 2], len(nodes)), vals.ravel())

    @classmethod
    def concat(cls, *sets):
        dofs = np.concatenate([s.dofs for s in sets]) if sets else np.zeros(0, np.int64)
        values = np.concatenate([s.values for s in sets]) if sets else np.zeros(0)
        return cls(dofs // 3, dofs % 3, values)

    def __len__(self):
        return len(self.dofs)

    @property
    def nodes(self):
        return self.dofs // 3


@dataclass
class FemSolution:
    displacements: np.ndarray  # (nv, 3)
    reaction_dofs: np.ndarray
    reactions: np.ndarray  # N, one per constrained DOF
    solver_iterations: int
    residual: float

    def reaction_at(self, dofs):
        idx = np.searchsorted(self.reaction_dofs, dofs)
        ok = (idx < len(self.reaction_dofs)) & (self.reaction_dofs[np.minimum(idx, len(self.reaction_dofs) - 1)] == dofs)
        if not np.all(ok):
            raise InvalidArgument("constraint not present in solution")
        return self.reactions[idx]


@dataclass
class StressField:
    stress: np.ndarray  # (nt, 3, 3) Pa
    von_mises: np.ndarray  # (nt,) Pa
    centroids: np.ndarray  # (nt, 3) m


def shape_gradients(points):
    """Gradients of the 4 linear shape functions for each tet in ``points`` (nt, 4, 3).

    Returns ``(grads (nt, 4, 3), signed volumes (nt,))``.
    """
    points = np.asarray(points, dtype=float)
    edges = points[:, 1:] - points[:, :1]  # (nt, 3, 3) rows = edge vectors
    vol = np.linalg.det(edges) / 6.0
    bad = np.flatnonzero(np.abs(vol) <= MIN_VOLUME)
    if len(bad):
        raise DegenerateElementError(int(bad[0]), float(vol[bad[0]]))
    inv = np.linalg.inv(edges)  # columns: gradients of barycentrics 1..3
    g = np.transpose(inv, (0, 2, 1))
    grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
    return grads, vol


def strain_displacement(grads):
    """Voigt B matrices (nt, 6, 12) from shape gradients."""
    nt = grads.shape[0]
    B = np.zeros((nt, 6, 12))
    gx, gy, gz = grads[:, :, 0], grads[:, :, 1], grads[:, :, 2]
    B[:, 0, 0::3] = gx
    B[:, 1, 1::3] = gy
    B[:, 2, 2::3] = gz
    B[:, 3, 1::3] = gz
    B[:, 3, 2::3] = gy
    B[:, 4, 0::3] = gz
    B[:, 4, 2::3] = gx
    B[:, 5, 0::3] = gy
    B[:, 5, 1::3] = gx
    return B


def element_stiffness(tet_vertices, material):
    """12x12 stiffness ``V B^T C B`` of one constant-strain tetrahedron."""
    pts = np.asarray(tet_vertices, dtype=float).reshape(1, 4, 3)
    grads, vol = shape_gradients(pts)
    B = strain_displacement(grads)[0]
    K = abs(vol[0]) * B.T @ material.elasticity_matrix() @ B
    return 0.5 * (K + K.T)


def element_stiffnesses(mesh, material):
    try:
        grads, vol = shape_gradients(mesh.vertices[mesh.tets])
    except DegenerateElementError:
        vol = mesh.signed_volumes()
        bad = int(np.flatnonzero(np.abs(vol) <= MIN_VOLUME)[0])
        raise DegenerateElementError(bad, float(vol[bad])) from None
    B = strain_displacement(grads)
    C = material.elasticity_matrix()
    K = np.abs(vol)[:, None, None] * np.einsum("eki,kl,elj->eij", B, C, B)
    return 0.5 * (K + np.transpose(K, (0, 2, 1)))


def element_dofs(tets):
    return (3 * tets[:, :, None] + np.arange(3)).reshape(len(tets), 12)


def assemble(mesh, material):
    """Global sparse stiffness (CSR). Duplicate entries are summed in element order."""
    Ke = element_stiffnesses(mesh, material)
    dofs = element_dofs(mesh.tets)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    n = 3 * mesh.n_vertices
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K


def pcg(A, b, tol=1e-8, max_iterations=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, iterations, relative residual ||b - Ax|| / ||b||)``.
    """
    n = len(b)
    if max_iterations is None:
        max_iterations = 20 * n
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise SingularSystemError("stiffness has non-positive diagonal entries on free DOFs")
    minv = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = minv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / bnorm
    it = 0
    while res > tol:
        if it >= max_iterations:
            raise SolverFailure(f"CG did not converge in {it} iterations (residual {res:.3e})", res)
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise SingularSystemError("stiffness is not positive definite on the free DOFs")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
        res = np.linalg.norm(r) / bnorm
        it += 1
    return x, it, res


def _check_rigid_modes(constraints, vertices):
    nodes, counts = np.unique(constraints.nodes, return_counts=True)
    full = nodes[counts == 3]
    if len(full) >= 3 and vertices is not None:
        pts = vertices[full] - vertices[full[0]]
        scale = max(np.abs(pts).max(), 1e-300)
        if np.linalg.matrix_rank(pts / scale, tol=1e-9) >= 2:
            return
    elif len(full) >= 3:
        return
    raise SingularSystemError(
        "constraints do not remove rigid-body modes (need >= 3 non-collinear fully fixed nodes)"
    )


def solve(stiffness, constraints, tolerance=1e-8, max_iterations=None, vertices=None):
    """Solve ``K u = 0`` on free DOFs with prescribed displacements on constrained DOFs."""
    K = stiffness.tocsr()
    n = K.shape[0]
    _check_rigid_modes(constraints, vertices)
    if len(constraints) and constraints.dofs.max() >= n:
        raise InvalidArgument("constraint DOF out of range")
    c = constraints.dofs
    is_free = np.ones(n, dtype=bool)
    is_free[c] = False
    f = np.flatnonzero(is_free)
    u = np.zeros(n)
    u[c] = constraints.values
    if max_iterations is None:
        max_iterations = 20 * n

    Kfc = K[f][:, c]
    rhs = -(Kfc @ constraints.values)
    iterations, residual = 0, 0.0
    if np.any(rhs != 0):
        Kff = K[f][:, f]
        uf, iterations, residual = pcg(Kff, rhs, tolerance, max_iterations)
        u[f] = uf
    reactions = K[c] @ u
    return FemSolution(u.reshape(-1, 3), c.copy(), reactions, iterations, residual)


def von_mises(stress):
    """Von Mises scalar of symmetric stress tensors (..., 3, 3)."""
    s = np.asarray(stress, dtype=float)
    s11, s22, s33 = s[..., 0, 0], s[..., 1, 1], s[..., 2, 2]
    s12, s23, s31 = s[..., 0, 1], s[..., 1, 2], s[..., 2, 0]
    j2 = 0.5 * ((s11 - s22) ** 2 + (s22 - s33) ** 2 + (s33 - s11) ** 2) + 3 * (s12**2 + s23**2 + s31**2)
    return np.sqrt(j2)


def voigt_to_tensor(v):
    t = np.empty(v.shape[:-1] + (3, 3))
    t[..., 0, 0], t[..., 1, 1], t[..., 2, 2] = v[..., 0], v[..., 1], v[..., 2]
    t[..., 1, 2] = t[..., 2, 1] = v[..., 3]
    t[..., 0, 2] = t[..., 2, 0] = v[..., 4]
    t[..., 0, 1] = t[..., 1, 0] = v[..., 5]
    return t


class StressRecovery:
    """Precomputed ``C B`` per tet so stress recovery is a single contraction.

    ``rows`` restricts recovery to a subset of tets (results are in ``rows`` order).
    """

    def __init__(self, mesh, material, rows=None):
        tets = mesh.tets if rows is None else mesh.tets[np.asarray(rows)]
        grads, _ = shape_gradients(mesh.vertices[tets])
        self.CB = np.einsum("kl,elj->ekj", material.elasticity_matrix(), strain_displacement(grads))
        self.dofs = element_dofs(tets)
        self.tets = tets
        self.vertices = mesh.vertices

    def __call__(self, displacements):
        u = np.asarray(displacements, dtype=float).ravel()
        if len(u) != self.vertices.size:
            raise InvalidArgument(f"displacement length {len(u)} != 3 * n_vertices ({self.vertices.size})")
        sigma = voigt_to_tensor(np.einsum("ekj,ej->ek", self.CB, u[self.dofs]))
        moved = self.vertices[self.tets] + u.reshape(-1, 3)[self.tets]
        return StressField(sigma, von_mises(sigma), moved.mean(axis=1))


def compute_stress(mesh, material, displacements):
    """Per-tet stress tensor, Von Mises scalar and (displaced) centroid."""
    return StressRecovery(mesh, material)(displacements)


def axial_contact_force(solution, contact_constraints):
    """Total z force the indenter exerts on the elastomer (positive = pushing down)."""
    zdofs = contact_constraints.dofs[contact_constraints.dofs % 3 == 2]
    if len(zdofs) == 0:
        return 0.0
    return float(-np.sum(solution.reaction_at(zdofs)))
