"""Indenters, indentation trajectories and the quasi-static simulation driver."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import fem
from .errors import InvalidArgument, SolverFailure, TaxelSimError
from .rng import derive_seed

log = logging.getLogger(__name__)

SHAPES = ("sphere", "flat_round", "flat_square", "cross", "ring", "triangle", "hexagon")
SHAPE_DIMS = {
    "sphere": ("radius",),
    "flat_round": ("radius",),
    "flat_square": ("side",),
    "cross": ("arm_length", "arm_width"),
    "ring": ("outer_radius", "inner_radius"),
    "triangle": ("circumradius",),
    "hexagon": ("circumradius",),
}
PROFILES = ("press_hold_release", "ramp", "multi_press")
MAX_DEPTH_FRACTION = 0.5


@dataclass(frozen=True)
class Indenter:
    shape: str
    dims: dict
    offset: tuple = (0.0, 0.0)
    yaw: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise InvalidArgument(f"unknown indenter shape {self.shape!r}")
        missing = [k for k in SHAPE_DIMS[self.shape] if k not in self.dims]
        if missing:
            raise InvalidArgument(f"{self.shape} indenter needs dims {missing}")
        if any(not float(self.dims[k]) > 0 for k in SHAPE_DIMS[self.shape]):
            raise InvalidArgument(f"{self.shape} indenter dimensions must be positive")
        if self.shape == "ring" and self.dims["inner_radius"] >= self.dims["outer_radius"]:
            raise InvalidArgument("ring inner_radius must be smaller than outer_radius")

    def with_pose(self, offset, yaw):
        return replace(self, offset=(float(offset[0]), float(offset[1])), yaw=float(yaw))

    @property
    def bounding_radius(self):
        d = self.dims
        if self.shape in ("sphere", "flat_round"):
            return d["radius"]
        if self.shape == "flat_square":
            return d["side"] / np.sqrt(2)
        if self.shape == "cross":
            return np.hypot(d["arm_length"] / 2, d["arm_width"] / 2)
        if self.shape == "ring":
            return d["outer_radius"]
        return d["circumradius"]

    def heights(self, x, y):
        """Lower-surface height above the indenter tip at (x, y); NaN outside the footprint."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        dx, dy = x - self.offset[0], y - self.offset[1]
        lx, ly = c * dx + s * dy, -s * dx + c * dy
        rho = np.hypot(lx, ly)
        d = self.dims
        h = np.zeros(np.broadcast(lx, ly).shape)
        if self.shape == "sphere":
            R = d["radius"]
            inside = rho <= R
            h = np.where(inside, R - np.sqrt(np.maximum(R * R - rho * rho, 0.0)), 0.0)
        elif self.shape == "flat_round":
            inside = rho <= d["radius"]
        elif self.shape == "flat_square":
            half = d["side"] / 2
            inside = (np.abs(lx) <= half) & (np.abs(ly) <= half)
        elif self.shape == "cross":
            a, w = d["arm_length"] / 2, d["arm_width"] / 2
            inside = ((np.abs(lx) <= a) & (np.abs(ly) <= w)) | ((np.abs(lx) <= w) & (np.abs(ly) <= a))
        elif self.shape == "ring":
            inside = (rho <= d["outer_radius"]) & (rho >= d["inner_radius"])
        elif self.shape == "triangle":
            inside = _inside_polygon(lx, ly, d["circumradius"] / 2, np.deg2rad([270, 30, 150]), one_sided=True)
        else:
            apothem = d["circumradius"] * np.cos(np.pi / 6)
            inside = _inside_polygon(lx, ly, apothem, np.deg2rad([30, 90, 150]), one_sided=False)
        return np.where(inside, h, np.nan)

    def to_dict(self):
        return {"shape": self.shape, "dims": dict(self.dims), "offset": list(self.offset), "yaw": self.yaw}

    @classmethod
    def from_dict(cls, d):
        return cls(d["shape"], dict(d["dims"]), tuple(d.get("offset", (0.0, 0.0))), float(d.get("yaw", 0.0)))


def _inside_polygon(lx, ly, apothem, normal_angles, one_sided):
    ok = np.ones(np.broadcast(lx, ly).shape, dtype=bool)
    for a in normal_angles:
        proj = lx * np.cos(a) + ly * np.sin(a)
        ok &= (proj <= apothem + 1e-15) if one_sided else (np.abs(proj) <= apothem + 1e-15)
    return ok


def indenter_surface_height(indenter, x, y):
    """Height of the indenter's lower surface above its tip at (x, y), or None outside."""
    h = float(indenter.heights(x, y))
    return None if np.isnan(h) else h


@dataclass
class Trajectory:
    times: np.ndarray
    depth: np.ndarray
    xy: np.ndarray  # (n, 2) indenter offset per sample
    yaw: np.ndarray
    frame_rate: float
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) < 1:
            raise InvalidArgument("trajectory needs at least one sample")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidArgument("trajectory times must be strictly increasing")
        if np.any(self.depth < 0) or self.depth[0] != 0:
            raise InvalidArgument("trajectory depth must be >= 0 and start at 0")

    def __len__(self):
        return len(self.times)


def _knots(profile, depth_max, speed, hold, presses):
    ramp = depth_max / speed
    if profile == "press_hold_release":
        return [0, ramp, ramp + hold, 2 * ramp + hold], [0, depth_max, depth_max, 0]
    if profile == "ramp":
        return [0, ramp, 2 * ramp, 2 * ramp + hold], [0, depth_max, 0, 0]
    t, d, t0 = [0.0], [0.0], 0.0
    for k in range(1, presses + 1):
        level = depth_max * k / presses
        up = level / speed
        t += [t0 + up, t0 + up + hold, t0 + 2 * up + hold]
        d += [level, level, 0.0]
        t0 += 2 * up + hold
    return t, d


def make_trajectory(profile, depth_max, speed, hold, frame_rate, offset=(0.0, 0.0), yaw=0.0, presses=3):
    """Piecewise-linear depth profile sampled at ``frame_rate`` from t = 0.

    ``press_hold_release`` goes down at ``speed``, holds, and comes back up.
    ``ramp`` goes down and straight back up, then rests at zero for ``hold``.
    ``multi_press`` repeats press-hold-release at ``presses`` increasing levels.
    """
    if profile not in PROFILES:
        raise InvalidArgument(f"unknown trajectory profile {profile!r}")
    if not (depth_max > 0 and speed > 0 and frame_rate > 0):
        raise InvalidArgument("depth_max, speed and frame_rate must be positive")
    if hold < 0:
        raise InvalidArgument("hold must be >= 0")
    kt, kd = _knots(profile, depth_max, speed, hold, presses)
    duration = kt[-1]
    n = int(np.ceil(duration * frame_rate - 1e-9)) + 1
    times = np.arange(n) / frame_rate
    depth = np.interp(times, kt, kd)
    depth[0] = 0.0
    spec = {
        "profile": profile, "depth_max": depth_max, "speed": speed, "hold": hold,
        "frame_rate": frame_rate, "offset": [float(offset[0]), float(offset[1])], "yaw": float(yaw),
        "presses": presses,
    }
    return Trajectory(
        times, np.maximum(depth, 0.0), np.tile(np.asarray(offset, float), (n, 1)), np.full(n, float(yaw)),
        float(frame_rate), spec,
    )


def trajectory_from_spec(spec):
    return make_trajectory(
        spec["profile"], spec["depth_max"], spec["speed"], spec.get("hold", 0.0), spec["frame_rate"],
        tuple(spec.get("offset", (0.0, 0.0))), spec.get("yaw", 0.0), spec.get("presses", 3),
    )


@dataclass
class SimRecording:
    times: np.ndarray  # (T,)
    frames: np.ndarray  # (T, n_tets, 4): centroid x, y, z, von Mises
    force: np.ndarray  # (T,) N, positive = indenter pushing down
    contact_xy: np.ndarray  # (T, 2) force-weighted contact centroid
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8
    max_iterations: int = None


class ContactSolver:
    """Quasi-static frame solver with the bottom fixed and Dirichlet contact on the top.

    Each frame's prescribed z-displacements are ``-(D - h)`` on penetrating top nodes,
    so for a fixed contact set ``u = D * U_press + U_shape``. Both basis fields are
    solved once per distinct (contact set, heights) and reused, which keeps every
    frame a function of its own trajectory sample only.
    """

    def __init__(self, mesh, node_sets, material, solver=SolverConfig(), cache=True):
        self.mesh = mesh
        self.node_sets = node_sets
        self.material = material
        self.solver = solver
        self.cache = {} if cache else None
        self.K = fem.assemble(mesh, material)
        self.stress = fem.StressRecovery(mesh, material)
        self.fixed = fem.ConstraintSet.fix_nodes(node_sets.fixed)
        self.top = np.asarray(node_sets.top_surface)
        self.top_xy = mesh.vertices[self.top, :2]

    def contact(self, indenter, depth):
        h = indenter.heights(self.top_xy[:, 0], self.top_xy[:, 1])
        hit = np.flatnonzero(~np.isnan(h) & (h < depth))
        return self.top[hit], h[hit]

    def _solve_basis(self, nodes, values):
        cs = fem.ConstraintSet.concat(self.fixed, fem.ConstraintSet(nodes, np.full(len(nodes), 2), values))
        sol = fem.solve(self.K, cs, self.solver.tolerance, self.solver.max_iterations, self.mesh.vertices)
        f = fem.axial_contact_force(sol, fem.ConstraintSet(nodes, np.full(len(nodes), 2), values))
        zr = sol.reaction_at(3 * nodes + 2)
        return sol.displacements, f, zr

    def _basis(self, nodes, h):
        key = (nodes.tobytes(), h.tobytes())
        if self.cache is not None and key in self.cache:
            return self.cache[key]
        press = self._solve_basis(nodes, -np.ones(len(nodes)))
        shape = self._solve_basis(nodes, h) if np.any(h != 0) else None
        out = (press, shape)
        if self.cache is not None:
            self.cache[key] = out
        return out

    def displacements(self, indenter, depth):
        """Return ``(nodal displacements (nv, 3), force, contact centroid xy, n contact nodes)``."""
        nodes, h = self.contact(indenter, depth)
        if len(nodes) == 0 or depth <= 0:
            return np.zeros_like(self.mesh.vertices), 0.0, np.asarray(indenter.offset, float), 0
        press, shape = self._basis(nodes, h)
        u = depth * press[0]
        force = depth * press[1]
        zr = depth * press[2]
        if shape is not None:
            u = u + shape[0]
            force = force + shape[1]
            zr = zr + shape[2]
        push = -zr
        xy = self.mesh.vertices[nodes, :2]
        if push.sum() > 0:
            centroid = (push[:, None] * xy).sum(axis=0) / push.sum()
        else:
            centroid = xy.mean(axis=0)
        return u, float(force), centroid, len(nodes)

    def frame(self, indenter, depth):
        """Return ``(stress field, force, contact centroid xy, n contact nodes)``."""
        u, force, centroid, n = self.displacements(indenter, depth)
        return self.stress(u), force, centroid, n


class GreenContactSolver:
    """Same frames as :class:`ContactSolver`, computed from contact compliances.

    The bottom-fixed stiffness is factorized once (sparse LU). Prescribing
    ``u_c = g`` on contact z-DOFs ``c`` then needs the compliance columns
    ``G[:, c] = K^-1 e_c``: the contact forces solve ``G[c, c] lam = g`` and
    ``u = G[:, c] lam``. Columns are computed on first use and kept, so a batch
    of trials over the same area pays for each top node once.
    """

    def __init__(self, mesh, node_sets, material):
        from scipy.sparse.linalg import splu

        self.mesh = mesh
        self.node_sets = node_sets
        self.material = material
        K = fem.assemble(mesh, material)
        n = 3 * mesh.n_vertices
        fixed = np.zeros(n, dtype=bool)
        fixed[fem.ConstraintSet.fix_nodes(node_sets.fixed).dofs] = True
        self.free = np.flatnonzero(~fixed)
        self.position = np.full(n, -1)
        self.position[self.free] = np.arange(len(self.free))
        self.lu = splu(K[self.free][:, self.free].tocsc())
        self.columns = {}
        self.top = np.asarray(node_sets.top_surface)
        self.top_xy = mesh.vertices[self.top, :2]
        self.stress = fem.StressRecovery(mesh, material)

    contact = ContactSolver.contact

    def _green(self, nodes):
        missing = [int(v) for v in nodes if int(v) not in self.columns]
        if missing:
            rhs = np.zeros((len(self.free), len(missing)))
            rhs[self.position[3 * np.asarray(missing) + 2], np.arange(len(missing))] = 1.0
            sol = self.lu.solve(rhs)
            for k, v in enumerate(missing):
                self.columns[v] = sol[:, k]
        return np.column_stack([self.columns[int(v)] for v in nodes])

    def displacements(self, indenter, depth):
        """Return ``(nodal displacements (nv, 3), force, contact centroid xy, n contact nodes)``."""
        nodes, h = self.contact(indenter, depth)
        if len(nodes) == 0 or depth <= 0:
            return np.zeros_like(self.mesh.vertices), 0.0, np.asarray(indenter.offset, float), 0
        G = self._green(nodes)
        rows = self.position[3 * nodes + 2]
        lam = np.linalg.solve(G[rows], -(depth - h))
        u = np.zeros(3 * self.mesh.n_vertices)
        u[self.free] = G @ lam
        u[3 * nodes + 2] = -(depth - h)  # exact, not just to round-off
        push = -lam
        xy = self.mesh.vertices[nodes, :2]
        centroid = (push[:, None] * xy).sum(axis=0) / push.sum() if push.sum() > 0 else xy.mean(axis=0)
        return u.reshape(-1, 3), float(push.sum()), centroid, len(nodes)

    frame = ContactSolver.frame


def check_scenario(mesh, indenter, trajectory):
    lo, hi = mesh.bounds
    if trajectory.depth.max() >= MAX_DEPTH_FRACTION * (hi[2] - lo[2]):
        raise InvalidArgument(
            f"max depth {trajectory.depth.max():.4g} m exceeds {MAX_DEPTH_FRACTION:.0%} of block height"
        )
    r = indenter.bounding_radius
    for xy in np.unique(trajectory.xy, axis=0):
        if np.any(xy - r < lo[:2] - 1e-12) or np.any(xy + r > hi[:2] + 1e-12):
            raise InvalidArgument(f"indenter footprint at {tuple(xy)} leaves the block footprint")


def run_scenario(mesh, node_sets, material, indenter, trajectory, solver=SolverConfig(), cache=True,
                 contact_solver=None, frame_order=None):
    """Simulate every trajectory sample; one independent linear solve per frame."""
    check_scenario(mesh, indenter, trajectory)
    cs = contact_solver or ContactSolver(mesh, node_sets, material, solver, cache)
    n = len(trajectory)
    frames = np.empty((n, mesh.n_tets, 4))
    force = np.empty(n)
    contact_xy = np.empty((n, 2))
    order = range(n) if frame_order is None else frame_order
    for t in order:
        posed = indenter.with_pose(trajectory.xy[t], trajectory.yaw[t])
        try:
            st, f, c, _ = cs.frame(posed, trajectory.depth[t])
        except SolverFailure as exc:
            raise SolverFailure(f"frame {t}: {exc}", exc.residual, frame=t) from exc
        frames[t, :, :3] = st.centroids
        frames[t, :, 3] = st.von_mises
        force[t] = f
        contact_xy[t] = c
    metadata = {
        "material": {"young_modulus": material.young_modulus, "poisson_ratio": material.poisson_ratio},
        "indenter": indenter.to_dict(),
        "trajectory": dict(trajectory.spec),
        "n_tets": int(mesh.n_tets),
    }
    return SimRecording(trajectory.times.copy(), frames, force, contact_xy, metadata)


def enumerate_cells(batch):
    """Cross product indenters x locations x trajectories, in config order."""
    return list(product(range(len(batch["indenters"])), range(len(batch["locations"])),
                        range(len(batch["trajectories"]))))


def batch_generate(batch, mesh, node_sets, material, out_dir, seed, solver=SolverConfig(), threads=1,
                   mesh_id=""):
    """Run every cell of ``batch`` and write one recording directory per cell.

    ``batch`` holds ``indenters`` (dicts), ``locations`` (xy relative to the block
    center) and ``trajectories`` (profile specs). Failures are recorded in the
    returned manifest entries instead of aborting the batch.
    """
    from . import dataset

    lo, hi = mesh.bounds
    center = (lo[:2] + hi[:2]) / 2
    cells = enumerate_cells(batch)
    contact_solver = ContactSolver(mesh, node_sets, material, solver)

    def run(index):
        ii, li, ti = cells[index]
        rec_id = f"r{index:04d}"
        cell_seed = derive_seed(seed, index)
        loc = center + np.asarray(batch["locations"][li], float)
        tspec = dict(batch["trajectories"][ti])
        yaw = float(tspec.pop("yaw", 0.0))
        indenter = Indenter.from_dict(batch["indenters"][ii]).with_pose(loc, yaw)
        entry = {"id": rec_id, "seed": cell_seed, "cell": [ii, li, ti]}
        try:
            traj = trajectory_from_spec({**tspec, "offset": list(loc), "yaw": yaw})
            rec = run_scenario(mesh, node_sets, material, indenter, traj, contact_solver=contact_solver)
            rec.metadata.update({"id": rec_id, "seed": cell_seed, "mesh_id": mesh_id})
            entry["files"] = dataset.write_recording(rec, out_dir / rec_id)
            entry["status"] = "ok"
        except TaxelSimError as exc:
            log.warning("scenario %s failed: %s", rec_id, exc)
            entry["status"] = "failed"
            entry["error"] = str(exc)
        return entry

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            entries = list(pool.map(run, range(len(cells))))
    else:
        entries = [run(i) for i in range(len(cells))]
    return entries
