import numpy as np
import pytest

from taxelsim import fem, scenario
from taxelsim.errors import InvalidArgument
from taxelsim.scenario import ContactSolver, GreenContactSolver, Indenter, SolverConfig

from conftest import DIMS

AREAS = {
    "flat_round": ({"radius": 0.003}, np.pi * 0.003**2),
    "flat_square": ({"side": 0.004}, 0.004**2),
    "cross": ({"arm_length": 0.008, "arm_width": 0.002}, 2 * 0.008 * 0.002 - 0.002**2),
    "ring": ({"outer_radius": 0.004, "inner_radius": 0.002}, np.pi * (0.004**2 - 0.002**2)),
    "triangle": ({"circumradius": 0.004}, 3 * np.sqrt(3) / 4 * 0.004**2),
    "hexagon": ({"circumradius": 0.004}, 3 * np.sqrt(3) / 2 * 0.004**2),
    "sphere": ({"radius": 0.003}, np.pi * 0.003**2),
}


@pytest.mark.parametrize("shape", sorted(AREAS))
@pytest.mark.parametrize("yaw", [0.0, 0.7])
def test_footprint_area(shape, yaw):
    dims, area = AREAS[shape]
    ind = Indenter(shape, dims, (0.01, 0.02), yaw)
    n = 1200
    g = np.linspace(-0.005, 0.005, n)
    x, y = np.meshgrid(0.01 + g, 0.02 + g)
    inside = ~np.isnan(ind.heights(x, y))
    assert inside.mean() * 0.01**2 == pytest.approx(area, rel=0.01)
    # the footprint stays within the bounding radius
    assert np.hypot(x[inside] - 0.01, y[inside] - 0.02).max() <= ind.bounding_radius + 1e-5


def test_sphere_cap_height():
    ind = Indenter("sphere", {"radius": 0.005})
    rho = np.array([0.0, 0.001, 0.003, 0.005])
    np.testing.assert_allclose(ind.heights(rho, 0 * rho), 0.005 - np.sqrt(0.005**2 - rho**2), atol=1e-18)
    assert np.isnan(ind.heights(0.0051, 0.0))
    assert scenario.indenter_surface_height(ind, 0.006, 0) is None
    assert scenario.indenter_surface_height(ind, 0.0, 0) == 0.0


def test_flat_shapes_are_flat_and_ring_has_a_hole():
    ring = Indenter("ring", {"outer_radius": 0.004, "inner_radius": 0.002})
    assert np.isnan(ring.heights(0.0, 0.0))
    assert ring.heights(0.003, 0.0) == 0.0
    sq = Indenter("flat_square", {"side": 0.004}, yaw=np.pi / 4)
    assert sq.heights(0.0027, 0.0) == 0.0  # a rotated corner reaches side/sqrt(2)
    assert np.isnan(Indenter("flat_square", {"side": 0.004}).heights(0.0027, 0.0))


@pytest.mark.parametrize("bad", [
    ("blob", {"radius": 1.0}), ("sphere", {}), ("sphere", {"radius": -1.0}),
    ("ring", {"outer_radius": 0.002, "inner_radius": 0.003}),
])
def test_invalid_indenters(bad):
    with pytest.raises(InvalidArgument):
        Indenter(*bad)


def test_press_hold_release_samples():
    t = scenario.make_trajectory("press_hold_release", 0.002, 0.004, 0.5, 30.0)
    # 0.5 s down, 0.5 s hold, 0.5 s up
    assert len(t) == int(np.ceil(1.5 * 30)) + 1
    assert t.depth[0] == 0.0 and t.depth[-1] == pytest.approx(0.0, abs=1e-15)
    assert t.depth.max() == pytest.approx(0.002)
    np.testing.assert_allclose(np.diff(t.times), 1 / 30)
    np.testing.assert_allclose(t.depth[:16], np.minimum(t.times[:16] * 0.004, 0.002))


def test_ramp_and_multi_press_profiles():
    r = scenario.make_trajectory("ramp", 0.001, 0.001, 0.25, 20.0)
    assert r.times[-1] == pytest.approx(2.25)
    assert np.all(r.depth[r.times >= 2.0] == 0.0)
    mp = scenario.make_trajectory("multi_press", 0.003, 0.01, 0.1, 100.0, presses=3)
    peaks = [mp.depth[(mp.times > a) & (mp.times < b)].max() for a, b in [(0, 0.3), (0.3, 0.8), (0.8, 1.5)]]
    np.testing.assert_allclose(peaks, [0.001, 0.002, 0.003], rtol=1e-9)


@pytest.mark.parametrize("args", [("wobble", 0.001, 0.01, 0, 10), ("ramp", 0, 0.01, 0, 10),
                                  ("ramp", 0.001, 0.01, -1, 10), ("ramp", 0.001, 0.01, 0, 0)])
def test_invalid_trajectories(args):
    with pytest.raises(InvalidArgument):
        scenario.make_trajectory(*args)


def test_check_scenario_limits(small_mesh):
    ind = Indenter("sphere", {"radius": 0.004})
    center = (DIMS[0] / 2, DIMS[1] / 2)
    deep = scenario.make_trajectory("ramp", 0.005, 0.01, 0, 10, center)
    with pytest.raises(InvalidArgument, match="depth"):
        scenario.check_scenario(small_mesh, ind, deep)
    edge = scenario.make_trajectory("ramp", 0.001, 0.01, 0, 10, (0.002, 0.012))
    with pytest.raises(InvalidArgument, match="footprint"):
        scenario.check_scenario(small_mesh, ind, edge)


@pytest.fixture(scope="module")
def solvers(small_mesh, small_node_sets):
    mat = fem.MaterialParams()
    return (ContactSolver(small_mesh, small_node_sets, mat, SolverConfig(1e-12)),
            GreenContactSolver(small_mesh, small_node_sets, mat))


@pytest.mark.parametrize("shape,dims", [("sphere", {"radius": 0.005}), ("cross", {"arm_length": 0.01,
                                                                                  "arm_width": 0.004})])
def test_green_solver_matches_pcg(solvers, shape, dims):
    ind = Indenter(shape, dims, (0.021, 0.011), 0.4)
    for depth in (0.0004, 0.0015):
        ua, fa, ca, na = solvers[0].displacements(ind, depth)
        ub, fb, cb, nb = solvers[1].displacements(ind, depth)
        assert na == nb > 0
        np.testing.assert_allclose(ub, ua, atol=1e-9 * np.abs(ua).max())
        assert fb == pytest.approx(fa, rel=1e-8)
        np.testing.assert_allclose(cb, ca, atol=1e-9)


def test_flat_punch_force_is_linear_in_depth(solvers):
    ind = Indenter("flat_round", {"radius": 0.004}, (0.02, 0.012))
    _, f1, _, _ = solvers[0].displacements(ind, 0.0005)
    _, f2, _, _ = solvers[0].displacements(ind, 0.0015)
    assert f1 > 0
    assert f2 == pytest.approx(3 * f1, rel=1e-8)


def test_sphere_force_stiffens_with_depth():
    from taxelsim import mesh as meshlib

    m = meshlib.generate_box_mesh(DIMS, (40, 24, 3))
    ns = meshlib.classify_nodes(m, meshlib.taxel_grid(DIMS), 0.004)
    solver = GreenContactSolver(m, ns, fem.MaterialParams())
    ind = Indenter("sphere", {"radius": 0.005}, (0.02, 0.012))
    depths = np.linspace(0.0005, 0.002, 6)
    forces = np.array([solver.displacements(ind, d)[1] for d in depths])
    assert np.all(np.diff(forces) > 0)
    assert np.all(np.diff(forces / depths) > 0)  # secant stiffness grows with contact area


def test_no_contact_gives_zero_frame(solvers):
    u, f, c, n = solvers[0].displacements(Indenter("sphere", {"radius": 0.003}, (0.02, 0.012)), 0.0)
    assert n == 0 and f == 0.0 and not u.any()
    np.testing.assert_allclose(c, (0.02, 0.012))


def test_frames_are_order_and_cache_independent(small_mesh, small_node_sets):
    mat = fem.MaterialParams()
    ind = Indenter("sphere", {"radius": 0.004})
    traj = scenario.make_trajectory("press_hold_release", 0.0015, 0.005, 0.1, 30.0, (0.02, 0.012))
    a = scenario.run_scenario(small_mesh, small_node_sets, mat, ind, traj)
    order = np.random.default_rng(0).permutation(len(traj))
    b = scenario.run_scenario(small_mesh, small_node_sets, mat, ind, traj, frame_order=order)
    c = scenario.run_scenario(small_mesh, small_node_sets, mat, ind, traj, cache=False)
    np.testing.assert_array_equal(a.frames, b.frames)
    np.testing.assert_array_equal(a.force, b.force)
    np.testing.assert_allclose(c.frames, a.frames, rtol=1e-7, atol=1e-12)
    assert a.frames.shape == (len(traj), small_mesh.n_tets, 4)
    assert a.force[0] == 0.0 and a.force.max() > 0


def test_batch_records_failures_without_aborting(tmp_path, small_mesh, small_node_sets):
    batch = {
        "indenters": [{"shape": "flat_round", "dims": {"radius": 0.003}}],
        "locations": [[0.0, 0.0], [0.0185, 0.0]],  # second one leaves the block
        "trajectories": [{"profile": "ramp", "depth_max": 0.001, "speed": 0.01, "hold": 0.0, "frame_rate": 20}],
    }
    entries = scenario.batch_generate(batch, small_mesh, small_node_sets, fem.MaterialParams(), tmp_path, seed=1)
    assert [e["status"] for e in entries] == ["ok", "failed"]
    assert "footprint" in entries[1]["error"]
    assert (tmp_path / "r0000" / "frames.bin").exists()
    assert not (tmp_path / "r0001").exists()
