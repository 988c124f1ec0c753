import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taxelsim.align import WarpPath, accumulated_cost, dtw, normalize_for_dtw, warp_taxels
from taxelsim.errors import DegenerateInputError, InvalidArgument

from oracles import all_path_costs, brute_force_dtw

seqs = st.lists(st.integers(-5, 5).map(float), min_size=1, max_size=6)


@settings(max_examples=200, deadline=None)
@given(a=seqs, b=seqs)
def test_cost_equals_enumeration(a, b):
    assert dtw(a, b).total_cost == min(all_path_costs(a, b))


@settings(max_examples=100, deadline=None)
@given(a=seqs, b=seqs)
def test_path_is_valid_and_attains_cost(a, b):
    p = dtw(a, b)
    arr = p.as_array()
    assert tuple(arr[0]) == (0, 0)
    assert tuple(arr[-1]) == (len(a) - 1, len(b) - 1)
    steps = np.diff(arr, axis=0)
    assert all(tuple(s) in {(1, 1), (1, 0), (0, 1)} for s in steps)
    assert sum(abs(a[i] - b[j]) for i, j in arr) == p.total_cost


@settings(max_examples=100, deadline=None)
@given(a=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_self_alignment_is_free_and_diagonal(a):
    p = dtw(a, a)
    assert p.total_cost == 0.0
    assert p.pairs == [(i, i) for i in range(len(a))]


def test_tie_break_prefers_diagonal_then_sim_step():
    # constant sequences: every path costs 0
    p = dtw([1.0, 1.0, 1.0], [1.0, 1.0])
    assert p.pairs == [(0, 0), (1, 0), (2, 1)]
    p = dtw([1.0, 1.0], [1.0, 1.0, 1.0])
    assert p.pairs == [(0, 0), (0, 1), (1, 2)]


def test_shifted_pulse_alignment():
    a = np.array([0, 0, 1, 2, 1, 0, 0, 0], float)
    b = np.array([0, 0, 0, 0, 1, 2, 1, 0], float)
    p = dtw(a, b)
    assert p.total_cost == 0.0
    assert (3, 5) in p.pairs


def test_brute_force_matches_random_reals():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.normal(size=rng.integers(1, 7))
        b = rng.normal(size=rng.integers(1, 7))
        assert dtw(a, b).total_cost == pytest.approx(brute_force_dtw(a, b), rel=1e-12)


def test_band_restricts_paths():
    a = np.array([0, 0, 0, 0, 5.0])
    b = np.array([5.0, 0, 0, 0, 0])
    assert dtw(a, b, band=1).total_cost >= dtw(a, b).total_cost
    D = accumulated_cost(a, b, band=0)
    assert np.isinf(D[0, 1])
    with pytest.raises(InvalidArgument):
        dtw([1.0, 2.0], [1.0, 2.0, 3.0, 4.0], band=0)


def test_empty_rejected():
    with pytest.raises(InvalidArgument):
        dtw([], [1.0])


def test_warp_mean_and_first_policies():
    taxels = np.array([[1.0, 10], [2, 20], [3, 30], [4, 40]])
    path = WarpPath([(0, 0), (0, 1), (1, 2), (2, 2), (2, 3)], 0.0)
    np.testing.assert_allclose(warp_taxels(taxels, path, 3), [[1.5, 15], [3, 30], [3.5, 35]])
    np.testing.assert_allclose(warp_taxels(taxels, path, 3, "first"), [[1, 10], [3, 30], [3, 30]])


def test_warp_of_repeated_values_is_exact():
    v = 0.1 + 0.2  # not representable exactly; the mean of copies must still equal it
    taxels = np.full((3, 1), v)
    path = WarpPath([(0, 0), (0, 1), (0, 2)], 0.0)
    assert warp_taxels(taxels, path, 1)[0, 0] == v


def test_warp_validates_coverage():
    taxels = np.zeros((3, 2))
    with pytest.raises(InvalidArgument):
        warp_taxels(taxels, WarpPath([(0, 0), (1, 5)], 0.0), 2)
    with pytest.raises(InvalidArgument):
        warp_taxels(taxels, WarpPath([(0, 0), (1, 1)], 0.0), 3)
    with pytest.raises(InvalidArgument):
        warp_taxels(taxels, WarpPath([(0, 0), (1, 1)], 0.0), 2, policy="median")


def test_zscore():
    z = normalize_for_dtw([1.0, 2.0, 3.0], "zscore")
    assert z.mean() == pytest.approx(0.0) and z.std() == pytest.approx(1.0)
    with pytest.raises(DegenerateInputError):
        normalize_for_dtw([2.0, 2.0], "zscore")
