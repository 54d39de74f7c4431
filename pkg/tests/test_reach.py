"""Occupancy-grid reachability: oracle-backed behaviour tests.

Two independent oracles anchor these tests:
  * scalar integrator x' = u: the reachable set within any time horizon T is
    exactly the interval [-min(T, w), min(T, w)] clipped to the window, so a
    saturating run must occupy essentially every cell;
  * torus shift (x1' = 1, x2' = u, |u| <= 1): the reachable set is exactly the
    forward cone {dx1 >= 0, |dx2| <= dx1} in window offsets, membership
    checkable in closed form for every occupied cell.
"""

import math

import numpy as np
import pytest

from conftest import make_martinet, make_scalar_integrator, make_torus_shift, TWO_PI
from orbitreach.dynamics import PiecewiseControl, integrate, reverse_system
from orbitreach.geometry import StateSpace, dist
from orbitreach.reach import (
    OutOfWindowError,
    ReachGrid,
    ReachParams,
    Window,
    backward_grid,
    duality_check,
    interior_test,
    krener_check,
    nearest_interior_distance,
    reach_grid,
    validate_window,
)


# -- window and parameter validation ------------------------------------------


def test_window_around_scalar_and_per_axis_sizes():
    w = Window.around((1.0, 2.0), 0.5)
    assert w.center == (1.0, 2.0)
    assert w.half_widths == (0.25, 0.25)
    w2 = Window.around((0.0, 0.0, 0.0), (0.6, 0.3, 0.3))
    assert w2.half_widths == (0.3, 0.15, 0.15)
    assert w2.dim == 3
    assert w2.box[1] == (-0.15, 0.15)


def test_window_rejects_nonpositive_size():
    with pytest.raises(ValueError):
        Window.around((0.0,), 0.0)
    with pytest.raises(ValueError):
        Window((0.0,), (-1.0,))


def test_validate_window_dimension_mismatch():
    space = StateSpace(dim=2, periods=(TWO_PI, TWO_PI))
    with pytest.raises(ValueError):
        validate_window(space, Window.around((0.0,), 0.5))


def test_validate_window_period_cap():
    space = StateSpace(dim=2, periods=(TWO_PI, TWO_PI))
    validate_window(space, Window.around((0.0, 0.0), (TWO_PI, 1.0)))  # exactly full
    with pytest.raises(ValueError):
        validate_window(space, Window.around((0.0, 0.0), (TWO_PI + 0.1, 1.0)))


def test_validate_window_respects_domain_constraints():
    mart = make_martinet(3)
    validate_window(mart.space, Window.around((0.0, 0.0, 0.0), 0.5))
    # corners at x2 = 1.1 violate x2^2 + x3^2 < 1
    with pytest.raises(ValueError):
        validate_window(mart.space, Window.around((0.0, 0.85, 0.0), 0.5))


def test_reach_params_validation():
    with pytest.raises(ValueError):
        ReachParams(budget=-1)
    with pytest.raises(ValueError):
        ReachParams(max_time=0.0)
    with pytest.raises(ValueError):
        ReachParams(max_segments=0)
    with pytest.raises(ValueError):
        ReachParams(h=0.0)
    with pytest.raises(ValueError):
        ReachParams(h=(0.1, -0.1))
    with pytest.raises(ValueError):
        ReachParams(step=0.0)
    with pytest.raises(ValueError):
        ReachParams(h=(0.1, 0.1)).h_per_axis(3)
    assert ReachParams(h=0.05).h_per_axis(2) == (0.05, 0.05)


def test_reach_grid_rejects_x0_outside_window(torus_shift):
    window = Window.around((0.0, 0.0), 0.5)
    with pytest.raises(ValueError):
        reach_grid(torus_shift, (1.0, 0.0), window, ReachParams(budget=0))


def test_reach_grid_rejects_wrong_x0_dim(torus_shift):
    with pytest.raises(ValueError):
        reach_grid(torus_shift, (0.0,), Window.around((0.0, 0.0), 0.5), ReachParams(budget=0))


# -- grid geometry -------------------------------------------------------------


def test_cells_tile_window_exactly(torus_shift):
    window = Window.around((0.0, 0.0), (0.5, 0.3))
    g = reach_grid(torus_shift, (0.0, 0.0), window, ReachParams(budget=0, h=0.02))
    assert g.dims == (25, 15)
    # effective cell sizes tile the full widths exactly
    assert g.h[0] * g.dims[0] == pytest.approx(0.5)
    assert g.h[1] * g.dims[1] == pytest.approx(0.3)


def test_cell_index_center_roundtrip(torus_shift):
    window = Window.around((1.0, 5.0), (0.8, 0.4))
    g = reach_grid(torus_shift, (1.0, 5.0), window, ReachParams(budget=0, h=0.05))
    rng = np.random.default_rng(3)
    for _ in range(100):
        idx = tuple(int(rng.integers(0, n)) for n in g.dims)
        center = g.cell_center(idx)
        assert g.cell_index(center) == idx
        assert g.pack(idx) >= 0
        assert g.unpack(g.pack(idx)) == idx


def test_cell_index_out_of_window_raises(torus_shift):
    g = reach_grid(
        torus_shift, (0.0, 0.0), Window.around((0.0, 0.0), 0.5), ReachParams(budget=0)
    )
    with pytest.raises(OutOfWindowError):
        g.cell_index((1.0, 0.0))
    assert not g.in_window((1.0, 0.0))
    assert g.in_window((0.1, -0.2))


def test_zero_budget_occupies_only_the_root_cell(torus_shift):
    g = reach_grid(
        torus_shift, (0.2, 0.1), Window.around((0.2, 0.1), 0.5), ReachParams(budget=0)
    )
    assert g.occupied_count == 1
    assert g.is_occupied(g.cell_index((0.2, 0.1)))
    assert not krener_check(g, (0.2, 0.1))


# -- oracle: scalar integrator saturates its interval --------------------------


def test_interval_saturation_oracle(scalar_integrator):
    window = Window.around((0.0,), 2.0)
    g = reach_grid(
        scalar_integrator, (0.0,), window, ReachParams(budget=10_000, h=0.01, seed=5)
    )
    assert g.dims == (200,)
    # the whole interval is reachable within max_time = 4 > window radius 1
    assert g.occupied_count >= 0.99 * 200
    assert krener_check(g, (0.0,))
    assert nearest_interior_distance(g, (0.0,)) <= 4


# -- oracle: torus shift reaches exactly its forward cone ----------------------


def cone_grid(x0=(1.0, 4.0), budget=20_000, seed=11):
    sys = make_torus_shift()
    window = Window.around(x0, 1.0)
    params = ReachParams(budget=budget, h=0.02, seed=seed)
    return sys, window, params, reach_grid(sys, x0, window, params)


def test_cone_occupancy_never_escapes_the_oracle_set():
    _, _, _, g = cone_grid()
    h = max(g.h)
    centers = g.occupied_cell_centers()
    offsets = np.array([g.offset_of(c) for c in centers])
    assert np.all(offsets[:, 0] >= -h)  # nothing behind the start
    assert np.all(np.abs(offsets[:, 1]) <= offsets[:, 0] + 2 * h)  # inside the cone


def test_cone_coverage_is_nearly_complete():
    _, _, _, g = cone_grid()
    h = g.h
    total = hit = 0
    for i0 in range(g.dims[0]):
        for i1 in range(g.dims[1]):
            c = g.cell_center((i0, i1))
            off = g.offset_of(c)
            if off[0] >= 2 * h[0] and abs(off[1]) <= off[0] - 2 * h[1]:
                total += 1
                hit += g.is_occupied((i0, i1))
    assert total > 200
    assert hit / total >= 0.95


def test_cone_oracle_across_periodic_seam():
    x0 = (TWO_PI - 0.1, 0.05)
    _, _, _, g = cone_grid(x0=x0)
    h = max(g.h)
    centers = g.occupied_cell_centers()
    offsets = np.array([g.offset_of(c) for c in centers])
    assert np.all(offsets[:, 0] >= -h)
    assert np.all(np.abs(offsets[:, 1]) <= offsets[:, 0] + 2 * h)
    # cells beyond the seam (wrapped x1 smaller than x0's) are reached
    assert np.any(centers[:, 0] < 1.0)
    assert krener_check(g, x0)


def test_larger_budget_only_adds_cells():
    _, _, _, small = cone_grid(budget=4096, seed=2)
    _, _, _, big = cone_grid(budget=3 * 4096, seed=2)
    assert set(small.occupied).issubset(set(big.occupied))
    assert big.occupied_count > small.occupied_count


# -- witnesses ----------------------------------------------------------------


def test_witness_replay_is_bitwise_exact():
    sys, _, params, g = cone_grid(budget=8192)
    rng = np.random.default_rng(0)
    flats = sorted(g.occupied)
    picks = rng.choice(len(flats), size=min(50, len(flats)), replace=False)
    checked = 0
    for at in picks:
        idx = g.unpack(flats[at])
        node = g.witness_node(idx)
        if node == 0:
            continue  # root: empty control
        control = g.witness_control(node)
        traj = integrate(sys, g.x0, control, step=params.step)
        assert np.array_equal(traj.end, g.witness_state(node))
        assert g.cell_index(traj.end) == idx
        checked += 1
    assert checked >= 40


def test_witness_durations_are_step_multiples_and_bounded():
    _, _, params, g = cone_grid(budget=8192)
    flats = sorted(g.occupied)
    for flat in flats[:: max(1, len(flats) // 60)]:
        control = g.cell_witness_control(g.unpack(flat))
        assert len(control.segments) <= params.max_segments
        total = 0.0
        for dur, val in control.segments:
            ratio = dur / params.step
            assert abs(ratio - round(ratio)) < 1e-9
            assert -1.0 <= val[0] <= 1.0
            total += dur
        assert total <= params.max_time + 1e-9


def test_root_witness_is_the_empty_control():
    _, _, _, g = cone_grid(budget=0)
    idx = g.cell_index(g.x0)
    assert g.witness_node(idx) == 0
    assert g.cell_witness_control(idx) == PiecewiseControl(())
    with pytest.raises(KeyError):
        g.witness_node((0, 0)) if not g.is_occupied((0, 0)) else pytest.skip(
            "unexpectedly occupied"
        )


# -- synthetic grids: interior machinery ---------------------------------------


def synthetic_grid(dims=(7, 7), occupied_idx=None):
    sys = make_torus_shift()
    window = Window.around((0.0, 0.0), tuple(0.04 * n for n in dims))
    params = ReachParams(budget=0, h=0.04)
    g = reach_grid(sys, (0.0, 0.0), window, params)
    assert g.dims == dims
    if occupied_idx is not None:
        g.occupied = {g.pack(i): 0 for i in occupied_idx}
    return g


def full_block(dims):
    return [(i, j) for i in range(dims[0]) for j in range(dims[1])]


def test_interior_test_on_full_and_holed_blocks():
    g = synthetic_grid(occupied_idx=full_block((7, 7)))
    center = g.cell_center((3, 3))
    assert interior_test(g, center, radius_cells=2)
    assert interior_test(g, center, radius_cells=3)
    # puncture at Chebyshev distance 2: radius 2 fails, radius 1 still passes
    del g.occupied[g.pack((5, 5))]
    assert not interior_test(g, center, radius_cells=2)
    assert interior_test(g, center, radius_cells=1)


def test_interior_test_fails_at_window_edge():
    g = synthetic_grid(occupied_idx=full_block((7, 7)))
    edge_center = g.cell_center((0, 3))
    assert not interior_test(g, edge_center, radius_cells=1)
    near_edge = g.cell_center((1, 3))
    assert interior_test(g, near_edge, radius_cells=1)
    assert not interior_test(g, near_edge, radius_cells=2)


def test_interior_test_rejects_bad_radius():
    g = synthetic_grid(occupied_idx=full_block((7, 7)))
    with pytest.raises(ValueError):
        interior_test(g, (0.0, 0.0), radius_cells=0)


def test_nearest_interior_distance_and_search_bound():
    # interior-capable block sits in one corner, far from the probe point
    block = [(i, j) for i in range(0, 5) for j in range(0, 5)]
    g = synthetic_grid(occupied_idx=block)
    probe = g.cell_center((6, 6))
    # nearest cell passing interior_test at radius 1 is (3, 3) -> distance 3
    assert nearest_interior_distance(g, probe, radius_cells=1) == 3
    assert krener_check(g, probe, radius_cells=1)
    assert krener_check(g, probe, radius_cells=1, search_radius_cells=3)
    assert not krener_check(g, probe, radius_cells=1, search_radius_cells=2)


def test_nearest_interior_distance_none_without_interior():
    g = synthetic_grid(occupied_idx=[(3, 3), (3, 4)])
    assert nearest_interior_distance(g, (0.0, 0.0)) is None
    assert not krener_check(g, (0.0, 0.0))


# -- backward grids and duality -------------------------------------------------


def test_backward_grid_is_the_mirrored_cone():
    sys = make_torus_shift()
    x0 = (1.0, 4.0)
    g = backward_grid(sys, x0, Window.around(x0, 1.0), ReachParams(budget=20_000, seed=4))
    h = max(g.h)
    centers = g.occupied_cell_centers()
    offsets = np.array([g.offset_of(c) for c in centers])
    assert np.all(offsets[:, 0] <= h)  # nothing ahead of the start
    assert np.all(np.abs(offsets[:, 1]) <= -offsets[:, 0] + 2 * h)


def test_backward_witness_reversal_returns_to_base():
    """A backward witness replayed on the reversed system ends in the claimed
    cell; replaying its reversed schedule forward returns near the base."""
    sys = make_torus_shift()
    x0 = (1.0, 4.0)
    params = ReachParams(budget=8192, seed=9)
    g = backward_grid(sys, x0, Window.around(x0, 1.0), params)
    rsys = reverse_system(sys)
    flats = sorted(g.occupied)
    checked = 0
    for flat in flats[:: max(1, len(flats) // 20)]:
        idx = g.unpack(flat)
        node = g.witness_node(idx)
        if node == 0:
            continue
        control = g.witness_control(node)
        back = integrate(rsys, x0, control, step=params.step)
        assert np.array_equal(back.end, g.witness_state(node))
        fwd = integrate(sys, tuple(back.end), control.reversed_schedule(), step=params.step)
        assert dist(g.space, fwd.end, x0) < 1e-6
        checked += 1
    assert checked >= 10


def test_duality_agree_yes_and_agree_no_on_the_cone():
    sys = make_torus_shift()
    window = Window.around((1.0, 4.0), 1.2)
    params = ReachParams(budget=20_000, seed=21)
    ahead = duality_check(sys, (0.8, 4.0), (1.1, 4.1), window, params)
    assert ahead.verdict == "agree_yes"
    assert ahead.forward_interior and ahead.backward_interior
    outside = duality_check(sys, (0.8, 4.0), (1.1, 3.5), window, params)
    assert outside.verdict == "agree_no"
    assert not outside.forward_interior and not outside.backward_interior
    d = ahead.to_dict()
    assert d["schema"] == 1 and d["verdict"] == "agree_yes"
    assert d["forward"]["occupied_count"] > 0


def test_duality_is_deterministic():
    sys = make_torus_shift()
    window = Window.around((1.0, 4.0), 1.2)
    params = ReachParams(budget=8192, seed=33)
    a = duality_check(sys, (0.8, 4.0), (1.1, 4.1), window, params)
    b = duality_check(sys, (0.8, 4.0), (1.1, 4.1), window, params)
    assert a.verdict == b.verdict
    assert set(a.forward_grid.occupied) == set(b.forward_grid.occupied)
    assert set(a.backward_grid.occupied) == set(b.backward_grid.occupied)


# -- reproducibility and reporting ----------------------------------------------


def test_same_seed_reproduces_the_grid_exactly():
    _, _, _, a = cone_grid(budget=4096, seed=7)
    _, _, _, b = cone_grid(budget=4096, seed=7)
    assert set(a.occupied) == set(b.occupied)
    assert all(a.occupied[k] == b.occupied[k] for k in a.occupied)
    assert np.array_equal(a.states, b.states)
    _, _, _, c = cone_grid(budget=4096, seed=8)
    assert set(a.occupied) != set(c.occupied)


def test_summary_shape():
    _, _, _, g = cone_grid(budget=4096)
    s = g.summary()
    assert s["schema"] == 1
    assert s["occupied_count"] == g.occupied_count
    assert s["budget"] == 4096
    assert len(s["window"]["center"]) == 2


def test_cells_to_csv_roundtrip(tmp_path):
    _, _, _, g = cone_grid(budget=4096)
    path = tmp_path / "cells.csv"
    g.cells_to_csv(path)
    rows = path.read_text().strip().splitlines()
    header, data = rows[0], rows[1:]
    assert header.split(",")[:2] == ["x1", "x2"]
    assert len(data) == g.occupied_count
    first = data[0].split(",")
    center = np.array([float(first[0]), float(first[1])])
    assert g.is_occupied(g.cell_index(center))


def test_martinet_grid_smoke_and_domain_safety():
    mart = make_martinet(3)
    x0 = (0.0, 0.45, 0.0)
    g = reach_grid(
        mart,
        x0,
        Window.around(x0, (1.5, 0.6, 0.3)),
        ReachParams(budget=50_000, seed=1, max_time=2.0, step=2e-3),
    )
    assert g.occupied_count > 100
    centers = g.occupied_cell_centers()
    assert np.all(centers[:, 1] ** 2 + centers[:, 2] ** 2 < 1.0)
    assert krener_check(g, x0)
