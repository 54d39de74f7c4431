"""Verification battery for the degenerate-plane benchmark system.

The cheap stages (symbolic brackets, singular loop) are exercised directly;
the sampling stages (regularity, neighborhood) run once through a
module-scoped verify_all and the tests inspect its sub-reports."""

import math

import pytest

from conftest import TWO_PI, make_martinet

from orbitreach.dynamics import PiecewiseControl, reverse_system
from orbitreach.extremals import check_singular, integrate_lift
from orbitreach.geometry import contains
from orbitreach.martinet import (
    MartinetConfig,
    build,
    plane_points,
    singular_loop_control,
    verify_all,
    verify_bracket_claims,
    verify_singular_orbit,
)


@pytest.fixture(scope="module")
def battery():
    return verify_all(MartinetConfig(seed=0))


def test_config_rejects_even_or_small_k():
    for bad in (1, 2, 4, 0, -3):
        with pytest.raises(ValueError, match="odd"):
            MartinetConfig(k=bad)
    for good in (3, 5, 7):
        assert MartinetConfig(k=good).k == good


def test_config_rejects_bad_numerics():
    with pytest.raises(ValueError, match="step"):
        MartinetConfig(step=0.0)
    with pytest.raises(ValueError, match="budget"):
        MartinetConfig(reach_budget=0)


def test_build_field_values():
    system = build(MartinetConfig(k=3))
    assert list(system.drift.evaluate((0.0, 0.5, 0.0))) == [1.0, 0.0, 0.125]
    assert list(system.inputs[0].evaluate((0.0, 0.5, 0.0))) == [0.0, 1.0, 0.0]
    # on the loop the drift is the unit first-axis shift
    assert list(system.drift.evaluate((2.5, 0.0, 0.0))) == [1.0, 0.0, 0.0]
    assert contains(system.space, (0.0, 0.5, 0.5))
    assert not contains(system.space, (0.0, 0.8, 0.7))
    assert system.space.periods[0] == pytest.approx(TWO_PI)


def test_build_agrees_with_test_helper_builder():
    for k in (3, 5):
        ours = build(MartinetConfig(k=k))
        helper = make_martinet(k)
        assert (ours.drift - helper.drift).is_zero
        assert (ours.inputs[0] - helper.inputs[0]).is_zero
        assert ours.control_box == helper.control_box
        assert ours.space.periods == helper.space.periods


def test_plane_points_are_exact_loop_samples():
    pts = plane_points()
    assert len(pts) == 5
    assert all(isinstance(c, int) for pt in pts for c in pt)
    assert all(pt[1] == 0 and pt[2] == 0 and 0 <= pt[0] < TWO_PI for pt in pts)
    with pytest.raises(ValueError):
        plane_points(7)


@pytest.mark.parametrize("k", [3, 5, 7])
def test_bracket_claims_hold_exactly(k):
    report = verify_bracket_claims(MartinetConfig(k=k))
    assert report.first_bracket_matches
    assert report.higher_powers_vanish
    # rank 2 through depth k on the plane, full rank exactly at depth k+1
    assert report.on_plane_profile == tuple(
        (d, 2 if d <= k else 3) for d in range(1, k + 2)
    )
    assert report.off_plane_depth2_rank == 3
    assert report.ok
    assert report.to_dict()["ok"] is True


def test_singular_orbit_residuals_are_tiny():
    report = verify_singular_orbit(MartinetConfig())
    assert report.closure_gap < 1e-9
    assert report.cond_i < 1e-9
    assert report.cond_ii < 1e-9
    assert report.cond_iii < 1e-9
    assert report.cond_iv < 1e-9
    assert report.singular_verdict == "singular"
    assert report.ok


def test_perturbed_covector_is_caught_as_not_singular():
    system = build(MartinetConfig())
    ctrl = singular_loop_control()
    lift = integrate_lift(system, ctrl, (0.0, 0.0, 0.0), (0.0, 1e-3, 1.0))
    report = check_singular(system, lift, ctrl)
    assert report.verdict == "not_singular"
    # the input-direction gradient equals the second covector component
    assert report.residual == pytest.approx(1e-3, rel=1e-9)


def test_reversed_time_lift_is_also_singular():
    system = build(MartinetConfig())
    rsys = reverse_system(system)
    ctrl = singular_loop_control()
    lift = integrate_lift(rsys, ctrl, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))
    report = check_singular(rsys, lift, ctrl)
    assert report.verdict == "singular"
    assert report.residual < 1e-12


def test_regularity_battery_certifies_the_loop(battery):
    reg = battery.regularity
    assert reg.regular
    assert reg.verdicts[0] == "regular"  # first window already suffices
    assert reg.windows_tried == ((0.6, 0.3, 0.3),)
    assert reg.arwar_ranks == (2, 2, 2, 2, 2)
    assert reg.n_interior == reg.n_tested > 0
    assert reg.occupied_count > 10_000
    assert reg.ok


def test_neighborhood_battery_connects_pairs(battery):
    nb = battery.neighborhood
    assert nb.n_pairs == 25
    assert nb.fraction >= 0.9
    assert nb.band_cells > 500
    assert nb.ok


def test_verify_all_table(battery):
    names = [name for name, _ in battery.items]
    assert names == ["bracket_claims", "singular_orbit", "regularity", "neighborhood"]
    assert all(passed for _, passed in battery.items)
    assert battery.ok
    blob = battery.to_dict()
    assert blob["schema"] == 1
    assert blob["k"] == 3 and blob["seed"] == 0
    assert set(blob["checks"]) == {
        "bracket_claims",
        "singular_orbit",
        "regularity",
        "neighborhood",
    }
    assert blob["ok"] is True


@pytest.mark.slow
def test_sampled_verdicts_stable_across_seeds():
    from orbitreach.martinet import verify_neighborhood, verify_regularity

    for seed in (1, 2):
        cfg = MartinetConfig(seed=seed)
        assert verify_regularity(cfg).regular
        assert verify_neighborhood(cfg).ok


def test_symbolic_stages_are_deterministic():
    cfg = MartinetConfig()
    assert verify_bracket_claims(cfg).to_dict() == verify_bracket_claims(cfg).to_dict()
    assert verify_singular_orbit(cfg).to_dict() == verify_singular_orbit(cfg).to_dict()
