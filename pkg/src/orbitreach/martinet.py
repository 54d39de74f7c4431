"""Flat benchmark system with degenerate bracket growth on a plane.

The system lives on the solid-cylinder quotient {x1 mod 2pi, x2^2 + x3^2 < 1}:

    x1' = 1,  x2' = u,  x3' = x2^k,   |u| <= 1,   k odd, k >= 3.

On the plane S = {x2 = 0} every iterated bracket up to depth k stays inside
the span of the two generating fields, so the bracket rank climbs to full
dimension only at depth k+1 there, while a single bracket already suffices
anywhere off the plane.  The drift loop through the origin,
Gamma = {(t, 0, 0) : t in [0, 2pi)}, is a closed orbit that carries a
singular covector lift and fails the drift-and-input bracket rank test at
every one of its points -- yet the sampled-reachability pipeline certifies it
as a regular closed orbit with a controllable neighborhood.  This module
bundles those checks into one reproducible battery.

Because the forward-reachable tube around the loop is extremely thin in the
third coordinate (its one-sided thickness grows only at high order in the
transverse displacement), the regularity grid must resolve that axis far more
finely than the other two; the battery's window schedule carries matching
anisotropic cell sizes.

Even k is refused: the checks here are only claimed for odd k.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .dynamics import ControlSystem, PiecewiseControl
from .extremals import (
    arwar_rank,
    check_extremal_conditions,
    check_singular,
    integrate_lift,
)
from .fields import PolyVectorField, ad_power, generate_hull, lie_bracket, rank_at_point
from .geometry import DomainConstraint, StateSpace, dist
from .orbits import (
    controllable_neighborhood_check,
    orbit_from_control,
    regularity_test,
)
from .poly import parse_polynomial
from .reach import ReachParams, Window
from .rng import child_seed

TWO_PI = 2.0 * math.pi
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class MartinetConfig:
    """Parameters for the verification battery.

    k: transverse degree (odd, >= 3).
    step: RK4 step for every integration in the battery.
    reach_budget: rollouts for the regularity grids (>= 200000 recommended).
    band_budget: rollouts for each neighborhood band grid.
    seed: root seed; every stage derives its own stream from it.
    """

    k: int = 3
    step: float = 1e-3
    reach_budget: int = 200_000
    band_budget: int = 50_000
    seed: int = 0

    def __post_init__(self):
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError("k must be an odd integer >= 3")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.reach_budget < 1 or self.band_budget < 1:
            raise ValueError("budgets must be positive")


def build(config: MartinetConfig) -> ControlSystem:
    """The benchmark control system for config.k."""
    space = StateSpace(
        dim=3,
        periods=(TWO_PI, None, None),
        constraints=(DomainConstraint(parse_polynomial("x2^2 + x3^2", 3), 1.0),),
    )
    return ControlSystem(
        space=space,
        kind="affine",
        drift=PolyVectorField.from_strings(["1", "0", f"x2^{config.k}"]),
        inputs=(PolyVectorField.from_strings(["0", "1", "0"]),),
        control_box=((-1.0, 1.0),),
    )


def plane_points(n: int = 5) -> list[tuple[int, int, int]]:
    """n distinct points of the degenerate plane along the drift loop.

    Integer coordinates keep every rank computation on the exact rational
    path; the first coordinate never appears in the fields, so x1 = 0..n-1
    (all inside one period for n <= 6) samples the loop without rounding."""
    if n > 6:
        raise ValueError("at most 6 integer points fit in one period")
    return [(j, 0, 0) for j in range(n)]


# -- bracket claims ------------------------------------------------------------------


@dataclass(frozen=True)
class BracketClaimsReport:
    """Exact symbolic identities plus the bracket-growth rank profile."""

    k: int
    first_bracket_matches: bool
    higher_powers_vanish: bool
    on_plane_profile: tuple[tuple[int, int], ...]  # (depth, rank), ranks on S
    off_plane_depth2_rank: int
    dim: int

    @property
    def profile_ok(self) -> bool:
        return all(
            (rank == 2 if depth <= self.k else rank == self.dim)
            for depth, rank in self.on_plane_profile
        )

    @property
    def ok(self) -> bool:
        return (
            self.first_bracket_matches
            and self.higher_powers_vanish
            and self.profile_ok
            and self.off_plane_depth2_rank == self.dim
        )

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "k": self.k,
            "first_bracket_matches": self.first_bracket_matches,
            "higher_powers_vanish": self.higher_powers_vanish,
            "on_plane_profile": [[d, r] for d, r in self.on_plane_profile],
            "off_plane_depth2_rank": self.off_plane_depth2_rank,
            "ok": self.ok,
        }


def verify_bracket_claims(config: MartinetConfig) -> BracketClaimsReport:
    """Check the exact identities and the depth/rank growth pattern.

    Identities: [X, Y] equals (0, 0, -k x2^(k-1)) as polynomials, and every
    iterated bracket of the drift applied twice or more to the input vanishes
    identically.  Profile: at five points of the plane S = {x2 = 0}, bracket
    words up to depth k span only rank 2 and depth k+1 reaches full rank;
    off the plane depth 2 already reaches full rank."""
    k = config.k
    system = build(config)
    x_field, y_field = system.drift, system.inputs[0]

    expected = PolyVectorField.from_strings(["0", "0", f"-{k}*x2^{k - 1}"])
    first = (lie_bracket(x_field, y_field) - expected).is_zero
    higher = all(ad_power(x_field, y_field, power).is_zero for power in range(2, 7))

    hull = generate_hull([x_field, y_field], depth=k + 1)
    profile = []
    for depth in range(1, k + 2):
        layer = [f for _, f in hull.elements_up_to(depth)]
        rank = max(rank_at_point(layer, pt) for pt in plane_points())
        profile.append((depth, rank))
    off_plane = [f for _, f in hull.elements_up_to(2)]
    off_rank = rank_at_point(off_plane, (0, Fraction(1, 2), 0))

    return BracketClaimsReport(
        k=k,
        first_bracket_matches=first,
        higher_powers_vanish=higher,
        on_plane_profile=tuple(profile),
        off_plane_depth2_rank=off_rank,
        dim=3,
    )


# -- singular orbit ------------------------------------------------------------------


@dataclass(frozen=True)
class SingularOrbitReport:
    """First-order condition residuals for the drift-loop lift."""

    closure_gap: float
    cond_i: float
    cond_ii: float
    cond_iii: float
    cond_iv: Optional[float]
    singular_verdict: str
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.closure_gap < self.tol
            and self.cond_i < self.tol
            and self.cond_ii < self.tol
            and self.cond_iii < self.tol
            and self.cond_iv is not None
            and self.cond_iv < self.tol
            and self.singular_verdict == "singular"
        )

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "closure_gap": self.closure_gap,
            "cond_i": self.cond_i,
            "cond_ii": self.cond_ii,
            "cond_iii": self.cond_iii,
            "cond_iv": self.cond_iv,
            "singular_verdict": self.singular_verdict,
            "tol": self.tol,
            "ok": self.ok,
        }


def singular_loop_control() -> PiecewiseControl:
    """Zero input over one full drift period."""
    return PiecewiseControl(((TWO_PI, (0.0,)),))


def verify_singular_orbit(config: MartinetConfig) -> SingularOrbitReport:
    """Lift the drift loop with the covector (0, 0, 1) and grade it.

    The loop from the origin with u = 0 must close within 1e-9, satisfy the
    dynamics/zero-Hamiltonian/maximum conditions to the same tolerance, and
    be confirmed singular (vanishing input-direction gradient)."""
    system = build(config)
    ctrl = singular_loop_control()
    lift = integrate_lift(system, ctrl, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0), step=config.step)
    closure = float(dist(system.space, lift.base.states[-1], lift.base.states[0]))
    conds = check_extremal_conditions(system, lift, ctrl, step=config.step)
    sing = check_singular(system, lift, ctrl)
    return SingularOrbitReport(
        closure_gap=closure,
        cond_i=conds.cond_i,
        cond_ii=conds.cond_ii,
        cond_iii=conds.cond_iii,
        cond_iv=sing.residual,
        singular_verdict=sing.verdict,
        tol=RESIDUAL_TOL,
    )


# -- regularity ----------------------------------------------------------------------

# full window widths paired with per-axis cell sizes; the third axis must be
# resolved far below the tube thickness for the interior test to see a block
REGULARITY_SCHEDULE: tuple[tuple[tuple[float, float, float], tuple[float, float, float]], ...] = (
    ((0.6, 0.3, 0.3), (0.02, 0.02, 5e-7)),
    ((0.4, 0.2, 0.2), (0.01, 0.01, 1e-7)),
)
REGULARITY_RADIUS_CELLS = 2
REGULARITY_EXCLUDE_CELLS = 8


@dataclass(frozen=True)
class RegularityBatteryReport:
    """Outcome of the window schedule plus the rank failure along the loop."""

    verdicts: tuple[str, ...]  # one per window tried, in schedule order
    windows_tried: tuple[tuple[float, float, float], ...]
    regular: bool
    arwar_ranks: tuple[int, ...]
    n_interior: int
    n_tested: int
    occupied_count: int

    @property
    def arwar_fails_everywhere(self) -> bool:
        return all(r == 2 for r in self.arwar_ranks)

    @property
    def ok(self) -> bool:
        return self.regular and self.arwar_fails_everywhere

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "verdicts": list(self.verdicts),
            "windows_tried": [list(w) for w in self.windows_tried],
            "regular": self.regular,
            "arwar_ranks": list(self.arwar_ranks),
            "n_interior": self.n_interior,
            "n_tested": self.n_tested,
            "occupied_count": self.occupied_count,
            "ok": self.ok,
        }


def drift_loop_orbit(config: MartinetConfig, system: Optional[ControlSystem] = None):
    """The closed drift loop through the origin as a ClosedOrbit."""
    if system is None:
        system = build(config)
    return orbit_from_control(system, (0.0, 0.0, 0.0), singular_loop_control(), step=config.step)


def verify_regularity(config: MartinetConfig) -> RegularityBatteryReport:
    """Certify the drift loop regular by sampling, window by window.

    Windows are tried in schedule order and the search stops at the first
    regular verdict (the certificate is existential: one good window
    suffices).  Independently, the drift-and-input bracket rank must sit at
    2 < 3 at five points of the loop -- the loop is regular even though that
    sufficient rank condition fails everywhere on it."""
    system = build(config)
    orbit = drift_loop_orbit(config, system)

    verdicts: list[str] = []
    tried: list[tuple[float, float, float]] = []
    last = None
    for idx, (widths, cell_sizes) in enumerate(REGULARITY_SCHEDULE):
        window = Window.around((0.0, 0.0, 0.0), widths)
        params = ReachParams(
            budget=config.reach_budget,
            max_time=2.0,
            h=cell_sizes,
            seed=child_seed(config.seed, "regularity", idx),
            step=config.step,
        )
        report = regularity_test(
            system,
            orbit,
            0,
            window,
            params,
            radius_cells=REGULARITY_RADIUS_CELLS,
            exclude_cells=REGULARITY_EXCLUDE_CELLS,
        )
        verdicts.append(report.verdict)
        tried.append(widths)
        last = report
        if report.verdict == "regular":
            break

    ranks = tuple(
        arwar_rank(system, pt, depth=config.k + 1) for pt in plane_points()
    )
    return RegularityBatteryReport(
        verdicts=tuple(verdicts),
        windows_tried=tuple(tried),
        regular=verdicts[-1] == "regular",
        arwar_ranks=ranks,
        n_interior=last.n_interior,
        n_tested=last.n_tested,
        occupied_count=last.occupied_count,
    )


# -- controllable neighborhood -------------------------------------------------------

BAND_WINDOW_WIDTHS = (TWO_PI, 0.3, 0.3)
BAND_CELL_SIZE = 0.05
BAND_SUCCESS_FRACTION = 0.9


@dataclass(frozen=True)
class NeighborhoodBatteryReport:
    """Connected fraction of random pairs in the two-sided reachable band."""

    n_pairs: int
    n_connected: int
    band_cells: int
    fraction: float
    required: float

    @property
    def ok(self) -> bool:
        return self.fraction >= self.required

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "n_pairs": self.n_pairs,
            "n_connected": self.n_connected,
            "band_cells": self.band_cells,
            "fraction": self.fraction,
            "required": self.required,
            "ok": self.ok,
        }


def verify_neighborhood(config: MartinetConfig, n_pairs: int = 25) -> NeighborhoodBatteryReport:
    """Steer random pairs of the band around the loop through the base point.

    The band is deliberately gridded coarsely and isotropically: it only has
    to be populated in both time directions, not to resolve the thin tube."""
    system = build(config)
    orbit = drift_loop_orbit(config, system)
    window = Window.around((0.0, 0.0, 0.0), BAND_WINDOW_WIDTHS)
    params = ReachParams(
        budget=config.band_budget,
        max_time=8.0,
        h=BAND_CELL_SIZE,
        seed=child_seed(config.seed, "neighborhood"),
        step=max(config.step, 2e-3),
    )
    report = controllable_neighborhood_check(system, orbit, window, params, n_pairs=n_pairs)
    return NeighborhoodBatteryReport(
        n_pairs=report.n_pairs,
        n_connected=report.n_connected,
        band_cells=report.band_cells,
        fraction=report.fraction,
        required=BAND_SUCCESS_FRACTION,
    )


# -- full battery --------------------------------------------------------------------


@dataclass(frozen=True)
class MartinetVerification:
    """Pass/fail table over the whole battery."""

    config: MartinetConfig
    brackets: BracketClaimsReport
    singular_orbit: SingularOrbitReport
    regularity: RegularityBatteryReport
    neighborhood: NeighborhoodBatteryReport

    @property
    def items(self) -> tuple[tuple[str, bool], ...]:
        return (
            ("bracket_claims", self.brackets.ok),
            ("singular_orbit", self.singular_orbit.ok),
            ("regularity", self.regularity.ok),
            ("neighborhood", self.neighborhood.ok),
        )

    @property
    def ok(self) -> bool:
        return all(passed for _, passed in self.items)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "k": self.config.k,
            "seed": self.config.seed,
            "checks": {
                "bracket_claims": self.brackets.to_dict(),
                "singular_orbit": self.singular_orbit.to_dict(),
                "regularity": self.regularity.to_dict(),
                "neighborhood": self.neighborhood.to_dict(),
            },
            "ok": self.ok,
        }


def verify_all(config: MartinetConfig = MartinetConfig()) -> MartinetVerification:
    """Run every stage of the battery with one root seed."""
    return MartinetVerification(
        config=config,
        brackets=verify_bracket_claims(config),
        singular_orbit=verify_singular_orbit(config),
        regularity=verify_regularity(config),
        neighborhood=verify_neighborhood(config),
    )
