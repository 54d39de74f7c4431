import math

import pytest

from orbitreach.dynamics import ControlSystem
from orbitreach.fields import PolyVectorField
from orbitreach.geometry import DomainConstraint, StateSpace
from orbitreach.poly import parse_polynomial

TWO_PI = 2.0 * math.pi


def make_martinet(k: int = 3) -> ControlSystem:
    """Flat Martinet-type system on the solid-cylinder quotient:
    x1' = 1, x2' = u, x3' = x2^k with |u| <= 1, x1 periodic."""
    space = StateSpace(
        dim=3,
        periods=(TWO_PI, None, None),
        constraints=(DomainConstraint(parse_polynomial("x2^2 + x3^2", 3), 1.0),),
    )
    return ControlSystem(
        space=space,
        kind="affine",
        drift=PolyVectorField.from_strings(["1", "0", f"x2^{k}"]),
        inputs=(PolyVectorField.from_strings(["0", "1", "0"]),),
        control_box=((-1.0, 1.0),),
    )


def make_torus_shift() -> ControlSystem:
    """x1' = 1, x2' = u on the 2-torus."""
    space = StateSpace(dim=2, periods=(TWO_PI, TWO_PI))
    return ControlSystem(
        space=space,
        kind="affine",
        drift=PolyVectorField.from_strings(["1", "0"]),
        inputs=(PolyVectorField.from_strings(["0", "1"]),),
        control_box=((-1.0, 1.0),),
    )


def make_degenerate_input() -> ControlSystem:
    """x1' = 1, x2' = x2*u on the 2-torus; the input vanishes on {x2=0}."""
    space = StateSpace(dim=2, periods=(TWO_PI, TWO_PI))
    return ControlSystem(
        space=space,
        kind="affine",
        drift=PolyVectorField.from_strings(["1", "0"]),
        inputs=(PolyVectorField.from_strings(["0", "x2"]),),
        control_box=((-1.0, 1.0),),
    )


def make_scalar_integrator() -> ControlSystem:
    """x' = u on the line, |u| <= 1."""
    space = StateSpace(dim=1)
    return ControlSystem(
        space=space,
        kind="affine",
        drift=PolyVectorField.from_strings(["0"]),
        inputs=(PolyVectorField.from_strings(["1"]),),
        control_box=((-1.0, 1.0),),
    )


def make_heisenberg() -> ControlSystem:
    """x1' = 1, x2' = u, x3' = x2: bracket-generating at depth 2 everywhere."""
    space = StateSpace(dim=3)
    return ControlSystem(
        space=space,
        kind="affine",
        drift=PolyVectorField.from_strings(["1", "0", "x2"]),
        inputs=(PolyVectorField.from_strings(["0", "1", "0"]),),
        control_box=((-1.0, 1.0),),
    )


@pytest.fixture
def martinet3():
    return make_martinet(3)


@pytest.fixture
def torus_shift():
    return make_torus_shift()


@pytest.fixture
def degenerate_input():
    return make_degenerate_input()


@pytest.fixture
def scalar_integrator():
    return make_scalar_integrator()
