import math

import numpy as np
import pytest

from orbitreach.geometry import (
    DomainConstraint,
    OutOfDomainError,
    StateSpace,
    contains,
    diff,
    dist,
    wrap,
)
from orbitreach.poly import parse_polynomial

TWO_PI = 2.0 * math.pi


def cylinder_space():
    return StateSpace(
        3,
        (TWO_PI, None, None),
        (DomainConstraint(parse_polynomial("x2^2 + x3^2", 3), 1.0),),
    )


def test_wrap_reduces_periodic_axes():
    space = StateSpace(2, (TWO_PI, TWO_PI))
    x = wrap(space, (TWO_PI + 0.1, -0.5))
    assert x[0] == pytest.approx(0.1)
    assert x[1] == pytest.approx(TWO_PI - 0.5)
    assert not x.flags.writeable


def test_wrap_idempotent_random():
    space = StateSpace(3, (TWO_PI, None, 5.0))
    rng = np.random.default_rng(7)
    for _ in range(200):
        raw = rng.uniform(-30, 30, 3)
        once = wrap(space, raw)
        assert np.array_equal(wrap(space, once), once)


def test_wrap_checks_domain():
    space = cylinder_space()
    wrap(space, (0.0, 0.999, 0.0))
    with pytest.raises(OutOfDomainError):
        wrap(space, (0.0, 1.0, 0.0))
    assert contains(space, (1.0, 0.3, -0.4))
    assert not contains(space, (1.0, 0.8, 0.7))


def test_dist_shortest_wrap():
    space = StateSpace(2, (TWO_PI, TWO_PI))
    assert dist(space, (0.1, 0.0), (TWO_PI - 0.1, 0.0)) == pytest.approx(0.2)
    assert dist(space, (0.0, 0.0), (math.pi, 0.0)) == pytest.approx(math.pi)
    d = diff(space, (0.1, 0.0), (TWO_PI - 0.1, 0.0))
    assert d[0] == pytest.approx(0.2)


def test_dist_metric_properties_bulk():
    space = StateSpace(3, (TWO_PI, None, 4.0))
    rng = np.random.default_rng(11)
    pts = rng.uniform(-10, 10, (10_000, 3, 3))
    for a, b, c in pts[:50]:
        assert dist(space, a, b) == pytest.approx(dist(space, b, a))
    # vectorized triangle inequality over all 10^4 triples
    def pair(u, v):
        d = u - v
        d[:, 0] = (d[:, 0] + math.pi) % TWO_PI - math.pi
        d[:, 2] = (d[:, 2] + 2.0) % 4.0 - 2.0
        return np.linalg.norm(d, axis=1)

    ab = pair(pts[:, 0], pts[:, 1])
    bc = pair(pts[:, 1], pts[:, 2])
    ac = pair(pts[:, 0], pts[:, 2])
    assert np.all(ac <= ab + bc + 1e-9)
    assert dist(space, (1.0, 2.0, 3.0), (1.0, 2.0, 3.0)) == 0.0


def test_dimension_mismatch_rejected():
    space = StateSpace(2)
    with pytest.raises(ValueError):
        dist(space, (1.0,), (0.0, 0.0))
    with pytest.raises(ValueError):
        wrap(space, (1.0, 2.0, 3.0))


def test_space_validation():
    with pytest.raises(ValueError):
        StateSpace(0)
    with pytest.raises(ValueError):
        StateSpace(2, (1.0,))
    with pytest.raises(ValueError):
        StateSpace(1, (-2.0,))
    with pytest.raises(ValueError):
        StateSpace(1, (None,), (DomainConstraint(parse_polynomial("x1 + x2", 2), 1.0),))
