"""State spaces: product charts with optional periodic axes and open
polynomial domain constraints.

A space is R^n with some axes wrapped to a period (circle factors) and an
optional list of strict polynomial inequalities carving out an open domain,
e.g. the solid cylinder x2^2 + x3^2 < 1.  Points are plain float arrays in
chart coordinates; `wrap` canonicalizes them and `dist` is the product
metric using per-axis shortest wrapped differences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .poly import Polynomial

Point = np.ndarray


class OutOfDomainError(ValueError):
    """Raised when a point violates a domain constraint."""


@dataclass(frozen=True)
class DomainConstraint:
    """Strict inequality poly(x) < bound."""

    poly: Polynomial
    bound: float

    def satisfied(self, coords: Sequence) -> bool:
        return self.poly.eval_float(coords) < self.bound

    def __str__(self) -> str:
        return f"{self.poly} < {self.bound}"


@dataclass(frozen=True)
class StateSpace:
    dim: int
    periods: tuple[Optional[float], ...] = ()
    constraints: tuple[DomainConstraint, ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        periods = self.periods if self.periods else (None,) * self.dim
        if len(periods) != self.dim:
            raise ValueError("periods length must equal dim")
        for p in periods:
            if p is not None and not p > 0:
                raise ValueError(f"period must be positive, got {p}")
        for c in self.constraints:
            if c.poly.dim != self.dim:
                raise ValueError("constraint dimension mismatch")
        object.__setattr__(self, "periods", tuple(periods))

    @property
    def period_array(self) -> np.ndarray:
        """Periods as floats with inf on non-periodic axes."""
        return np.array([p if p is not None else np.inf for p in self.periods])


def _as_coords(space: StateSpace, point: Sequence) -> np.ndarray:
    arr = np.asarray(point, dtype=float)
    if arr.shape != (space.dim,):
        raise ValueError(f"expected {space.dim} coordinates, got shape {arr.shape}")
    return arr


def wrap(space: StateSpace, raw: Sequence) -> Point:
    """Canonical representative: periodic axes reduced to [0, period).

    Raises OutOfDomainError if the wrapped point violates a constraint.
    """
    x = _as_coords(space, raw).copy()
    for i, p in enumerate(space.periods):
        if p is not None:
            x[i] %= p
    for c in space.constraints:
        if not c.satisfied(x):
            raise OutOfDomainError(f"constraint violated: {c} at {x.tolist()}")
    x.flags.writeable = False
    return x


def contains(space: StateSpace, point: Sequence) -> bool:
    """True iff the point satisfies every domain constraint."""
    x = _as_coords(space, point).copy()
    for i, p in enumerate(space.periods):
        if p is not None:
            x[i] %= p
    return all(c.satisfied(x) for c in space.constraints)


def diff(space: StateSpace, a: Sequence, b: Sequence) -> np.ndarray:
    """Per-axis displacement a - b, shortest representative on periodic axes."""
    d = _as_coords(space, a) - _as_coords(space, b)
    for i, p in enumerate(space.periods):
        if p is not None:
            d[i] = (d[i] + p / 2.0) % p - p / 2.0
    return d


def diff_batch(space: StateSpace, pts: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Vectorized diff: pts is (m, dim), ref is (dim,)."""
    d = pts - ref
    for i, p in enumerate(space.periods):
        if p is not None:
            d[:, i] = (d[:, i] + p / 2.0) % p - p / 2.0
    return d


def dist(space: StateSpace, a: Sequence, b: Sequence) -> float:
    """Euclidean length of the wrapped displacement."""
    return float(np.linalg.norm(diff(space, a, b)))
