"""Polynomial vector fields and their Lie algebra.

Brackets are computed symbolically over the rationals, so identities such as
ad-power vanishing are decided exactly rather than numerically.  Iterated
brackets are enumerated as left-normed words w = (i1,...,iL) read as
[g_i1, [g_i2, [... [g_i(L-1), g_iL]...]]]; these span every layer of the
generated Lie algebra, which is all rank computations need.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .poly import Polynomial

RANK_TOL = 1e-9


@dataclass(frozen=True)
class PolyVectorField:
    """Vector field with polynomial components, one per coordinate."""

    components: tuple[Polynomial, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("field needs at least one component")
        dim = self.components[0].dim
        if any(c.dim != dim for c in self.components):
            raise ValueError("component dimensions disagree")
        if len(self.components) != dim:
            raise ValueError(
                f"field has {len(self.components)} components but polynomials live in dim {dim}"
            )

    @staticmethod
    def from_strings(exprs: Sequence[str]) -> "PolyVectorField":
        from .poly import parse_polynomial

        dim = len(exprs)
        return PolyVectorField(tuple(parse_polynomial(e, dim) for e in exprs))

    @staticmethod
    def zero(dim: int) -> "PolyVectorField":
        return PolyVectorField(tuple(Polynomial.zero(dim) for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        return PolyVectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField(tuple(-c for c in self.components))

    def scale(self, k) -> "PolyVectorField":
        return PolyVectorField(tuple(c.scale(k) for c in self.components))

    def evaluate(self, point: Sequence) -> np.ndarray:
        return np.array([c.eval_float(point) for c in self.components])

    def evaluate_exact(self, point: Sequence) -> tuple[Fraction, ...]:
        return tuple(c.eval_exact(point) for c in self.components)

    def jacobian(self) -> tuple[tuple[Polynomial, ...], ...]:
        """Row i = gradient of component i."""
        n = self.dim
        return tuple(tuple(self.components[i].diff(j) for j in range(n)) for i in range(n))

    def __str__(self) -> str:
        return "[" + ", ".join(str(c) for c in self.components) + "]"


def lie_bracket(x: PolyVectorField, y: PolyVectorField) -> PolyVectorField:
    """[X, Y] = (DY) X - (DX) Y, computed exactly."""
    if x.dim != y.dim:
        raise ValueError("field dimensions disagree")
    n = x.dim
    comps = []
    for i in range(n):
        acc = Polynomial.zero(n)
        yi = y.components[i]
        xi = x.components[i]
        for j in range(n):
            acc = acc + yi.diff(j) * x.components[j] - xi.diff(j) * y.components[j]
        comps.append(acc)
    return PolyVectorField(tuple(comps))


def ad_power(x: PolyVectorField, y: PolyVectorField, power: int) -> PolyVectorField:
    """Iterated bracket ad_X^power(Y); power 0 returns Y."""
    if power < 0:
        raise ValueError("power must be >= 0")
    out = y
    for _ in range(power):
        out = lie_bracket(x, out)
    return out


Word = tuple[int, ...]


@dataclass(frozen=True)
class LieHull:
    """Bracket words of the generators up to a depth, deduplicated.

    elements[k] = (word, field) with word read right-nested:
    (i1,...,iL) -> [g_i1, [g_i2, ... [g_i(L-1), g_iL]...]].
    """

    generators: tuple[PolyVectorField, ...]
    depth: int
    elements: tuple[tuple[Word, PolyVectorField], ...]

    @property
    def fields(self) -> tuple[PolyVectorField, ...]:
        return tuple(f for _, f in self.elements)

    def elements_up_to(self, depth: int) -> tuple[tuple[Word, PolyVectorField], ...]:
        return tuple((w, f) for w, f in self.elements if len(w) <= depth)


def generate_hull(
    generators: Sequence[PolyVectorField], depth: Optional[int] = None
) -> LieHull:
    """Enumerate left-normed bracket words up to `depth` (default dim + 2).

    Zero fields are dropped and syntactic duplicates pruned; pruning is safe
    because continuations of equal fields are equal.
    """
    gens = tuple(generators)
    if not gens:
        raise ValueError("need at least one generator")
    dim = gens[0].dim
    if any(g.dim != dim for g in gens):
        raise ValueError("generator dimensions disagree")
    if depth is None:
        depth = dim + 2
    if depth < 1:
        raise ValueError("depth must be >= 1")

    seen: dict[PolyVectorField, Word] = {}
    elements: list[tuple[Word, PolyVectorField]] = []
    layer: list[tuple[Word, PolyVectorField]] = []
    for i, g in enumerate(gens):
        if g.is_zero or g in seen:
            continue
        seen[g] = (i,)
        layer.append(((i,), g))
        elements.append(((i,), g))

    for _ in range(2, depth + 1):
        nxt: list[tuple[Word, PolyVectorField]] = []
        for i, g in enumerate(gens):
            if g.is_zero:
                continue
            for word, f in layer:
                bracket = lie_bracket(g, f)
                if bracket.is_zero or bracket in seen:
                    continue
                new_word = (i,) + word
                seen[bracket] = new_word
                nxt.append((new_word, bracket))
                elements.append((new_word, bracket))
        layer = nxt
        if not layer:
            break

    return LieHull(gens, depth, tuple(elements))


# -- rank computations -----------------------------------------------------


def _exact_rank(rows: list[list[Fraction]]) -> int:
    """Fraction Gaussian elimination; exact rank over Q."""
    if not rows:
        return 0
    m, n = len(rows), len(rows[0])
    mat = [list(r) for r in rows]
    rank = 0
    for col in range(n):
        pivot = None
        for r in range(rank, m):
            if mat[r][col]:
                pivot = r
                break
        if pivot is None:
            continue
        mat[rank], mat[pivot] = mat[pivot], mat[rank]
        pv = mat[rank][col]
        for r in range(rank + 1, m):
            if mat[r][col]:
                factor = mat[r][col] / pv
                for c in range(col, n):
                    mat[r][c] -= factor * mat[rank][c]
        rank += 1
        if rank == m:
            break
    return rank


def _is_exact_point(point: Sequence) -> bool:
    return all(isinstance(x, (int, Fraction)) and not isinstance(x, bool) for x in point)


def rank_at_point(
    fields_seq: Sequence[PolyVectorField], point: Sequence, tol: float = RANK_TOL
) -> int:
    """Rank of span{F(x) : F in fields_seq}.

    Exact rational rank when the point has int/Fraction coordinates,
    otherwise SVD with relative threshold `tol`.
    """
    fields_seq = list(fields_seq)
    if not fields_seq:
        return 0
    if _is_exact_point(point):
        rows = [list(f.evaluate_exact(point)) for f in fields_seq]
        return _exact_rank(rows)
    mat = np.array([f.evaluate(point) for f in fields_seq], dtype=float)
    if not np.all(np.isfinite(mat)):
        raise ValueError("field evaluation overflowed")
    smax = np.max(np.abs(mat))
    if smax == 0.0:
        return 0
    sv = np.linalg.svd(mat, compute_uv=False)
    return int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0


def lie_rank(hull: LieHull, point: Sequence, tol: float = RANK_TOL) -> int:
    return rank_at_point(hull.fields, point, tol)


@dataclass(frozen=True)
class LarcReport:
    dim: int
    depth: int
    entries: tuple[tuple[tuple, int], ...]  # (point, rank)
    passed: bool

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "depth": self.depth,
            "points": [
                {"point": [float(c) for c in pt], "rank": r} for pt, r in self.entries
            ],
            "passed": self.passed,
        }


def larc_check(system, points: Sequence[Sequence], depth: Optional[int] = None) -> LarcReport:
    """Full-rank test of the generated Lie algebra at sample points.

    `system` provides generating_fields(); the check passes iff the hull
    evaluated at every sample point spans the whole tangent space.
    """
    gens = system.generating_fields()
    dim = gens[0].dim
    hull = generate_hull(gens, depth)
    entries = []
    ok = True
    for pt in points:
        r = lie_rank(hull, pt)
        entries.append((tuple(pt), r))
        ok = ok and (r == dim)
    return LarcReport(dim, hull.depth, tuple(entries), ok)
