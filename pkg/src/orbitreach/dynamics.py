"""Control systems and fixed-step RK4 integration.

Two system kinds: control-affine (drift + input fields, box-valued controls)
and finite (a finite family of labelled vector fields).  Controls are
piecewise constant; segment boundaries are hit exactly by taking whole steps
plus one remainder step.  Integration runs in the covering space (periodic
axes are not wrapped mid-trajectory), which keeps consecutive states
consistent with single RK4 steps; wrapping happens at the metric/query layer.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .fields import PolyVectorField
from .geometry import StateSpace, contains, dist
from .poly import Polynomial

DEFAULT_STEP = 1e-3
GLUE_TOL = 1e-6

ControlValue = Union[tuple[float, ...], str]


class ControlValueError(ValueError):
    """Control value outside the admissible set."""


class IntegrationOverflowError(RuntimeError):
    """State became non-finite during integration."""


class GlueGapError(ValueError):
    """Trajectory concatenation gap exceeded tolerance."""


@dataclass(frozen=True)
class ControlSystem:
    """Polynomial control system on a state space.

    kind "affine": x' = drift(x) + sum_i u_i inputs[i](x), u in control_box.
    kind "finite": x' = f_label(x) with (label, field) pairs in controls.
    """

    space: StateSpace
    kind: str
    drift: Optional[PolyVectorField] = None
    inputs: tuple[PolyVectorField, ...] = ()
    control_box: tuple[tuple[float, float], ...] = ()
    controls: tuple[tuple[str, PolyVectorField], ...] = ()

    def __post_init__(self):
        n = self.space.dim
        if self.kind == "affine":
            if self.drift is None or self.drift.dim != n:
                raise ValueError("affine system needs a drift field of the right dimension")
            if not self.inputs:
                raise ValueError("affine system needs at least one input field")
            if any(f.dim != n for f in self.inputs):
                raise ValueError("input field dimension mismatch")
            if len(self.control_box) != len(self.inputs):
                raise ValueError("control_box must give one interval per input")
            for lo, hi in self.control_box:
                if not lo <= hi:
                    raise ValueError(f"empty control interval [{lo}, {hi}]")
        elif self.kind == "finite":
            if not self.controls:
                raise ValueError("finite system needs a nonempty control set")
            labels = [lbl for lbl, _ in self.controls]
            if len(set(labels)) != len(labels):
                raise ValueError("duplicate control labels")
            if any(f.dim != n for _, f in self.controls):
                raise ValueError("control field dimension mismatch")
        else:
            raise ValueError(f"unknown system kind {self.kind!r}")

    @property
    def num_inputs(self) -> int:
        return len(self.inputs) if self.kind == "affine" else 1

    def generating_fields(self) -> tuple[PolyVectorField, ...]:
        """Fields generating the system's Lie algebra: drift and inputs for
        affine systems, the control fields for finite ones."""
        if self.kind == "affine":
            return (self.drift,) + self.inputs
        return tuple(f for _, f in self.controls)

    def validate_control_value(self, u: ControlValue) -> None:
        if self.kind == "affine":
            if isinstance(u, str) or len(u) != len(self.inputs):
                raise ControlValueError(f"expected {len(self.inputs)} control components, got {u!r}")
            for v, (lo, hi) in zip(u, self.control_box):
                if not lo <= v <= hi:
                    raise ControlValueError(f"control value {v} outside [{lo}, {hi}]")
        else:
            if not isinstance(u, str) or u not in {lbl for lbl, _ in self.controls}:
                raise ControlValueError(f"unknown control label {u!r}")

    def field_for_control(self, u: ControlValue) -> PolyVectorField:
        """Symbolic vector field f_u (exact; float controls become exact
        binary fractions)."""
        self.validate_control_value(u)
        if self.kind == "finite":
            return dict(self.controls)[u]
        f = self.drift
        for v, g in zip(u, self.inputs):
            f = f + g.scale(Fraction(v))
        return f

    def control_vertices(self) -> list[tuple[float, ...]]:
        """Vertices of the control box (affine systems)."""
        if self.kind != "affine":
            raise ValueError("control_vertices only applies to affine systems")
        verts: list[tuple[float, ...]] = [()]
        for lo, hi in self.control_box:
            ext = [lo, hi] if hi > lo else [lo]
            verts = [v + (e,) for v in verts for e in ext]
        return verts


def reverse_system(system: ControlSystem) -> ControlSystem:
    """Time reversal: every admissible field negated (same control set)."""
    if system.kind == "affine":
        return ControlSystem(
            space=system.space,
            kind="affine",
            drift=-system.drift,
            inputs=tuple(-f for f in system.inputs),
            control_box=system.control_box,
        )
    return ControlSystem(
        space=system.space,
        kind="finite",
        controls=tuple((lbl, -f) for lbl, f in system.controls),
    )


@dataclass(frozen=True)
class PiecewiseControl:
    """Piecewise-constant control schedule: (duration, value) segments."""

    segments: tuple[tuple[float, ControlValue], ...]

    def __post_init__(self):
        for dur, _ in self.segments:
            if not dur > 0:
                raise ValueError(f"segment durations must be positive, got {dur}")

    @staticmethod
    def constant(duration: float, value: ControlValue) -> "PiecewiseControl":
        return PiecewiseControl(((float(duration), value),))

    @property
    def total_time(self) -> float:
        return float(sum(d for d, _ in self.segments))

    def reversed_schedule(self) -> "PiecewiseControl":
        """Segments in reverse order; with the reversed system this retraces
        a trajectory from its endpoint back to its start."""
        return PiecewiseControl(tuple(reversed(self.segments)))

    def value_at(self, t: float) -> ControlValue:
        """Value active at time t (right-open segments; t past the end gets
        the last value)."""
        if not self.segments:
            raise ValueError("empty control has no values")
        acc = 0.0
        for dur, val in self.segments:
            acc += dur
            if t < acc:
                return val
        return self.segments[-1][1]

    def concat(self, other: "PiecewiseControl") -> "PiecewiseControl":
        return PiecewiseControl(self.segments + other.segments)


@dataclass(frozen=True)
class Trajectory:
    """Sampled trajectory: times (m,), states (m, n) in covering coordinates."""

    times: np.ndarray
    states: np.ndarray
    control: PiecewiseControl
    truncated: bool = False
    glue_gap: float = 0.0

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


# -- compiled evaluators -----------------------------------------------------


def _py_expr(poly: Polynomial, var: str) -> str:
    # powers become multiplication chains so the scalar and vectorized
    # evaluators perform identical IEEE operations (witness replay must
    # reproduce batch-computed states bit for bit)
    if poly.is_zero:
        return "0.0"
    parts = []
    for exps, coef in poly.terms:
        factors = [repr(float(coef))]
        for j, e in enumerate(exps):
            factors.extend([f"{var}{j}"] * e)
        parts.append("*".join(factors))
    return " + ".join(parts)


def _compile_source(src: str, name: str):
    ns: dict = {"np": np}
    exec(compile(src, f"<orbitreach:{name}>", "exec"), ns)
    return ns[name]


@lru_cache(maxsize=None)
def compiled_scalar_rhs(system: ControlSystem):
    """rhs(x_tuple, u) -> tuple, generated source specialized to the system."""
    n = system.space.dim
    unpack = ", ".join(f"x{j}" for j in range(n)) + ("," if n == 1 else "")
    if system.kind == "affine":
        k = len(system.inputs)
        u_unpack = ", ".join(f"u{j}" for j in range(k)) + ("," if k == 1 else "")
        comps = []
        for i in range(n):
            expr = _py_expr(system.drift.components[i], "x")
            for j, g in enumerate(system.inputs):
                gi = g.components[i]
                if not gi.is_zero:
                    expr += f" + u{j}*({_py_expr(gi, 'x')})"
            comps.append(expr)
        body = ", ".join(comps) + ("," if n == 1 else "")
        src = f"def rhs(x, u):\n    {unpack} = x\n    {u_unpack} = u\n    return ({body})\n"
        return _compile_source(src, "rhs")
    table = {}
    for lbl, f in system.controls:
        body = ", ".join(_py_expr(c, "x") for c in f.components) + ("," if n == 1 else "")
        src = f"def rhs(x, u):\n    {unpack} = x\n    return ({body})\n"
        table[lbl] = _compile_source(src, "rhs")

    def rhs(x, u):
        return table[u](x, u)

    return rhs


@lru_cache(maxsize=None)
def compiled_batch_rhs(system: ControlSystem):
    """Vectorized rhs(X (B,n), U) -> (B,n).

    For affine systems U is a (B, k) float array; for finite systems U is a
    (B,) integer array indexing into the system's control label order.
    """
    n = system.space.dim
    reads = "\n".join(f"    x{j} = X[:, {j}]" for j in range(n))
    if system.kind == "affine":
        lines = [f"def rhs(X, U):", reads, "    out = np.empty_like(X)"]
        for i in range(n):
            expr = _py_expr(system.drift.components[i], "x")
            for j, g in enumerate(system.inputs):
                gi = g.components[i]
                if not gi.is_zero:
                    expr += f" + U[:, {j}]*({_py_expr(gi, 'x')})"
            lines.append(f"    out[:, {i}] = {expr}")
        lines.append("    return out")
        return _compile_source("\n".join(lines) + "\n", "rhs")
    # finite: evaluate each labelled field on its subset of rows
    field_fns = []
    for lbl, f in system.controls:
        lines = [f"def rhs(X):", reads, "    out = np.empty_like(X)"]
        for i in range(n):
            lines.append(f"    out[:, {i}] = {_py_expr(f.components[i], 'x')}")
        lines.append("    return out")
        field_fns.append(_compile_source("\n".join(lines) + "\n", "rhs"))

    def rhs(X, U):
        out = np.empty_like(X)
        for idx, fn in enumerate(field_fns):
            mask = U == idx
            if np.any(mask):
                out[mask] = fn(X[mask])
        return out

    return rhs


# -- integration -------------------------------------------------------------


def _rk4_step(rhs, x: tuple, u, dt: float) -> tuple:
    k1 = rhs(x, u)
    h2 = 0.5 * dt
    k2 = rhs(tuple(xi + h2 * a for xi, a in zip(x, k1)), u)
    k3 = rhs(tuple(xi + h2 * a for xi, a in zip(x, k2)), u)
    k4 = rhs(tuple(xi + dt * a for xi, a in zip(x, k3)), u)
    s = dt / 6.0
    return tuple(xi + s * (a + 2.0 * (b + c) + d) for xi, a, b, c, d in zip(x, k1, k2, k3, k4))


def _segment_steps(duration: float, step: float) -> tuple[int, float]:
    """Whole steps plus remainder hitting the segment boundary exactly."""
    n_full = int(duration / step + 1e-9)
    rem = duration - n_full * step
    if rem < step * 1e-9:
        rem = 0.0
    return n_full, rem


def integrate(
    system: ControlSystem,
    x0: Sequence,
    control: PiecewiseControl,
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """RK4 rollout of a piecewise-constant control from x0.

    The trajectory is truncated (flagged, not an error) if it leaves the
    domain; a non-finite state raises IntegrationOverflowError.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    x = tuple(float(v) for v in x0)
    if len(x) != system.space.dim:
        raise ValueError(f"x0 has {len(x)} coordinates, expected {system.space.dim}")
    if not contains(system.space, x):
        raise ValueError("x0 violates a domain constraint")
    for _, u in control.segments:
        system.validate_control_value(u)

    rhs = compiled_scalar_rhs(system)
    times = [0.0]
    states = [x]
    t_base = 0.0
    truncated = False
    has_constraints = bool(system.space.constraints)
    for dur, u in control.segments:
        if truncated:
            break
        n_full, rem = _segment_steps(dur, step)
        plan = [step] * n_full + ([rem] if rem else [])
        t_local = 0.0
        for j, dt in enumerate(plan):
            try:
                x = _rk4_step(rhs, x, u, dt)
            except OverflowError as exc:
                raise IntegrationOverflowError(f"state overflow at t={t_base + t_local}") from exc
            if not all(np.isfinite(v) for v in x):
                raise IntegrationOverflowError(f"non-finite state at t={t_base + t_local}")
            t_local = dur if j == len(plan) - 1 else (j + 1) * step
            if has_constraints and not contains(system.space, x):
                truncated = True
                break
            times.append(t_base + t_local)
            states.append(x)
        t_base += dur if not truncated else t_local

    return Trajectory(
        times=np.array(times),
        states=np.array(states, dtype=float).reshape(len(times), system.space.dim),
        control=control,
        truncated=truncated,
    )


def concat(
    space: StateSpace, first: Trajectory, second: Trajectory, glue_tol: float = GLUE_TOL
) -> Trajectory:
    """Join trajectories end-to-start; the wrapped gap must be within glue_tol."""
    gap = dist(space, first.end, second.start)
    if gap > glue_tol:
        raise GlueGapError(f"glue gap {gap:.3e} exceeds tolerance {glue_tol:.1e}")
    shift = first.times[-1] - second.times[0]
    times = np.concatenate([first.times, second.times[1:] + shift])
    # re-express the tail in the head's covering sheet so state rows stay
    # step-consistent even when the junction wraps a periodic axis
    offset = first.end - second.start
    states = np.concatenate([first.states, second.states[1:] + offset])
    return Trajectory(
        times=times,
        states=states,
        control=first.control.concat(second.control),
        truncated=second.truncated,
        glue_gap=first.glue_gap + second.glue_gap + gap,
    )


def trajectory_to_csv(system: ControlSystem, traj: Trajectory, target) -> None:
    """Write rows t,x1..xn,u1..uk (uk is the label for finite systems)."""
    n = system.space.dim
    k = len(system.inputs) if system.kind == "affine" else 1
    own = isinstance(target, (str, bytes, os.PathLike))
    fh = open(target, "w", newline="") if own else target
    try:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i+1}" for i in range(n)] + [f"u{i+1}" for i in range(k)])
        for t, row in zip(traj.times, traj.states):
            u = traj.control.value_at(float(t)) if traj.control.segments else ("",) * k
            uvals = [u] if isinstance(u, str) else list(u)
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row] + uvals)
    finally:
        if own:
            fh.close()
