"""Sampled reachable sets over a box window: occupancy grids, interior
tests, and the reachability property checks built on them.

The engine grows a forward occupancy grid by frontier expansion: states
already reached are extended by random constant-control arcs, so the sampled
set is closed under control concatenation and coverage compounds instead of
restarting from the base point.  Rollouts that leave the window (or the
domain) are truncated at the exit; everything recorded stayed inside.

Every occupied cell keeps a witness: the chain of (duration, control)
segments that first reached it.  Durations are whole multiples of the
integrator step and the batched stepper performs the same IEEE operations as
the scalar one, so replaying a witness through `dynamics.integrate`
reproduces the stored state bit for bit.

Determinism: all randomness comes from one seed, consumed in fixed-size
batches ("waves") of 4096 rollouts.  The budget is rounded up to whole
waves, so the rollout stream for a smaller budget is a prefix of the stream
for a larger one and occupancy grows monotonically with budget.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from itertools import product
from typing import Optional, Sequence, Union

import numpy as np

from .dynamics import (
    DEFAULT_STEP,
    ControlSystem,
    PiecewiseControl,
    reverse_system,
)
from .geometry import StateSpace, contains, diff, diff_batch, wrap
from .rng import child_seed, derive

WAVE_SIZE = 4096
DEFAULT_RADIUS_CELLS = 2
DEFAULT_H = 0.02


class OutOfWindowError(ValueError):
    """Raised when a queried point lies outside the grid window."""


@dataclass(frozen=True)
class Window:
    """Axis-aligned box neighbourhood, stored as center and half-widths.

    The box is half-open per axis: offsets in [-half_width, +half_width).
    On periodic axes offsets are taken by shortest wrap, so a window may
    straddle the seam (and may cover the whole circle when the width equals
    the period).
    """

    center: tuple[float, ...]
    half_widths: tuple[float, ...]

    def __post_init__(self):
        if len(self.center) != len(self.half_widths):
            raise ValueError("center and half_widths lengths disagree")
        if not self.center:
            raise ValueError("window needs at least one axis")
        if any(not hw > 0 for hw in self.half_widths):
            raise ValueError("half widths must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "half_widths", tuple(float(h) for h in self.half_widths))

    @staticmethod
    def around(point: Sequence, sizes) -> "Window":
        """Window centered at `point` with the given full widths (one value
        per axis, or a single scalar applied to every axis)."""
        pt = tuple(float(v) for v in point)
        if np.isscalar(sizes):
            widths = (float(sizes),) * len(pt)
        else:
            widths = tuple(float(s) for s in sizes)
        return Window(pt, tuple(w / 2.0 for w in widths))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        return tuple(
            (c - h, c + h) for c, h in zip(self.center, self.half_widths)
        )


def validate_window(space: StateSpace, window: Window) -> None:
    """Check the window fits the space: right dimension, no self-overlap on
    periodic axes, and all box corners inside the domain (sufficient for the
    convex constraints used here)."""
    if window.dim != space.dim:
        raise ValueError(f"window dim {window.dim} != space dim {space.dim}")
    for hw, p in zip(window.half_widths, space.periods):
        if p is not None and 2.0 * hw > p * (1.0 + 1e-12):
            raise ValueError(f"window width {2 * hw} exceeds period {p}")
    if space.constraints:
        for corner in product(*window.box):
            if not contains(space, corner):
                raise ValueError(f"window corner {corner} outside the domain")


@dataclass(frozen=True)
class ReachParams:
    """Sampling parameters for reach_grid.

    budget: number of rollouts (rounded up to whole internal batches).
    max_time: total time horizon per witness chain.
    max_segments: max control segments per chain; each random arc lasts at
        most max_time/max_segments.
    h: requested cell size, scalar or per-axis; the effective size divides
        the window exactly and is stored on the grid.
    step: RK4 step; arc durations are whole multiples of it.
    """

    budget: int = 20000
    max_time: float = 4.0
    max_segments: int = 8
    h: Union[float, tuple[float, ...]] = DEFAULT_H
    seed: int = 0
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("budget must be >= 0")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if self.max_segments < 1:
            raise ValueError("max_segments must be >= 1")
        hs = (self.h,) if np.isscalar(self.h) else tuple(self.h)
        if any(not v > 0 for v in hs):
            raise ValueError("h must be positive")
        if not np.isscalar(self.h):
            object.__setattr__(self, "h", tuple(float(v) for v in self.h))
        if not self.step > 0:
            raise ValueError("step must be positive")

    def h_per_axis(self, dim: int) -> tuple[float, ...]:
        if np.isscalar(self.h):
            return (float(self.h),) * dim
        if len(self.h) != dim:
            raise ValueError(f"h has {len(self.h)} entries for dim {dim}")
        return self.h


class ReachGrid:
    """Occupancy grid of sampled reachable states inside a window.

    occupied maps packed cell ids to witness node indices; nodes form a
    parent-linked forest of control segments rooted at x0 (node 0).
    """

    def __init__(
        self,
        system: ControlSystem,
        x0: tuple[float, ...],
        window: Window,
        params: ReachParams,
        h: tuple[float, ...],
        dims: tuple[int, ...],
        occupied: dict[int, int],
        parents: np.ndarray,
        seg_steps: np.ndarray,
        depths: np.ndarray,
        controls: np.ndarray,
        states: np.ndarray,
    ):
        self.system = system
        self.x0 = x0
        self.window = window
        self.params = params
        self.h = h
        self.dims = dims
        self.occupied = occupied
        self.parents = parents
        self.seg_steps = seg_steps
        self.depths = depths
        self.controls = controls
        self.states = states
        self._multipliers = _packing_multipliers(dims)

    # -- geometry ------------------------------------------------------------

    @property
    def space(self) -> StateSpace:
        return self.system.space

    @property
    def occupied_count(self) -> int:
        return len(self.occupied)

    def offset_of(self, point: Sequence) -> np.ndarray:
        """Wrapped displacement of a chart point from the window center."""
        return diff(self.space, point, self.window.center)

    def in_window(self, point: Sequence) -> bool:
        off = self.offset_of(point)
        hw = np.array(self.window.half_widths)
        return bool(np.all(off >= -hw) and np.all(off < hw))

    def cell_index(self, point: Sequence) -> tuple[int, ...]:
        off = self.offset_of(point)
        idx = []
        for o, hw, h, n in zip(off, self.window.half_widths, self.h, self.dims):
            i = math.floor((o + hw) / h)
            if i < 0 or i >= n:
                raise OutOfWindowError(f"point {tuple(point)} outside the window")
            idx.append(i)
        return tuple(idx)

    def pack(self, idx: Sequence[int]) -> int:
        return int(sum(i * m for i, m in zip(idx, self._multipliers)))

    def unpack(self, flat: int) -> tuple[int, ...]:
        idx = []
        for n in self.dims:
            idx.append(flat % n)
            flat //= n
        return tuple(idx)

    def is_occupied(self, idx: Sequence[int]) -> bool:
        return self.pack(idx) in self.occupied

    def cell_center(self, idx: Sequence[int]) -> np.ndarray:
        """Chart coordinates of a cell center (wrapped)."""
        raw = [
            c - hw + (i + 0.5) * h
            for c, hw, h, i in zip(self.window.center, self.window.half_widths, self.h, idx)
        ]
        return wrap(self.space, raw)

    def occupied_cell_centers(self) -> np.ndarray:
        """(m, dim) array of occupied cell centers, in claim order."""
        if not self.occupied:
            return np.zeros((0, len(self.dims)))
        return np.array([self.cell_center(self.unpack(c)) for c in self.occupied])

    # -- witnesses -------------------------------------------------------------

    def witness_node(self, idx: Sequence[int]) -> int:
        flat = self.pack(idx)
        if flat not in self.occupied:
            raise KeyError(f"cell {tuple(idx)} is not occupied")
        return self.occupied[flat]

    def witness_control(self, node: int) -> PiecewiseControl:
        """Control schedule reaching node's state from x0 (empty for the
        root)."""
        chain = []
        cur = node
        while cur > 0:
            steps = int(self.seg_steps[cur])
            if self.system.kind == "affine":
                value: object = tuple(float(v) for v in self.controls[cur])
            else:
                value = self.system.controls[int(self.controls[cur])][0]
            chain.append((steps * self.params.step, value))
            cur = int(self.parents[cur])
        return PiecewiseControl(tuple(reversed(chain)))

    def witness_state(self, node: int) -> np.ndarray:
        """Stored endpoint of the witness chain, in covering coordinates
        relative to x0's sheet."""
        return self.states[node]

    def cell_witness_control(self, idx: Sequence[int]) -> PiecewiseControl:
        return self.witness_control(self.witness_node(idx))

    # -- export ------------------------------------------------------------------

    def summary(self) -> dict:
        return {
            "schema": 1,
            "budget": self.params.budget,
            "h": [float(v) for v in self.h],
            "occupied_count": self.occupied_count,
            "window": {
                "center": [float(v) for v in self.window.center],
                "half_widths": [float(v) for v in self.window.half_widths],
            },
            "seed": self.params.seed,
        }

    def cells_to_csv(self, target) -> None:
        """Occupied cell centers as CSV, one row per cell in claim order."""
        n = len(self.dims)
        own = isinstance(target, (str, bytes, os.PathLike))
        fh = open(target, "w", newline="") if own else target
        try:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)])
            for flat in self.occupied:
                center = self.cell_center(self.unpack(flat))
                w.writerow([repr(float(v)) for v in center])
        finally:
            if own:
                fh.close()


def _packing_multipliers(dims: tuple[int, ...]) -> tuple[int, ...]:
    mult = []
    acc = 1
    for n in dims:
        mult.append(acc)
        acc *= n
    return tuple(mult)


def _batch_rk4_step(rhs, X: np.ndarray, U, dt: np.ndarray) -> np.ndarray:
    # mirrors dynamics._rk4_step operation for operation; rows with dt == 0
    # are reproduced unchanged
    k1 = rhs(X, U)
    h2 = 0.5 * dt
    k2 = rhs(X + h2 * k1, U)
    k3 = rhs(X + h2 * k2, U)
    k4 = rhs(X + dt * k3, U)
    s = dt / 6.0
    return X + s * (k1 + 2.0 * (k2 + k3) + k4)


def _wrap_batch(space: StateSpace, X: np.ndarray) -> np.ndarray:
    Xw = X.copy()
    for i, p in enumerate(space.periods):
        if p is not None:
            Xw[:, i] %= p
    return Xw


def _constraints_ok(space: StateSpace, X: np.ndarray) -> np.ndarray:
    if not space.constraints:
        return np.ones(len(X), dtype=bool)
    Xw = _wrap_batch(space, X)
    ok = np.ones(len(X), dtype=bool)
    for c in space.constraints:
        ok &= c.poly.eval_batch(Xw) < c.bound
    return ok


def reach_grid(
    system: ControlSystem,
    x0: Sequence,
    window: Window,
    params: ReachParams = ReachParams(),
) -> ReachGrid:
    """Sample the forward-reachable set from x0 inside the window.

    Frontier expansion: each rollout starts at an already-reached state,
    applies one random constant control (uniform over the control set or a
    bang-bang vertex, 50/50) for a random whole number of integrator steps,
    and records every visited in-window state.  The first visitor of a cell
    claims it and joins the frontier.  Deterministic given params.seed.
    """
    space = system.space
    validate_window(space, window)
    x0 = tuple(float(v) for v in x0)
    if len(x0) != space.dim:
        raise ValueError(f"x0 has {len(x0)} coordinates, expected {space.dim}")
    if not contains(space, x0):
        raise ValueError("x0 violates a domain constraint")

    dim = space.dim
    center = np.array(window.center)
    hw = np.array(window.half_widths)
    h_req = params.h_per_axis(dim)
    dims = tuple(max(1, round(2.0 * w / h)) for w, h in zip(hw, h_req))
    h_eff = tuple(2.0 * w / n for w, n in zip(hw, dims))
    h_arr = np.array(h_eff)
    dims_arr = np.array(dims, dtype=np.int64)
    mult = np.array(_packing_multipliers(dims), dtype=np.int64)

    off0 = diff(space, x0, window.center)
    if not (np.all(off0 >= -hw) and np.all(off0 < hw)):
        raise ValueError("x0 lies outside the window")

    # node storage; node 0 is the root at x0
    states: list[np.ndarray] = [np.array(x0)]
    parents = [-1]
    seg_steps = [0]
    depths = [0]
    affine = system.kind == "affine"
    k = len(system.inputs) if affine else 1
    controls: list = [np.zeros(k) if affine else 0]
    frontier = [0]

    root_idx = np.floor((off0 + hw) / h_arr).astype(np.int64)
    np.clip(root_idx, 0, dims_arr - 1, out=root_idx)
    occupied: dict[int, int] = {int((root_idx * mult).sum()): 0}

    waves = -(-params.budget // WAVE_SIZE)
    if waves:
        from .dynamics import compiled_batch_rhs

        rhs = compiled_batch_rhs(system)
        rng = derive(params.seed, "reach-grid")
        n_max = max(1, round(params.max_time / params.max_segments / params.step))
        if affine:
            lo = np.array([a for a, _ in system.control_box])
            span = np.array([b - a for a, b in system.control_box])
            vertices = np.array(system.control_vertices())
        else:
            n_labels = len(system.controls)

    for _ in range(waves):
        front = np.array(frontier, dtype=np.int64)
        origin_nodes = front[rng.integers(0, len(front), WAVE_SIZE)]
        if affine:
            use_uniform = rng.random(WAVE_SIZE) < 0.5
            u_uniform = lo + rng.random((WAVE_SIZE, k)) * span
            u_vertex = vertices[rng.integers(0, len(vertices), WAVE_SIZE)]
            U = np.where(use_uniform[:, None], u_uniform, u_vertex)
        else:
            U = rng.integers(0, n_labels, WAVE_SIZE)
        n_steps = rng.integers(1, n_max + 1, WAVE_SIZE)

        X = np.stack([states[i] for i in origin_nodes])
        alive = np.ones(WAVE_SIZE, dtype=bool)
        claim_cells: list[np.ndarray] = []
        claim_rows: list[np.ndarray] = []
        claim_steps: list[np.ndarray] = []
        claim_states: list[np.ndarray] = []

        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(int(n_steps.max())):
                active = alive & (n_steps > t)
                if not active.any():
                    break
                dt = np.where(active, params.step, 0.0)[:, None]
                X = _batch_rk4_step(rhs, X, U, dt)
                off = diff_batch(space, X, center)
                ok = (
                    active
                    & np.isfinite(X).all(axis=1)
                    & (off >= -hw).all(axis=1)
                    & (off < hw).all(axis=1)
                )
                ok[ok] &= _constraints_ok(space, X[ok])
                alive &= ~(active & ~ok)
                rows = np.flatnonzero(ok)
                if rows.size:
                    idx = np.floor((off[rows] + hw) / h_arr).astype(np.int64)
                    np.clip(idx, 0, dims_arr - 1, out=idx)
                    claim_cells.append(idx @ mult)
                    claim_rows.append(rows)
                    claim_steps.append(np.full(rows.size, t + 1, dtype=np.int64))
                    claim_states.append(X[rows])

        if not claim_cells:
            continue
        cells = np.concatenate(claim_cells)
        rows = np.concatenate(claim_rows)
        steps_arr = np.concatenate(claim_steps)
        states_arr = np.concatenate(claim_states)
        unique_cells, first = np.unique(cells, return_index=True)
        for cell, at in zip(unique_cells.tolist(), first.tolist()):
            if cell in occupied:
                continue
            row = int(rows[at])
            parent = int(origin_nodes[row])
            node = len(states)
            states.append(states_arr[at])
            parents.append(parent)
            seg_steps.append(int(steps_arr[at]))
            depths.append(depths[parent] + 1)
            controls.append(U[row].copy() if affine else int(U[row]))
            occupied[cell] = node
            if depths[node] < params.max_segments:
                frontier.append(node)

    return ReachGrid(
        system=system,
        x0=x0,
        window=window,
        params=params,
        h=h_eff,
        dims=dims,
        occupied=occupied,
        parents=np.array(parents, dtype=np.int64),
        seg_steps=np.array(seg_steps, dtype=np.int64),
        depths=np.array(depths, dtype=np.int64),
        controls=np.array(controls) if affine else np.array(controls, dtype=np.int64),
        states=np.array(states),
    )


def backward_grid(
    system: ControlSystem,
    x0: Sequence,
    window: Window,
    params: ReachParams = ReachParams(),
) -> ReachGrid:
    """Grid of states that can reach x0: the forward grid of the
    time-reversed system.  Witness controls drive the reversed system away
    from x0; replay them in reverse order on the forward system to travel
    from a grid cell back to x0."""
    return reach_grid(reverse_system(system), x0, window, params)


def interior_test(
    grid: ReachGrid, point: Sequence, radius_cells: int = DEFAULT_RADIUS_CELLS
) -> bool:
    """Grid-level interior membership: every cell within Chebyshev distance
    radius_cells of the point's cell is occupied.  Cells beyond the window
    edge count as unoccupied, so points at the border are never interior."""
    if radius_cells < 1:
        raise ValueError("radius_cells must be >= 1")
    idx = grid.cell_index(point)
    return _cell_interior(grid, idx, radius_cells)


def _cell_interior(grid: ReachGrid, idx: tuple[int, ...], radius_cells: int) -> bool:
    span = range(-radius_cells, radius_cells + 1)
    for delta in product(span, repeat=len(idx)):
        probe = tuple(i + d for i, d in zip(idx, delta))
        if any(p < 0 or p >= n for p, n in zip(probe, grid.dims)):
            return False
        if grid.pack(probe) not in grid.occupied:
            return False
    return True


def nearest_interior_distance(
    grid: ReachGrid,
    point: Sequence,
    radius_cells: int = DEFAULT_RADIUS_CELLS,
) -> Optional[int]:
    """Chebyshev cell distance from the point's cell to the nearest occupied
    cell passing interior_test; None if the grid has no interior cell."""
    base = np.array(grid.cell_index(point), dtype=np.int64)
    flats = np.fromiter(grid.occupied.keys(), dtype=np.int64, count=len(grid.occupied))
    idx = np.empty((len(flats), len(grid.dims)), dtype=np.int64)
    rest = flats.copy()
    for axis, n in enumerate(grid.dims):
        idx[:, axis] = rest % n
        rest //= n
    dist_cheb = np.abs(idx - base).max(axis=1)
    order = np.argsort(dist_cheb, kind="stable")
    for at in order:
        if _cell_interior(grid, tuple(int(v) for v in idx[at]), radius_cells):
            return int(dist_cheb[at])
    return None


def krener_check(
    grid: ReachGrid,
    x0: Sequence,
    radius_cells: int = DEFAULT_RADIUS_CELLS,
    search_radius_cells: Optional[int] = None,
) -> bool:
    """Accessibility property at grid level: some occupied cell near x0
    passes interior_test.

    At a fixed resolution the nearest interior cell sits a few cells away
    from x0 even for perfectly sampled sets (its whole neighbourhood must be
    occupied), so the default searches the entire window — the window is
    itself the neighbourhood of x0 under study.  Pass search_radius_cells to
    bound the search instead."""
    found = nearest_interior_distance(grid, x0, radius_cells)
    if found is None:
        return False
    return search_radius_cells is None or found <= search_radius_cells


@dataclass(frozen=True)
class DualityReport:
    """Agreement between 'y interior-reachable from x' and 'x interior-
    reachable from y backwards'."""

    verdict: str  # agree_yes | agree_no | disagree
    forward_interior: bool
    backward_interior: bool
    forward_grid: ReachGrid
    backward_grid: ReachGrid

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "verdict": self.verdict,
            "forward_interior": self.forward_interior,
            "backward_interior": self.backward_interior,
            "forward": self.forward_grid.summary(),
            "backward": self.backward_grid.summary(),
        }


def duality_check(
    system: ControlSystem,
    x: Sequence,
    y: Sequence,
    window: Window,
    params: ReachParams = ReachParams(),
    radius_cells: int = DEFAULT_RADIUS_CELLS,
) -> DualityReport:
    """Compare forward and backward interior verdicts for a pair of points.

    The two grids use sub-seeds derived from params.seed, so the comparison
    is deterministic end to end."""
    fwd = reach_grid(system, x, window, replace(params, seed=child_seed(params.seed, "duality", 0)))
    bwd = backward_grid(system, y, window, replace(params, seed=child_seed(params.seed, "duality", 1)))
    a = interior_test(fwd, y, radius_cells)
    b = interior_test(bwd, x, radius_cells)
    if a and b:
        verdict = "agree_yes"
    elif not a and not b:
        verdict = "agree_no"
    else:
        verdict = "disagree"
    return DualityReport(verdict, a, b, fwd, bwd)
