"""Closed orbits from reachability grids, and their regularity certificates.

Pipeline: sample node points over a fully periodic state space, build one
occupancy grid per node, and draw an edge i -> j whenever node i's state is
grid-interior of the set reachable from node j (the edge keeps the witness
control that steers node j into node i's cell).  On a finite node set the
lowest-index-successor walk must revisit a node, yielding a directed cycle;
concatenating the cycle's witnesses produces a nearly closed trajectory whose
endpoint gap is then shrunk by a derivative-free simplex refinement of the
final arc.

Certification: a closed orbit is flagged ``regular`` when every sampled orbit
point near the base (excluding a discretization collar around the base cell
and around the window edge) is grid-interior of the reachable set from the
base.  The verdict is one-sided -- ``not_shown`` only means this window and
resolution produced no certificate.  The reverse-direction test runs the same
check on the time-reversed system with the orbit traversed backwards, and the
neighborhood check connects random cell pairs of the A+/A- band through the
orbit by replaying stored witnesses.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dynamics import (
    DEFAULT_STEP,
    ControlSystem,
    PiecewiseControl,
    Trajectory,
    integrate,
    reverse_system,
)
from .geometry import StateSpace, dist, wrap
from .reach import (
    DEFAULT_RADIUS_CELLS,
    ReachGrid,
    ReachParams,
    Window,
    backward_grid,
    interior_test,
    reach_grid,
)
from .rng import child_seed, derive

DEFAULT_CLOSURE_TOL = 1e-6
DEFAULT_GLUE_TOL = 1e-4
DEFAULT_REFINE_EVALS = 2000


def thread_count() -> int:
    """Worker count for per-node grid builds; ORBITREACH_THREADS overrides."""
    env = os.environ.get("ORBITREACH_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def parallel_map(fn: Callable, items: Sequence) -> list:
    """Order-preserving map, threaded when more than one worker is available.

    Each item carries its own derived seed, so results do not depend on the
    scheduling order and the assembled output is deterministic."""
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- node sampling ---------------------------------------------------------------


def lattice_nodes(
    space: StateSpace,
    counts: Sequence[int],
    jitter: float = 0.0,
    seed: int = 0,
) -> tuple[tuple[float, ...], ...]:
    """Uniform lattice over a fully periodic space, optionally jittered by a
    fraction of the lattice spacing."""
    if len(counts) != space.dim:
        raise ValueError(f"counts has {len(counts)} entries for dim {space.dim}")
    if any(p is None for p in space.periods):
        raise ValueError("lattice_nodes requires a fully periodic space")
    if any(c < 1 for c in counts):
        raise ValueError("counts must be >= 1")
    spacings = [p / c for p, c in zip(space.periods, counts)]
    rng = derive(seed, "lattice") if jitter else None
    nodes = []
    for flat in range(int(np.prod(counts))):
        idx = []
        rest = flat
        for c in counts:
            idx.append(rest % c)
            rest //= c
        point = [i * s for i, s in zip(idx, spacings)]
        if rng is not None:
            point = [
                v + float(rng.uniform(-0.5, 0.5)) * jitter * s
                for v, s in zip(point, spacings)
            ]
        nodes.append(tuple(wrap(space, point)))
    return tuple(nodes)


# -- reachability graph ------------------------------------------------------------


@dataclass(frozen=True)
class ReachabilityGraph:
    """Directed graph on node points: edge i -> j means node i's state is
    grid-interior of the set reachable from node j; the witness control steers
    node j's state into node i's cell."""

    system: ControlSystem
    nodes: tuple[tuple[float, ...], ...]
    window_size: Union[float, tuple[float, ...]]
    params: ReachParams
    radius_cells: int
    edges: dict[tuple[int, int], PiecewiseControl]
    successors: dict[int, tuple[int, ...]]

    def out_degree(self, node: int) -> int:
        return len(self.successors.get(node, ()))

    def edge_witness(self, tail: int, head: int) -> PiecewiseControl:
        return self.edges[(tail, head)]

    def to_dot(self) -> str:
        lines = ["digraph reachability {"]
        for i, state in enumerate(self.nodes):
            label = ",".join(f"{v:.3g}" for v in state)
            lines.append(f'  n{i} [label="{i}: ({label})"];')
        for (i, j) in sorted(self.edges):
            lines.append(f"  n{i} -> n{j};")
        lines.append("}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "n_nodes": len(self.nodes),
            "n_edges": len(self.edges),
            "edges": [[i, j] for (i, j) in sorted(self.edges)],
        }


def build_graph(
    system: ControlSystem,
    nodes: Sequence[Sequence[float]],
    window_size: Union[float, tuple[float, ...]],
    params: ReachParams = ReachParams(),
    radius_cells: int = DEFAULT_RADIUS_CELLS,
) -> ReachabilityGraph:
    """Grid the reachable set of every node and record interior memberships.

    Per-node grids run in parallel with per-node sub-seeds; the edge merge is
    a deterministic sequential pass.  Self-edges are allowed."""
    node_tuples = tuple(tuple(float(v) for v in x) for x in nodes)

    def grid_for(j: int) -> ReachGrid:
        sub = replace(params, seed=child_seed(params.seed, "graph-node", j))
        return reach_grid(system, node_tuples[j], Window.around(node_tuples[j], window_size), sub)

    grids = parallel_map(grid_for, range(len(node_tuples)))

    edges: dict[tuple[int, int], PiecewiseControl] = {}
    for j, grid in enumerate(grids):
        for i, x_i in enumerate(node_tuples):
            if not grid.in_window(x_i):
                continue
            if not interior_test(grid, x_i, radius_cells):
                continue
            edges[(i, j)] = grid.cell_witness_control(grid.cell_index(x_i))
    successors: dict[int, tuple[int, ...]] = {}
    for (i, j) in sorted(edges):
        successors.setdefault(i, [])
        successors[i].append(j)
    successors = {i: tuple(js) for i, js in successors.items()}
    return ReachabilityGraph(
        system=system,
        nodes=node_tuples,
        window_size=window_size,
        params=params,
        radius_cells=radius_cells,
        edges=edges,
        successors=successors,
    )


def find_cycle(graph: ReachabilityGraph, start: int = 0) -> Optional[list[int]]:
    """Walk lowest-index successors from the start node until a node repeats;
    the tail of the walk from the first repeat is a directed cycle.  Returns
    None when the walk reaches a node with no successors (insufficient grid
    coverage, not a disproof)."""
    seen: dict[int, int] = {}
    order: list[int] = []
    cur = start
    while cur not in seen:
        seen[cur] = len(order)
        order.append(cur)
        succ = graph.successors.get(cur, ())
        if not succ:
            return None
        cur = succ[0]
    return order[seen[cur]:]


# -- closed orbits -----------------------------------------------------------------


@dataclass(frozen=True)
class ClosedOrbit:
    """A trajectory returning to its start within a closure gap.

    The trajectory starts at the orbit base point; gap is the wrapped distance
    between its endpoints; closed records whether the gap met the requested
    tolerance; regular carries a later certification verdict, if any."""

    trajectory: Trajectory
    control: PiecewiseControl
    period: float
    gap: float
    step: float
    closed: bool = True
    regular: Optional[str] = None

    @property
    def base_point(self) -> tuple[float, ...]:
        return tuple(float(v) for v in self.trajectory.start)

    def state_at_index(self, index: int) -> tuple[float, ...]:
        return tuple(float(v) for v in self.trajectory.states[index])

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "period": self.period,
            "gap": self.gap,
            "closed": self.closed,
            "regular": self.regular,
            "n_segments": len(self.control.segments),
            "base_point": list(self.base_point),
        }


def orbit_from_control(
    system: ControlSystem,
    x0: Sequence[float],
    control: PiecewiseControl,
    step: float = DEFAULT_STEP,
    tol: float = DEFAULT_CLOSURE_TOL,
) -> ClosedOrbit:
    """Integrate a control loop from x0 and package it as a ClosedOrbit."""
    traj = integrate(system, x0, control, step=step)
    if traj.truncated:
        raise ValueError("orbit control leaves the domain before completing")
    gap = float(dist(system.space, traj.end, traj.start))
    period = traj.duration
    if not period > 0:
        raise ValueError("orbit control must have positive total duration")
    return ClosedOrbit(
        trajectory=traj,
        control=control,
        period=period,
        gap=gap,
        step=step,
        closed=gap <= tol,
    )


class _CloseEnough(Exception):
    pass


def _refine_last_arc(
    system: ControlSystem,
    start: Sequence[float],
    prefix_end: Sequence[float],
    last_arc: PiecewiseControl,
    step: float,
    tol: float,
    max_evals: int,
) -> tuple[PiecewiseControl, float]:
    """Shrink dist(end, start) by adjusting the last arc's durations (and, for
    affine systems, its control values) with a Nelder-Mead simplex; returns
    the best arc found and its gap.  Monotone: the incumbent never worsens."""
    from scipy.optimize import minimize

    affine = system.kind == "affine"
    durations = [d for d, _ in last_arc.segments]
    values = [v for _, v in last_arc.segments]
    k = len(system.inputs) if affine else 0
    z0 = list(durations)
    if affine:
        for v in values:
            z0.extend(v)
    z0 = np.array(z0, dtype=float)
    lo = np.array([b[0] for b in system.control_box]) if affine else None
    hi = np.array([b[1] for b in system.control_box]) if affine else None
    space = system.space

    def assemble(z: np.ndarray) -> PiecewiseControl:
        n = len(durations)
        segs = []
        for t in range(n):
            dur = max(0.0, float(z[t]))
            if dur < step / 2:
                continue
            if affine:
                u = np.clip(z[n + t * k : n + (t + 1) * k], lo, hi)
                segs.append((dur, tuple(float(v) for v in u)))
            else:
                segs.append((dur, values[t]))
        return PiecewiseControl(tuple(segs))

    best = {"z": z0.copy(), "gap": math.inf}

    def objective(z: np.ndarray) -> float:
        arc = assemble(z)
        if arc.segments:
            traj = integrate(system, prefix_end, arc, step=step)
            end = traj.end
            if traj.truncated:
                return 10.0 + float(dist(space, end, start))
        else:
            end = np.array(prefix_end)
        gap = float(dist(space, end, start))
        if gap < best["gap"]:
            best["gap"] = gap
            best["z"] = np.array(z, dtype=float)
        if gap < 0.25 * tol:
            raise _CloseEnough
        return gap

    try:
        objective(z0)
        minimize(
            objective,
            z0,
            method="Nelder-Mead",
            options={"maxfev": max_evals, "xatol": 1e-12, "fatol": 1e-14},
        )
    except _CloseEnough:
        pass
    return assemble(best["z"]), best["gap"]


def close_orbit(
    system: ControlSystem,
    cycle: Sequence[int],
    graph: ReachabilityGraph,
    tol: float = DEFAULT_CLOSURE_TOL,
    max_evals: int = DEFAULT_REFINE_EVALS,
) -> ClosedOrbit:
    """Realize a graph cycle as a closed trajectory.

    An edge (a, b) stores a control steering node b's state into node a's
    cell, so the physical loop starting at the first cycle node traverses the
    cycle edges in reverse order.  If the raw concatenation misses closure, a
    simplex refinement of the final arc shrinks the gap; the result is flagged
    unclosed when the gap stays above tolerance."""
    cycle = list(cycle)
    if not cycle:
        raise ValueError("cycle must be nonempty")
    m = len(cycle)
    arcs: list[PiecewiseControl] = []
    for t in range(m - 1, -1, -1):
        key = (cycle[t], cycle[(t + 1) % m])
        if key not in graph.edges:
            raise ValueError(f"cycle edge {key} not present in the graph")
        arcs.append(graph.edges[key])
    arcs = [arc for arc in arcs if arc.segments]
    if not arcs:
        raise ValueError("cycle has no witness segments to realize")
    start = graph.nodes[cycle[0]]
    step = graph.params.step

    chain = arcs[0]
    for arc in arcs[1:]:
        chain = chain.concat(arc)
    raw = orbit_from_control(system, start, chain, step=step, tol=tol)
    if raw.gap <= tol:
        return raw

    prefix = arcs[0]
    for arc in arcs[1:-1]:
        prefix = prefix.concat(arc)
    if len(arcs) == 1:
        prefix = PiecewiseControl(())
    prefix_traj = integrate(system, start, prefix, step=step)
    refined_arc, refined_gap = _refine_last_arc(
        system, start, tuple(prefix_traj.end), arcs[-1], step, tol, max_evals
    )
    if refined_gap >= raw.gap or not refined_arc.segments:
        return replace(raw, closed=False)
    control = prefix.concat(refined_arc) if prefix.segments else refined_arc
    orbit = orbit_from_control(system, start, control, step=step, tol=tol)
    return replace(orbit, closed=orbit.gap <= tol)


def find_closed_orbit(
    system: ControlSystem,
    nodes: Sequence[Sequence[float]],
    window_size: Union[float, tuple[float, ...]],
    params: ReachParams = ReachParams(),
    radius_cells: int = DEFAULT_RADIUS_CELLS,
    tol: float = DEFAULT_CLOSURE_TOL,
) -> tuple[Optional[ClosedOrbit], ReachabilityGraph, Optional[list[int]]]:
    """Build the graph, walk for a cycle, and close it; returns (orbit, graph,
    cycle) with orbit None when the walk finds no cycle."""
    graph = build_graph(system, nodes, window_size, params, radius_cells)
    cycle = find_cycle(graph)
    if cycle is None:
        return None, graph, None
    return close_orbit(system, cycle, graph, tol=tol), graph, cycle


# -- regularity --------------------------------------------------------------------


@dataclass(frozen=True)
class RegularityReport:
    """Outcome of the one-sided interior certification of orbit samples."""

    verdict: str  # regular | not_shown
    n_tested: int
    n_interior: int
    n_unoccupied: int
    n_excluded_base: int
    n_excluded_edge: int
    failed_cells: tuple[tuple[int, ...], ...]
    base_point: tuple[float, ...]
    occupied_count: int

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "verdict": self.verdict,
            "n_tested": self.n_tested,
            "n_interior": self.n_interior,
            "n_unoccupied": self.n_unoccupied,
            "n_excluded_base": self.n_excluded_base,
            "n_excluded_edge": self.n_excluded_edge,
            "n_failed": len(self.failed_cells),
            "base_point": list(self.base_point),
            "occupied_count": self.occupied_count,
        }


def regularity_test(
    system: ControlSystem,
    orbit: ClosedOrbit,
    base_index: int,
    window: Window,
    params: ReachParams = ReachParams(),
    radius_cells: int = DEFAULT_RADIUS_CELLS,
    exclude_cells: Optional[int] = None,
) -> RegularityReport:
    """Certify that orbit points near the base are grid-interior of the
    reachable set from the base.

    Orbit samples are the recorded trajectory states inside the window, minus
    two collars: cells within exclude_cells (Chebyshev, default twice
    radius_cells) of the base cell, where the sampled set is always too thin
    for an interior block at this resolution, and cells within radius_cells of
    the window edge, which interior_test can never pass.  Samples in occupied
    cells must all be interior; unoccupied samples are outside the sampled
    reachable set and impose no constraint but are reported.  Verdict
    ``regular`` needs at least one tested sample and zero failures; anything
    else is ``not_shown`` (never a disproof)."""
    if exclude_cells is None:
        exclude_cells = 2 * radius_cells
    if exclude_cells < radius_cells:
        raise ValueError("exclude_cells must be >= radius_cells")
    base_state = orbit.state_at_index(base_index)
    grid = reach_grid(system, base_state, window, params)
    base_cell = np.array(grid.cell_index(base_state), dtype=np.int64)
    dims = np.array(grid.dims, dtype=np.int64)

    seen: set[tuple[int, ...]] = set()
    n_unocc = n_base = n_edge = n_interior = 0
    failed: list[tuple[int, ...]] = []
    tested = 0
    for state in orbit.trajectory.states:
        if not grid.in_window(state):
            continue
        cell = grid.cell_index(state)
        if cell in seen:
            continue
        seen.add(cell)
        idx = np.array(cell, dtype=np.int64)
        if int(np.abs(idx - base_cell).max()) <= exclude_cells:
            n_base += 1
            continue
        if bool(np.any(idx < radius_cells) or np.any(idx >= dims - radius_cells)):
            n_edge += 1
            continue
        if not grid.is_occupied(cell):
            n_unocc += 1
            continue
        tested += 1
        if interior_test(grid, state, radius_cells):
            n_interior += 1
        elif len(failed) < 32:
            failed.append(cell)
    verdict = "regular" if tested > 0 and n_interior == tested else "not_shown"
    return RegularityReport(
        verdict=verdict,
        n_tested=tested,
        n_interior=n_interior,
        n_unoccupied=n_unocc,
        n_excluded_base=n_base,
        n_excluded_edge=n_edge,
        failed_cells=tuple(failed),
        base_point=base_state,
        occupied_count=grid.occupied_count,
    )


def reversed_orbit(
    system: ControlSystem, orbit: ClosedOrbit, tol: float = DEFAULT_CLOSURE_TOL
) -> ClosedOrbit:
    """The same loop traversed backwards: a closed orbit of the reversed
    system starting from the original endpoint."""
    return orbit_from_control(
        reverse_system(system),
        tuple(orbit.trajectory.end),
        orbit.control.reversed_schedule(),
        step=orbit.step,
        tol=max(tol, orbit.gap * 2 + 1e-15),
    )


def reverse_regularity_test(
    system: ControlSystem,
    orbit: ClosedOrbit,
    base_index: int,
    window: Window,
    params: ReachParams = ReachParams(),
    radius_cells: int = DEFAULT_RADIUS_CELLS,
    exclude_cells: Optional[int] = None,
) -> RegularityReport:
    """Regularity of the reversed orbit under the time-reversed system, at the
    state matching the forward base index."""
    rorbit = reversed_orbit(system, orbit)
    last = len(rorbit.trajectory.states) - 1
    rindex = min(last, max(0, last - base_index))
    return regularity_test(
        reverse_system(system),
        rorbit,
        rindex,
        window,
        params,
        radius_cells,
        exclude_cells,
    )


# -- controllable neighborhood -------------------------------------------------------


@dataclass(frozen=True)
class PairConnection:
    """One attempted witness route cell_x -> base -> orbit -> base -> cell_y."""

    ok: bool
    return_gap: float
    orbit_gap: float
    in_window: bool


@dataclass(frozen=True)
class NeighborhoodReport:
    """Connectivity statistics over the band reachable both forward and
    backward from the orbit base point."""

    n_pairs: int
    n_connected: int
    n_skipped: int
    band_cells: int
    forward_occupied: int
    backward_occupied: int
    glue_tol: float
    details: tuple[PairConnection, ...]

    @property
    def fraction(self) -> float:
        return self.n_connected / self.n_pairs if self.n_pairs else 0.0

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "n_pairs": self.n_pairs,
            "n_connected": self.n_connected,
            "n_skipped": self.n_skipped,
            "fraction": self.fraction,
            "band_cells": self.band_cells,
            "forward_occupied": self.forward_occupied,
            "backward_occupied": self.backward_occupied,
            "glue_tol": self.glue_tol,
        }


def _states_in_window(grid: ReachGrid, states: np.ndarray, slack: float) -> bool:
    hw = np.array(grid.window.half_widths)
    for state in states:
        off = grid.offset_of(state)
        if not np.all((off >= -hw - slack) & (off < hw + slack)):
            return False
    return True


def controllable_neighborhood_check(
    system: ControlSystem,
    orbit: ClosedOrbit,
    window: Window,
    params: ReachParams = ReachParams(),
    n_pairs: int = 25,
    glue_tol: float = DEFAULT_GLUE_TOL,
) -> NeighborhoodReport:
    """Connect random cell pairs of the forward/backward band through the
    orbit.

    The band is the set of cells occupied in both the forward and the
    backward grid built from the orbit base over the same window.  For a pair
    (x, y): replay x's backward witness with its schedule reversed (which
    steers x's cell back to the base), traverse the orbit loop once, then
    replay y's forward witness from the base.  The pair connects when the
    return arc lands within glue_tol of the base, the orbit closes within
    glue_tol, and all replayed states stay inside the window."""
    base = orbit.base_point
    fwd = reach_grid(system, base, window, replace(params, seed=child_seed(params.seed, "nbhd", 0)))
    bwd = backward_grid(system, base, window, replace(params, seed=child_seed(params.seed, "nbhd", 1)))
    band = sorted(set(fwd.occupied) & set(bwd.occupied))
    rng = derive(params.seed, "nbhd-pairs")
    orbit_in_window = _states_in_window(fwd, orbit.trajectory.states, 1e-6)

    details: list[PairConnection] = []
    connected = skipped = 0
    for _ in range(n_pairs):
        if not band:
            skipped += 1
            details.append(PairConnection(False, math.inf, orbit.gap, False))
            continue
        ia, ib = int(rng.integers(len(band))), int(rng.integers(len(band)))
        cell_x = bwd.unpack(band[ia])
        cell_y = fwd.unpack(band[ib])
        node_x = bwd.witness_node(cell_x)
        node_y = fwd.witness_node(cell_y)
        w_back = bwd.witness_control(node_x)
        w_fwd = fwd.witness_control(node_y)
        s_x = bwd.witness_state(node_x)

        if w_back.segments:
            leg_return = integrate(system, tuple(s_x), w_back.reversed_schedule(), step=params.step)
            return_end, return_states = leg_return.end, leg_return.states
        else:
            return_end, return_states = np.array(base), np.array([base])
        return_gap = float(dist(system.space, return_end, base))

        if w_fwd.segments:
            leg_out = integrate(system, base, w_fwd, step=params.step)
            out_states = leg_out.states
            reaches_y = fwd.cell_index(leg_out.end) == cell_y
        else:
            out_states = np.array([base])
            reaches_y = fwd.cell_index(np.array(base)) == cell_y
        inside = (
            orbit_in_window
            and _states_in_window(fwd, return_states, 1e-6)
            and _states_in_window(fwd, out_states, 1e-6)
        )
        ok = (
            return_gap <= glue_tol
            and orbit.gap <= glue_tol
            and inside
            and reaches_y
        )
        connected += ok
        details.append(PairConnection(ok, return_gap, orbit.gap, inside))
    return NeighborhoodReport(
        n_pairs=n_pairs,
        n_connected=connected,
        n_skipped=skipped,
        band_cells=len(band),
        forward_occupied=fwd.occupied_count,
        backward_occupied=bwd.occupied_count,
        glue_tol=glue_tol,
        details=tuple(details),
    )
