"""Controllability toolkit for polynomial control systems.

Exact Lie-bracket algebra over rational polynomial vector fields, sampled
occupancy-grid reachable sets with replayable witness controls, closed-orbit
search on compact state spaces, orbit regularity tests, and Pontryagin-style
extremal lift diagnostics.  The `orbitreach` command line front-end drives
everything in batch mode.
"""

__version__ = "0.1.0"

from .geometry import StateSpace, wrap, dist
from .fields import PolyVectorField, lie_bracket, ad_power, generate_hull, lie_rank, larc_check
from .dynamics import ControlSystem, PiecewiseControl, Trajectory, integrate, reverse_system
from .reach import (
    ReachGrid,
    ReachParams,
    Window,
    backward_grid,
    duality_check,
    interior_test,
    krener_check,
    reach_grid,
)
from .extremals import (
    ExtremalLift,
    arwar_rank,
    check_extremal_conditions,
    check_singular,
    consing_check,
    endpoint_image_rank,
    hamiltonian,
    integrate_lift,
)
from .orbits import (
    ClosedOrbit,
    ReachabilityGraph,
    build_graph,
    close_orbit,
    controllable_neighborhood_check,
    find_closed_orbit,
    find_cycle,
    lattice_nodes,
    orbit_from_control,
    regularity_test,
    reverse_regularity_test,
)
from .specfile import ParsedSpec, SpecParams, bundled_spec_names, load_spec, parse_spec, pretty_print
from .reporting import canonical_json, render_report
from .rng import child_seed, derive

__all__ = [
    "StateSpace", "wrap", "dist",
    "PolyVectorField", "lie_bracket", "ad_power", "generate_hull", "lie_rank", "larc_check",
    "ControlSystem", "PiecewiseControl", "Trajectory", "integrate", "reverse_system",
    "Window", "ReachParams", "ReachGrid",
    "reach_grid", "backward_grid", "interior_test", "krener_check", "duality_check",
    "ClosedOrbit", "ReachabilityGraph", "build_graph", "find_cycle", "close_orbit",
    "find_closed_orbit", "lattice_nodes", "orbit_from_control",
    "regularity_test", "reverse_regularity_test", "controllable_neighborhood_check",
    "ExtremalLift", "hamiltonian", "integrate_lift",
    "check_extremal_conditions", "check_singular",
    "endpoint_image_rank", "consing_check", "arwar_rank",
    "ParsedSpec", "SpecParams", "bundled_spec_names", "load_spec", "parse_spec", "pretty_print",
    "canonical_json", "render_report",
    "child_seed", "derive",
    "__version__",
]
