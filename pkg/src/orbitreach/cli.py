"""Batch command line front-end.

Subcommands operate on a system-definition file (a path, or a bundled name
such as `martinet`); parameters resolve in the order command-line flag >
definition-file [params] block > built-in default.  Reports print to stdout
as canonical JSON (default) or a text outline, and `--out DIR` additionally
writes the JSON plus any CSV/DOT artifacts into DIR.

Exit codes: 0 every performed check passed, 1 at least one check failed,
2 usage or parse errors.  Identical inputs and seeds produce byte-identical
JSON output.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .dynamics import PiecewiseControl, trajectory_to_csv
from .extremals import (
    arwar_rank,
    consing_check,
    endpoint_image_rank,
    extremal_report,
    integrate_lift,
)
from .fields import generate_hull, larc_check
from .geometry import contains
from .martinet import MartinetConfig, verify_all
from .orbits import (
    controllable_neighborhood_check,
    find_closed_orbit,
    lattice_nodes,
    orbit_from_control,
    regularity_test,
    reverse_regularity_test,
)
from .poly import ParseError
from .reach import ReachParams, Window, backward_grid, duality_check, reach_grid
from .reporting import canonical_json, render_battery, render_report
from .rng import child_seed, derive
from .specfile import ParsedSpec, load_spec

NEIGHBORHOOD_FRACTION = 0.9
DUALITY_FRACTION = 0.95


# -- flag value parsers ---------------------------------------------------------------


def _floats_csv(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _grid_h(text: str):
    vals = _floats_csv(text)
    return vals[0] if len(vals) == 1 else vals


def _counts(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected counts like 8x8, got {text!r}")


def _pick(*values):
    for v in values:
        if v is not None:
            return v
    return None


# -- shared resolution helpers --------------------------------------------------------


def _reach_params(
    args,
    spec: ParsedSpec,
    *,
    budget: int = 20_000,
    max_time: float = 4.0,
    h=0.05,
    step: float = 1e-3,
    seed: int = 0,
) -> ReachParams:
    sp = spec.params
    return ReachParams(
        budget=_pick(args.budget, sp.budget, budget),
        max_time=_pick(getattr(args, "max_time", None), sp.max_time, max_time),
        max_segments=_pick(sp.max_segments, 8),
        h=_pick(args.grid_h, sp.h, h),
        seed=_pick(args.seed, sp.seed, seed),
        step=_pick(args.step, sp.step, step),
    )


def _base_point(args, spec: ParsedSpec) -> tuple[float, ...]:
    dim = spec.system.space.dim
    if args.base is None:
        return (0.0,) * dim
    if len(args.base) != dim:
        raise ValueError(f"--base needs {dim} coordinates")
    return args.base


def _window_widths(args, spec: ParsedSpec, default_nonperiodic: float = 1.0) -> tuple[float, ...]:
    dim = spec.system.space.dim
    if args.window is not None:
        w = args.window
        if len(w) == 1:
            w = w * dim
        if len(w) != dim:
            raise ValueError(f"--window needs 1 or {dim} widths")
        return tuple(w)
    return tuple(
        p if p is not None else default_nonperiodic for p in spec.system.space.periods
    )


def _loop_period(args, spec: ParsedSpec) -> float:
    if getattr(args, "period", None) is not None:
        return args.period
    for p in spec.system.space.periods:
        if p is not None:
            return p
    raise ValueError("the space has no periodic axis; pass --period")


def _loop_control(spec: ParsedSpec, period: float) -> PiecewiseControl:
    system = spec.system
    if system.kind == "affine":
        value = (0.0,) * len(system.inputs)
    else:
        value = system.controls[0][0]
    return PiecewiseControl(((period, value),))


def _default_samples(spec: ParsedSpec, delta: float = 0.1) -> list[tuple[float, ...]]:
    """The origin plus one offset point per axis direction, domain permitting."""
    space = spec.system.space
    pts = [(0.0,) * space.dim]
    for i in range(space.dim):
        for sign in (delta, -delta):
            p = [0.0] * space.dim
            p[i] = sign
            if contains(space, p):
                pts.append(tuple(p))
    return pts


def _sample_points(args, spec: ParsedSpec) -> list[tuple[float, ...]]:
    if args.point:
        dim = spec.system.space.dim
        for p in args.point:
            if len(p) != dim:
                raise ValueError(f"--point needs {dim} coordinates")
        return [tuple(p) for p in args.point]
    return _default_samples(spec)


def _emit(args, name: str, report: dict, text: Optional[str] = None) -> None:
    blob = canonical_json(report)
    if args.format == "json":
        sys.stdout.write(blob)
    else:
        sys.stdout.write(text if text is not None else render_report(name, report))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / f"{name}.json").write_text(blob)


# -- subcommand handlers ---------------------------------------------------------------


def _cmd_brackets(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    depth = _pick(args.depth, spec.params.depth, system.space.dim + 2)
    hull = generate_hull(system.generating_fields(), depth)
    report = {
        "schema": 1,
        "depth": hull.depth,
        "n_generators": len(hull.generators),
        "n_elements": len(hull.elements),
        "elements": [
            {"word": list(word), "field": str(f)} for word, f in hull.elements
        ],
    }
    _emit(args, "brackets", report)
    return 0


def _cmd_larc(args) -> int:
    spec = load_spec(args.source)
    depth = _pick(args.depth, spec.params.depth)
    points = _sample_points(args, spec)
    rep = larc_check(spec.system, points, depth)
    report = {"schema": 1, **rep.to_dict()}
    _emit(args, "larc", report)
    return 0 if rep.passed else 1


def _cmd_arwar(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    dim = system.space.dim
    depth = _pick(args.depth, spec.params.depth, dim + 1)
    points = _sample_points(args, spec)
    entries = [
        {"point": [float(c) for c in pt], "rank": arwar_rank(system, pt, depth)}
        for pt in points
    ]
    passed = all(e["rank"] == dim for e in entries)
    report = {"schema": 1, "dim": dim, "depth": depth, "points": entries, "passed": passed}
    _emit(args, "arwar", report)
    return 0 if passed else 1


def _cmd_consing(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    dim = system.space.dim
    depth = _pick(args.depth, spec.params.depth, dim + 1)
    points = _sample_points(args, spec)
    entries = [
        {
            "point": [float(c) for c in pt],
            "rank": endpoint_image_rank(system, pt, depth),
            "full": consing_check(system, pt, depth),
        }
        for pt in points
    ]
    passed = all(e["full"] for e in entries)
    report = {"schema": 1, "dim": dim, "depth": depth, "points": entries, "passed": passed}
    _emit(args, "consing", report)
    return 0 if passed else 1


def _cmd_reach(args) -> int:
    spec = load_spec(args.source)
    base = _base_point(args, spec)
    window = Window.around(base, _window_widths(args, spec))
    params = _reach_params(args, spec)
    build = backward_grid if args.backward else reach_grid
    grid = build(spec.system, base, window, params)
    report = dict(grid.summary())
    report["direction"] = "backward" if args.backward else "forward"
    _emit(args, "reach", report)
    if args.out:
        grid.cells_to_csv(args.out / "cells.csv")
    return 0


def _cmd_duality(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    base = _base_point(args, spec)
    window = Window.around(base, _window_widths(args, spec))
    params = _reach_params(args, spec)
    rng = derive(params.seed, "cli-duality")
    lo = [c - hw for c, hw in zip(window.center, window.half_widths)]
    hi = [c + hw for c, hw in zip(window.center, window.half_widths)]

    def draw_point() -> tuple[float, ...]:
        for _ in range(100):
            p = tuple(float(rng.uniform(a, b)) for a, b in zip(lo, hi))
            if contains(system.space, p):
                return p
        raise ValueError("could not sample an in-domain point in the window")

    details = []
    agree = 0
    for i in range(args.pairs):
        x, y = draw_point(), draw_point()
        rep = duality_check(
            system, x, y, window, replace(params, seed=child_seed(params.seed, "pair", i))
        )
        ok = rep.verdict.startswith("agree")
        agree += ok
        details.append(
            {"x": list(x), "y": list(y), "verdict": rep.verdict}
        )
    fraction = agree / args.pairs if args.pairs else 1.0
    passed = fraction >= DUALITY_FRACTION
    report = {
        "schema": 1,
        "n_pairs": args.pairs,
        "n_agree": agree,
        "fraction": fraction,
        "required": DUALITY_FRACTION,
        "disagreements": [d for d in details if not d["verdict"].startswith("agree")],
        "details": details,
        "passed": passed,
    }
    _emit(args, "duality", report)
    return 0 if passed else 1


def _cmd_find_orbit(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    params = _reach_params(args, spec)
    nodes = lattice_nodes(system.space, args.nodes, jitter=args.jitter, seed=params.seed)
    widths = _window_widths(args, spec)
    orbit, graph, cycle = find_closed_orbit(system, nodes, widths, params)
    report = {
        "schema": 1,
        "n_nodes": len(nodes),
        "n_edges": len(graph.edges),
        "cycle": cycle if cycle is not None else None,
        "orbit": orbit.to_dict() if orbit is not None else None,
        "window": list(widths),
    }
    _emit(args, "find-orbit", report)
    if args.out:
        (args.out / "graph.dot").write_text(graph.to_dot())
        if orbit is not None:
            trajectory_to_csv(system, orbit.trajectory, args.out / "orbit.csv")
    return 0 if orbit is not None and orbit.closed else 1


def _cmd_check_regular(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    base = _base_point(args, spec)
    period = _loop_period(args, spec)
    params = _reach_params(args, spec)
    orbit = orbit_from_control(system, base, _loop_control(spec, period), step=params.step)
    window = Window.around(base, _window_widths(args, spec))
    kwargs = dict(radius_cells=args.radius, exclude_cells=args.exclude)
    fwd = regularity_test(system, orbit, 0, window, params, **kwargs)
    rev = reverse_regularity_test(system, orbit, 0, window, params, **kwargs)
    report = {
        "schema": 1,
        "orbit": orbit.to_dict(),
        "forward": fwd.to_dict(),
        "reverse": rev.to_dict(),
        "agree": fwd.verdict == rev.verdict,
    }
    _emit(args, "check-regular", report)
    return 0 if fwd.verdict == rev.verdict == "regular" else 1


def _cmd_neighborhood(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    base = _base_point(args, spec)
    period = _loop_period(args, spec)
    params = _reach_params(args, spec, max_time=8.0)
    orbit = orbit_from_control(system, base, _loop_control(spec, period), step=params.step)
    window = Window.around(base, _window_widths(args, spec))
    rep = controllable_neighborhood_check(system, orbit, window, params, n_pairs=args.pairs)
    passed = rep.fraction >= NEIGHBORHOOD_FRACTION
    report = {
        "schema": 1,
        **{k: v for k, v in rep.to_dict().items() if k != "schema"},
        "required": NEIGHBORHOOD_FRACTION,
        "passed": passed,
    }
    _emit(args, "neighborhood", report)
    return 0 if passed else 1


def _cmd_extremal(args) -> int:
    spec = load_spec(args.source)
    system = spec.system
    dim = system.space.dim
    base = _base_point(args, spec)
    period = _loop_period(args, spec)
    step = _pick(args.step, spec.params.step, 1e-3)
    p0 = args.p0 if args.p0 is not None else (0.0,) * (dim - 1) + (1.0,)
    if len(p0) != dim:
        raise ValueError(f"--p0 needs {dim} coordinates")
    ctrl = _loop_control(spec, period)
    lift = integrate_lift(system, ctrl, base, p0, step=step)
    report = extremal_report(system, lift, ctrl, step=step)
    verdicts = report["verdicts"]
    passed = (
        verdicts["dynamics"] and verdicts["zero_hamiltonian"] and verdicts["maximum_condition"]
    )
    report["passed"] = passed
    _emit(args, "extremal", report)
    if args.out:
        trajectory_to_csv(system, lift.base, args.out / "trajectory.csv")
    return 0 if passed else 1


def _cmd_verify_martinet(args) -> int:
    config = MartinetConfig(
        k=args.k,
        step=_pick(args.step, 1e-3),
        reach_budget=_pick(args.budget, 200_000),
        band_budget=_pick(args.band_budget, 50_000),
        seed=_pick(args.seed, 0),
    )
    verification = verify_all(config)
    _emit(
        args,
        "verify-martinet",
        verification.to_dict(),
        render_battery(f"verify-martinet (k={config.k})", verification.items),
    )
    return 0 if verification.ok else 1


# -- parser ------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="root RNG seed")
    common.add_argument("--budget", type=int, help="sampling rollout budget")
    common.add_argument("--step", type=float, help="RK4 step")
    common.add_argument(
        "--grid-h", dest="grid_h", type=_grid_h, help="cell size (scalar or per-axis list)"
    )
    common.add_argument("--depth", type=int, help="bracket depth")
    common.add_argument("--out", type=Path, help="directory for JSON/CSV/DOT artifacts")
    common.add_argument(
        "--format", choices=("json", "text"), default="json", help="stdout format"
    )

    located = argparse.ArgumentParser(add_help=False)
    located.add_argument("--base", type=_floats_csv, help="base point coordinates")
    located.add_argument(
        "--window", type=_floats_csv, help="window full widths (scalar or per-axis)"
    )

    parser = argparse.ArgumentParser(
        prog="orbitreach",
        description="Controllability toolkit: bracket algebra, sampled reachable "
        "sets, closed orbits, regularity certificates, covector lifts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, handler, parents: list, help_text: str, source: bool = True):
        p = sub.add_parser(name, parents=parents, help=help_text)
        if source:
            p.add_argument("source", help="definition file path or bundled name")
        p.set_defaults(handler=handler)
        return p

    add("brackets", _cmd_brackets, [common], "enumerate bracket words of the generators")

    p = add("larc", _cmd_larc, [common], "full-rank test of the generated Lie algebra")
    p.add_argument("--point", action="append", type=_floats_csv, help="sample point (repeatable)")

    p = add("arwar", _cmd_arwar, [common], "drift + iterated-input-bracket rank test")
    p.add_argument("--point", action="append", type=_floats_csv)

    p = add("consing", _cmd_consing, [common], "endpoint-map image rank test (drift excluded)")
    p.add_argument("--point", action="append", type=_floats_csv)

    p = add("reach", _cmd_reach, [common, located], "sample a reachable-set occupancy grid")
    p.add_argument("--backward", action="store_true", help="time-reversed grid")
    p.add_argument("--max-time", type=float, help="time horizon per rollout")

    p = add("duality", _cmd_duality, [common, located], "forward/backward agreement on pairs")
    p.add_argument("--pairs", type=int, default=5, help="number of random pairs")
    p.add_argument("--max-time", type=float)

    p = add("find-orbit", _cmd_find_orbit, [common, located], "node graph, cycle walk, closure")
    p.add_argument("--nodes", type=_counts, default=(4, 4), help="lattice counts, e.g. 8x8")
    p.add_argument("--jitter", type=float, default=0.0, help="node jitter fraction")
    p.add_argument("--max-time", type=float)

    p = add(
        "check-regular", _cmd_check_regular, [common, located], "two-sided regularity verdicts"
    )
    p.add_argument("--period", type=float, help="loop duration (default: first axis period)")
    p.add_argument("--radius", type=int, default=2, help="interior block radius in cells")
    p.add_argument("--exclude", type=int, help="base-point exclusion radius in cells")
    p.add_argument("--max-time", type=float)

    p = add(
        "neighborhood",
        _cmd_neighborhood,
        [common, located],
        "connect random pairs of the two-sided reachable band",
    )
    p.add_argument("--period", type=float)
    p.add_argument("--pairs", type=int, default=25)
    p.add_argument("--max-time", type=float)

    p = add("extremal", _cmd_extremal, [common, located], "covector lift condition residuals")
    p.add_argument("--period", type=float)
    p.add_argument("--p0", type=_floats_csv, help="initial covector (default last-axis unit)")

    p = add(
        "verify-martinet",
        _cmd_verify_martinet,
        [common],
        "full verification battery for the bundled degenerate-plane benchmark",
        source=False,
    )
    p.add_argument("--k", type=int, default=3, help="transverse degree (odd, >= 3)")
    p.add_argument("--band-budget", type=int, help="rollouts for the neighborhood band")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
