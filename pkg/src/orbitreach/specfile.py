"""Plain-text system-definition files.

A definition has bracketed sections holding `key = value` lines; `#` starts
a comment and blank lines are ignored:

    [space]
    dim = 3
    periods = [2*pi, none, none]
    constraints = [x2^2 + x3^2 < 1]

    [fields]
    X = [1, 0, x2^3]
    Y = [0, 1, 0]

    [system]
    kind = affine
    drift = X
    inputs = [Y]
    control_box = [[-1, 1]]

    [params]
    step = 1e-3
    budget = 50000
    h = 0.05
    seed = 0
    depth = 4

Values are scalars or (nested) comma-separated lists in square brackets.
Field components use the polynomial grammar of the `poly` module (integer or
rational coefficients, variables x1..xn, operators + - * / ^).  Period
entries accept `none`, a number, `pi`, or `<number>*pi`.  Unknown sections,
unknown keys, and duplicate keys or field names are rejected, and every
error carries a 1-based line/column position.  `pretty_print` regenerates a
canonical document that parses back to an equal system.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .dynamics import ControlSystem
from .fields import PolyVectorField
from .geometry import DomainConstraint, StateSpace
from .poly import ParseError, parse_polynomial

SECTIONS = ("space", "fields", "system", "params")
PARAM_KEYS = ("step", "budget", "max_time", "max_segments", "h", "seed", "depth")


@dataclass(frozen=True)
class Raw:
    """Scalar token with its document position."""

    text: str
    line: int
    col: int


RawValue = Union[Raw, list]


@dataclass(frozen=True)
class SpecParams:
    """Optional tuning block of a definition file; None means unset."""

    step: Optional[float] = None
    budget: Optional[int] = None
    max_time: Optional[float] = None
    max_segments: Optional[int] = None
    h: Optional[Union[float, tuple[float, ...]]] = None
    seed: Optional[int] = None
    depth: Optional[int] = None

    def to_dict(self) -> dict:
        out = {}
        for key in PARAM_KEYS:
            val = getattr(self, key)
            if val is not None:
                out[key] = list(val) if isinstance(val, tuple) else val
        return out


@dataclass(frozen=True)
class ParsedSpec:
    """A definition file reduced to a system plus its surrounding names."""

    system: ControlSystem
    params: SpecParams
    fields: tuple[tuple[str, PolyVectorField], ...]  # declaration order
    drift_name: Optional[str]
    input_names: tuple[str, ...]  # affine input names or finite labels


# -- low-level scanning ----------------------------------------------------------


class _Reader:
    """Cursor over one value string with absolute column tracking."""

    def __init__(self, text: str, line: int, col0: int):
        self.text = text
        self.i = 0
        self.line = line
        self.col0 = col0

    def col(self) -> int:
        return self.col0 + self.i

    def at_end(self) -> bool:
        return self.i >= len(self.text)

    def peek(self) -> str:
        return self.text[self.i] if self.i < len(self.text) else ""

    def skip_ws(self) -> None:
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def value(self) -> RawValue:
        self.skip_ws()
        if self.at_end():
            raise ParseError("expected a value", self.line, self.col())
        if self.peek() == "[":
            return self.list_value()
        return self.scalar()

    def list_value(self) -> list:
        self.i += 1
        items: list[RawValue] = []
        self.skip_ws()
        if self.peek() == "]":
            self.i += 1
            return items
        while True:
            items.append(self.value())
            self.skip_ws()
            ch = self.peek()
            if ch == ",":
                self.i += 1
                continue
            if ch == "]":
                self.i += 1
                return items
            raise ParseError("expected ']'", self.line, self.col())

    def scalar(self) -> Raw:
        start = self.i
        while self.i < len(self.text):
            ch = self.text[self.i]
            if ch in ",]":
                break
            if ch == "[":
                raise ParseError("unexpected '['", self.line, self.col())
            self.i += 1
        text = self.text[start : self.i].rstrip()
        if not text:
            raise ParseError("expected a value", self.line, self.col0 + start)
        return Raw(text, self.line, self.col0 + start)


def _scan_value(text: str, line: int, col: int) -> RawValue:
    reader = _Reader(text, line, col)
    val = reader.value()
    reader.skip_ws()
    if not reader.at_end():
        raise ParseError("unexpected text after value", line, reader.col())
    return val


_SECTION_RE = re.compile(r"^\s*\[([A-Za-z_][A-Za-z0-9_]*)\]\s*$")
_KEY_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S.*)$")

_Entry = tuple[RawValue, int, int]  # value, line, col of key


def _scan_document(text: str) -> dict[str, dict[str, _Entry]]:
    sections: dict[str, dict[str, _Entry]] = {}
    current: Optional[str] = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0]
        if not line.strip():
            continue
        m = _SECTION_RE.match(line)
        if m:
            name = m.group(1)
            if name not in SECTIONS:
                raise ParseError(f"unknown section '{name}'", lineno, m.start(1) + 1)
            if name in sections:
                raise ParseError(f"duplicate section '{name}'", lineno, m.start(1) + 1)
            sections[name] = {}
            current = name
            continue
        m = _KEY_RE.match(line)
        if not m:
            raise ParseError("expected 'key = value' or '[section]'", lineno, 1)
        if current is None:
            raise ParseError("key outside any section", lineno, m.start(1) + 1)
        key = m.group(1)
        if key in sections[current]:
            raise ParseError(f"duplicate key '{key}'", lineno, m.start(1) + 1)
        value = _scan_value(m.group(2), lineno, m.start(2) + 1)
        sections[current][key] = (value, lineno, m.start(1) + 1)
    return sections


# -- typed readers ---------------------------------------------------------------


def _want_scalar(val: RawValue, what: str) -> Raw:
    if isinstance(val, list):
        first = _first_pos(val)
        raise ParseError(f"expected {what}, got a list", first[0], first[1])
    return val


def _want_list(val: RawValue, what: str) -> list:
    if not isinstance(val, list):
        raise ParseError(f"expected a list of {what}", val.line, val.col)
    return val


def _first_pos(val: RawValue) -> tuple[int, int]:
    while isinstance(val, list):
        if not val:
            return (0, 0)
        val = val[0]
    return (val.line, val.col)


def _as_int(raw: Raw, what: str = "an integer") -> int:
    try:
        return int(raw.text)
    except ValueError:
        raise ParseError(f"expected {what}, got '{raw.text}'", raw.line, raw.col) from None


def _as_float(raw: Raw, what: str = "a number") -> float:
    try:
        return float(raw.text)
    except ValueError:
        pass
    try:  # rational literals like 1/4
        from fractions import Fraction

        return float(Fraction(raw.text))
    except (ValueError, ZeroDivisionError):
        raise ParseError(f"expected {what}, got '{raw.text}'", raw.line, raw.col) from None


def _as_period(raw: Raw) -> Optional[float]:
    text = raw.text.strip()
    if text.lower() == "none":
        return None
    if text.lower() == "pi":
        return math.pi
    m = re.fullmatch(r"(.+?)\s*\*\s*pi", text, flags=re.IGNORECASE)
    if m:
        return _as_float(Raw(m.group(1), raw.line, raw.col)) * math.pi
    value = _as_float(raw, "a period (number, pi, <number>*pi, or none)")
    return value


def _as_name(raw: Raw) -> str:
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", raw.text):
        raise ParseError(f"expected a field name, got '{raw.text}'", raw.line, raw.col)
    return raw.text


def _reject_unknown(entries: dict[str, _Entry], allowed: tuple[str, ...], section: str) -> None:
    for key, (_, line, col) in entries.items():
        if key not in allowed:
            raise ParseError(f"unknown key '{key}' in [{section}]", line, col)


def _require(entries: dict[str, _Entry], key: str, section: str) -> _Entry:
    if key not in entries:
        raise ParseError(f"[{section}] section is missing the '{key}' key", 1, 1)
    return entries[key]


# -- section interpreters ---------------------------------------------------------


def _read_space(entries: dict[str, _Entry]) -> StateSpace:
    _reject_unknown(entries, ("dim", "periods", "constraints"), "space")
    dim_val, _, _ = _require(entries, "dim", "space")
    dim = _as_int(_want_scalar(dim_val, "the dimension"))
    if dim < 1:
        raw = _want_scalar(dim_val, "the dimension")
        raise ParseError("dim must be >= 1", raw.line, raw.col)

    periods: tuple[Optional[float], ...] = (None,) * dim
    if "periods" in entries:
        val, line, col = entries["periods"]
        items = _want_list(val, "periods")
        if len(items) != dim:
            raise ParseError(
                f"periods lists {len(items)} entries for dimension {dim}", line, col
            )
        periods = tuple(_as_period(_want_scalar(v, "a period")) for v in items)

    constraints: tuple[DomainConstraint, ...] = ()
    if "constraints" in entries:
        val, line, col = entries["constraints"]
        items = _want_list(val, "constraints")
        built = []
        for item in items:
            raw = _want_scalar(item, "a constraint 'poly < bound'")
            if "<" not in raw.text:
                raise ParseError("constraint needs the form 'poly < bound'", raw.line, raw.col)
            left, right = raw.text.split("<", 1)
            poly = parse_polynomial(left, dim, line=raw.line, col=raw.col)
            bound = _as_float(Raw(right.strip(), raw.line, raw.col + len(left) + 1), "a bound")
            built.append(DomainConstraint(poly, bound))
        constraints = tuple(built)
    return StateSpace(dim=dim, periods=periods, constraints=constraints)


def _read_fields(
    entries: dict[str, _Entry], dim: int
) -> tuple[tuple[str, PolyVectorField], ...]:
    if not entries:
        raise ParseError("[fields] section declares no fields", 1, 1)
    out = []
    for name, (val, line, col) in entries.items():
        items = _want_list(val, "polynomial components")
        if len(items) != dim:
            raise ParseError(
                f"field '{name}' has {len(items)} components for dimension {dim}", line, col
            )
        comps = []
        for item in items:
            raw = _want_scalar(item, "a polynomial")
            comps.append(parse_polynomial(raw.text, dim, line=raw.line, col=raw.col))
        out.append((name, PolyVectorField(tuple(comps))))
    return tuple(out)


def _lookup(fields: tuple[tuple[str, PolyVectorField], ...], raw: Raw) -> PolyVectorField:
    for name, f in fields:
        if name == raw.text:
            return f
    raise ParseError(f"unknown field '{raw.text}'", raw.line, raw.col)


def _read_system(
    entries: dict[str, _Entry],
    space: StateSpace,
    fields: tuple[tuple[str, PolyVectorField], ...],
) -> tuple[ControlSystem, Optional[str], tuple[str, ...]]:
    kind_val, _, _ = _require(entries, "kind", "system")
    kind_raw = _want_scalar(kind_val, "the system kind")
    kind = kind_raw.text
    if kind not in ("affine", "finite"):
        raise ParseError(
            f"kind must be 'affine' or 'finite', got '{kind}'", kind_raw.line, kind_raw.col
        )

    if kind == "affine":
        _reject_unknown(entries, ("kind", "drift", "inputs", "control_box"), "system")
        drift_raw = _want_scalar(_require(entries, "drift", "system")[0], "a field name")
        drift = _lookup(fields, drift_raw)
        inputs_val, in_line, in_col = _require(entries, "inputs", "system")
        input_items = _want_list(inputs_val, "field names")
        if not input_items:
            raise ParseError("empty control set: no input fields", in_line, in_col)
        input_raws = [_want_scalar(v, "a field name") for v in input_items]
        inputs = tuple(_lookup(fields, r) for r in input_raws)
        box_val, box_line, box_col = _require(entries, "control_box", "system")
        box_items = _want_list(box_val, "bounds pairs")
        if len(box_items) != len(inputs):
            raise ParseError(
                f"control_box lists {len(box_items)} intervals for {len(inputs)} inputs",
                box_line,
                box_col,
            )
        box = []
        for item in box_items:
            if not isinstance(item, list) or len(item) != 2:
                pos = _first_pos(item)
                raise ParseError("control_box entries must be [lo, hi]", pos[0], pos[1])
            lo = _as_float(_want_scalar(item[0], "a bound"))
            hi = _as_float(_want_scalar(item[1], "a bound"))
            box.append((lo, hi))
        system = ControlSystem(
            space=space,
            kind="affine",
            drift=drift,
            inputs=inputs,
            control_box=tuple(box),
        )
        return system, drift_raw.text, tuple(r.text for r in input_raws)

    _reject_unknown(entries, ("kind", "controls"), "system")
    ctrl_val, c_line, c_col = _require(entries, "controls", "system")
    ctrl_items = _want_list(ctrl_val, "field names")
    if not ctrl_items:
        raise ParseError("empty control set: no control fields", c_line, c_col)
    ctrl_raws = [_want_scalar(v, "a field name") for v in ctrl_items]
    controls = tuple((r.text, _lookup(fields, r)) for r in ctrl_raws)
    system = ControlSystem(space=space, kind="finite", controls=controls)
    return system, None, tuple(r.text for r in ctrl_raws)


def _read_params(entries: dict[str, _Entry]) -> SpecParams:
    _reject_unknown(entries, PARAM_KEYS, "params")
    kwargs: dict = {}
    for key, (val, line, col) in entries.items():
        if key in ("budget", "max_segments", "seed", "depth"):
            kwargs[key] = _as_int(_want_scalar(val, "an integer"))
        elif key in ("step", "max_time"):
            kwargs[key] = _as_float(_want_scalar(val, "a number"))
        elif key == "h":
            if isinstance(val, list):
                kwargs[key] = tuple(
                    _as_float(_want_scalar(v, "a cell size")) for v in val
                )
            else:
                kwargs[key] = _as_float(val)
    return SpecParams(**kwargs)


# -- entry points -----------------------------------------------------------------


def parse_spec(text: str) -> ParsedSpec:
    """Parse a definition document into a system plus optional parameters."""
    sections = _scan_document(text)
    for required in ("space", "fields", "system"):
        if required not in sections:
            raise ParseError(f"missing [{required}] section", 1, 1)
    space = _read_space(sections["space"])
    fields = _read_fields(sections["fields"], space.dim)
    try:
        system, drift_name, input_names = _read_system(sections["system"], space, fields)
    except ParseError:
        raise
    except ValueError as exc:  # constructor-level validation (dimension mismatches)
        raise ParseError(str(exc), 1, 1) from exc
    params = _read_params(sections.get("params", {}))
    return ParsedSpec(
        system=system,
        params=params,
        fields=fields,
        drift_name=drift_name,
        input_names=input_names,
    )


def parse_spec_path(path: Union[str, Path]) -> ParsedSpec:
    return parse_spec(Path(path).read_text())


def bundled_spec_names() -> list[str]:
    root = resources.files("orbitreach") / "specs"
    return sorted(p.name[: -len(".sys")] for p in root.iterdir() if p.name.endswith(".sys"))


def load_spec(source: Union[str, Path]) -> ParsedSpec:
    """Load a definition from a path, or by bundled name (e.g. 'martinet')."""
    path = Path(source)
    if path.exists():
        return parse_spec(path.read_text())
    name = str(source)
    candidate = resources.files("orbitreach") / "specs" / f"{name}.sys"
    if candidate.is_file():
        return parse_spec(candidate.read_text())
    raise FileNotFoundError(
        f"no such file or bundled definition: {source!r} "
        f"(bundled: {', '.join(bundled_spec_names())})"
    )


def _fmt_float(x: float) -> str:
    return repr(float(x))


def pretty_print(spec: ParsedSpec) -> str:
    """Canonical document text; parsing it back yields an equal system."""
    space = spec.system.space
    lines = ["[space]", f"dim = {space.dim}"]
    if any(p is not None for p in space.periods):
        rendered = ", ".join(
            "none" if p is None else _fmt_float(p) for p in space.periods
        )
        lines.append(f"periods = [{rendered}]")
    if space.constraints:
        rendered = ", ".join(f"{c.poly} < {_fmt_float(c.bound)}" for c in space.constraints)
        lines.append(f"constraints = [{rendered}]")

    lines += ["", "[fields]"]
    for name, f in spec.fields:
        lines.append(f"{name} = [" + ", ".join(str(c) for c in f.components) + "]")

    lines += ["", "[system]", f"kind = {spec.system.kind}"]
    if spec.system.kind == "affine":
        lines.append(f"drift = {spec.drift_name}")
        lines.append("inputs = [" + ", ".join(spec.input_names) + "]")
        rendered = ", ".join(
            f"[{_fmt_float(lo)}, {_fmt_float(hi)}]" for lo, hi in spec.system.control_box
        )
        lines.append(f"control_box = [{rendered}]")
    else:
        lines.append("controls = [" + ", ".join(spec.input_names) + "]")

    params = spec.params.to_dict()
    if params:
        lines += ["", "[params]"]
        for key in PARAM_KEYS:
            if key in params:
                val = params[key]
                if isinstance(val, list):
                    lines.append(f"{key} = [" + ", ".join(_fmt_float(v) for v in val) + "]")
                elif isinstance(val, float):
                    lines.append(f"{key} = {_fmt_float(val)}")
                else:
                    lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
