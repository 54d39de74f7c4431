"""Deterministic report rendering.

JSON output is canonical -- sorted keys, two-space indentation, repr-exact
floats, trailing newline -- so identical report dictionaries serialize to
identical bytes.  Text output is a human-oriented key/value outline of the
same dictionary, with pass/fail lines for batteries.
"""

from __future__ import annotations

import json
from typing import Sequence


def canonical_json(report: dict) -> str:
    """Byte-stable serialization of a report dictionary."""
    return (
        json.dumps(report, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
        + "\n"
    )


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "-"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt_value(v) for v in value) + "]"
    return str(value)


def _render_into(data: dict, lines: list[str], indent: int) -> None:
    pad = "  " * indent
    for key, value in data.items():
        if key == "schema":
            continue
        if isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            _render_into(value, lines, indent + 1)
        else:
            lines.append(f"{pad}{key}: {_fmt_value(value)}")


def render_report(title: str, data: dict) -> str:
    """Indented key/value outline of a report dictionary."""
    lines = [title]
    _render_into(data, lines, 1)
    return "\n".join(lines) + "\n"


def check_line(name: str, passed: bool) -> str:
    return f"  [{'PASS' if passed else 'FAIL'}] {name}"


def render_battery(title: str, items: Sequence[tuple[str, bool]]) -> str:
    """Pass/fail table with a one-line overall verdict."""
    lines = [title]
    lines += [check_line(name, ok) for name, ok in items]
    overall = all(ok for _, ok in items)
    lines.append(f"overall: {'PASS' if overall else 'FAIL'}")
    return "\n".join(lines) + "\n"
