"""Definition-file parsing: typed sections, positions on errors, round trips."""

import math
import textwrap

import pytest

from conftest import TWO_PI, make_torus_shift

from orbitreach.martinet import MartinetConfig, build
from orbitreach.poly import ParseError
from orbitreach.specfile import (
    SpecParams,
    bundled_spec_names,
    load_spec,
    parse_spec,
    parse_spec_path,
    pretty_print,
)

MINIMAL = textwrap.dedent(
    """
    [space]
    dim = 2
    periods = [2*pi, 2*pi]

    [fields]
    X = [1, 0]
    Y = [0, 1]

    [system]
    kind = affine
    drift = X
    inputs = [Y]
    control_box = [[-1, 1]]
    """
)


def err(text: str) -> ParseError:
    with pytest.raises(ParseError) as excinfo:
        parse_spec(textwrap.dedent(text))
    return excinfo.value


def test_minimal_affine_document_parses():
    spec = parse_spec(MINIMAL)
    assert spec.system == make_torus_shift()
    assert spec.drift_name == "X"
    assert spec.input_names == ("Y",)
    assert spec.params == SpecParams()


def test_bundled_names_are_the_four_examples():
    assert bundled_spec_names() == ["degenerate", "line", "martinet", "torus"]


def test_bundled_martinet_matches_the_builder():
    spec = load_spec("martinet")
    assert spec.system == build(MartinetConfig(k=3))
    assert spec.params.budget == 50_000
    assert spec.params.step == 1e-3
    assert spec.params.depth == 4


def test_bundled_specs_round_trip_through_pretty_print():
    for name in bundled_spec_names():
        spec = load_spec(name)
        text = pretty_print(spec)
        again = parse_spec(text)
        assert again.system == spec.system, name
        assert again.params == spec.params, name
        assert pretty_print(again) == text, name


def test_examples_directory_copies_match_bundled(tmp_path):
    import pathlib

    examples = pathlib.Path(__file__).resolve().parent.parent / "examples"
    if not examples.is_dir():
        pytest.skip("no examples/ directory in this checkout")
    for name in bundled_spec_names():
        path = examples / f"{name}.sys"
        assert path.exists(), path
        assert parse_spec_path(path).system == load_spec(name).system


def test_finite_kind_document():
    spec = load_spec("line")
    assert spec.system.kind == "finite"
    assert [lbl for lbl, _ in spec.system.controls] == ["F", "B"]
    assert spec.drift_name is None
    assert spec.input_names == ("F", "B")


def test_load_spec_unknown_name_lists_bundled(tmp_path):
    with pytest.raises(FileNotFoundError, match="martinet"):
        load_spec(tmp_path / "nope.sys")


def test_period_forms():
    text = MINIMAL.replace("[2*pi, 2*pi]", "[pi, 7.5]")
    spec = parse_spec(text)
    assert spec.system.space.periods == (math.pi, 7.5)
    assert parse_spec(MINIMAL).system.space.periods == (TWO_PI, TWO_PI)
    e = err(MINIMAL.replace("[2*pi, 2*pi]", "[twopi, none]"))
    assert "period" in str(e)


def test_unclosed_list_reports_bracket_expectation():
    bad = MINIMAL.replace("X = [1, 0]", "X = [1, 0")
    e = err(bad)
    assert "expected ']'" in str(e)
    lineno = next(
        i for i, text in enumerate(bad.splitlines(), start=1) if text.startswith("X = [1, 0")
    )
    assert e.line == lineno
    # the column is one past the end of the unclosed value
    assert e.col == len("X = [1, 0") + 1


def test_duplicate_field_name_rejected():
    bad = MINIMAL.replace("Y = [0, 1]", "Y = [0, 1]\nX = [1, 1]")
    e = err(bad)
    assert "duplicate key 'X'" in str(e)


def test_duplicate_section_rejected():
    e = err(MINIMAL + "\n[space]\ndim = 2\n")
    assert "duplicate section" in str(e)


def test_unknown_section_and_key_rejected():
    e = err(MINIMAL + "\n[plotting]\ncolor = red\n")
    assert "unknown section 'plotting'" in str(e)
    e = err(MINIMAL.replace("dim = 2", "dim = 2\n    flavor = mild"))
    assert "unknown key 'flavor'" in str(e)


def test_key_outside_section_rejected():
    e = err("dim = 2\n[space]\ndim = 2\n")
    assert "outside any section" in str(e)


def test_malformed_line_rejected():
    e = err(MINIMAL + "\njust some words\n")
    assert "key = value" in str(e)


def test_polynomial_errors_carry_document_positions():
    bad = MINIMAL.replace("X = [1, 0]", "X = [1, x9]")
    e = err(bad)
    assert "x9" in str(e)
    lineno = next(
        i for i, text in enumerate(bad.splitlines(), start=1) if text.startswith("X = [1, x9]")
    )
    assert e.line == lineno
    assert e.col == "X = [1, x9]".index("x9") + 1


def test_unknown_field_reference():
    e = err(MINIMAL.replace("drift = X", "drift = Z"))
    assert "unknown field 'Z'" in str(e)


def test_dimension_mismatches():
    e = err(MINIMAL.replace("X = [1, 0]", "X = [1, 0, 0]"))
    assert "3 components for dimension 2" in str(e)
    e = err(MINIMAL.replace("[2*pi, 2*pi]", "[2*pi]"))
    assert "1 entries for dimension 2" in str(e)
    e = err(MINIMAL.replace("control_box = [[-1, 1]]", "control_box = [[-1, 1], [0, 1]]"))
    assert "2 intervals for 1 inputs" in str(e)


def test_empty_control_set_rejected():
    e = err(MINIMAL.replace("inputs = [Y]", "inputs = []"))
    assert "empty control set" in str(e)
    finite = MINIMAL.replace(
        "kind = affine\ndrift = X\ninputs = [Y]\ncontrol_box = [[-1, 1]]",
        "kind = finite\ncontrols = []",
    )
    assert "finite" in finite  # the replacement must have matched
    e = err(finite)
    assert "empty control set" in str(e)


def test_missing_sections_and_keys():
    e = err("[space]\ndim = 2\n")
    assert "missing [fields] section" in str(e)
    e = err(MINIMAL.replace("kind = affine\n", ""))
    assert "missing the 'kind' key" in str(e)
    e = err(MINIMAL.replace("dim = 2\n", ""))
    assert "missing the 'dim' key" in str(e)


def test_constraints_parse_and_validate():
    constrained = MINIMAL.replace(
        "periods = [2*pi, 2*pi]",
        "periods = [2*pi, none]\n    constraints = [x2^2 < 1/4]",
    )
    spec = parse_spec(constrained)
    c = spec.system.space.constraints[0]
    assert c.bound == 0.25
    assert c.satisfied((0.0, 0.4)) and not c.satisfied((0.0, 0.6))
    e = err(MINIMAL.replace("periods = [2*pi, 2*pi]", "constraints = [x2^2]"))
    assert "poly < bound" in str(e)


def test_params_section_types():
    text = MINIMAL + textwrap.dedent(
        """
        [params]
        step = 2e-3
        budget = 123
        max_time = 6.5
        max_segments = 4
        h = [0.1, 0.2]
        seed = 9
        depth = 5
        """
    )
    params = parse_spec(text).params
    assert params == SpecParams(
        step=2e-3, budget=123, max_time=6.5, max_segments=4, h=(0.1, 0.2), seed=9, depth=5
    )
    assert params.to_dict()["h"] == [0.1, 0.2]
    e = err(MINIMAL + "\n[params]\nbudget = 1.5\n")
    assert "expected an integer" in str(e)


def test_comments_and_blank_lines_ignored():
    text = MINIMAL.replace("dim = 2", "dim = 2  # planar\n\n    # more commentary")
    assert parse_spec(text).system == make_torus_shift()
