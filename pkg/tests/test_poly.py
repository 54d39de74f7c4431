from fractions import Fraction

import pytest

from orbitreach.poly import ParseError, Polynomial, parse_polynomial


def test_canonical_form_merges_and_sorts():
    p = Polynomial.from_terms(2, [((1, 0), 2), ((0, 2), 1), ((1, 0), -2), ((0, 0), 5)])
    assert p.terms == (((0, 2), Fraction(1)), ((0, 0), Fraction(5)))


def test_zero_and_equality_are_syntactic():
    x1 = Polynomial.variable(2, 0)
    x2 = Polynomial.variable(2, 1)
    assert (x1 * x2 - x2 * x1).is_zero
    assert x1 + x2 == x2 + x1
    assert hash(x1 + x2) == hash(x2 + x1)


def test_arithmetic_against_expansion():
    x1 = Polynomial.variable(2, 0)
    x2 = Polynomial.variable(2, 1)
    lhs = (x1 + x2) ** 2
    rhs = x1 * x1 + 2 * (x1 * x2) + x2 * x2
    assert lhs == rhs
    assert lhs.degree() == 2


def test_pow_edge_cases():
    x = Polynomial.variable(1, 0)
    assert x ** 0 == Polynomial.constant(1, 1)
    assert x ** 1 == x
    with pytest.raises(ValueError):
        x ** -1


def test_diff():
    p = parse_polynomial("x1^3*x2 - 2*x2 + 7", 2)
    assert p.diff(0) == parse_polynomial("3*x1^2*x2", 2)
    assert p.diff(1) == parse_polynomial("x1^3 - 2", 2)
    assert Polynomial.constant(2, 5).diff(0).is_zero


def test_eval_exact_and_float():
    p = parse_polynomial("1/2*x1^2 - x2 + 3", 2)
    assert p.eval_exact([Fraction(3), Fraction(1, 2)]) == Fraction(7)
    assert p.eval_float([3.0, 0.5]) == pytest.approx(7.0)


def test_parse_rationals_and_unary_minus():
    assert parse_polynomial("-x1^2", 1) == -(Polynomial.variable(1, 0) ** 2)
    assert parse_polynomial("3/2", 1) == Polynomial.constant(1, Fraction(3, 2))
    assert parse_polynomial("(x1 + 1)*(x1 - 1)", 1) == parse_polynomial("x1^2 - 1", 1)


def test_str_round_trip():
    src = "x2^3 - 1/2*x1*x2 + 4"
    p = parse_polynomial(src, 3)
    assert parse_polynomial(str(p), 3) == p
    assert str(Polynomial.zero(2)) == "0"


def test_parse_errors_carry_position():
    with pytest.raises(ParseError) as e:
        parse_polynomial("x1 + x9", 3)
    assert e.value.line == 1 and e.value.col == 6
    with pytest.raises(ParseError) as e:
        parse_polynomial("x1 + ", 3)
    assert "unexpected token" in e.value.message
    with pytest.raises(ParseError):
        parse_polynomial("x1 $ 2", 3)
    with pytest.raises(ParseError):
        parse_polynomial("1/0", 1)
    with pytest.raises(ParseError) as e:
        parse_polynomial("x1 + y", 2, line=10, col=5)
    assert e.value.line == 10 and e.value.col == 10


def test_dimension_guards():
    with pytest.raises(ValueError):
        Polynomial.from_terms(2, [((1,), 1)])
    with pytest.raises(ValueError):
        Polynomial.variable(2, 0) + Polynomial.variable(3, 0)
