"""Exact multivariate polynomials over the rationals.

Coordinates are named x1..xn.  A polynomial is stored in canonical form
(graded-lex sorted monomials, zero terms dropped, Fraction coefficients), so
structural equality is syntactic equality and the type is hashable.  This is
the algebra underneath the vector-field and Lie-bracket machinery; numeric
hot loops compile these polynomials down to float evaluators elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence, Union

Exponents = tuple[int, ...]
Scalar = Union[int, Fraction]


class ParseError(ValueError):
    """Parse failure with 1-based line/column position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.message = message
        self.line = line
        self.col = col


def _term_key(exps: Exponents) -> tuple:
    return (sum(exps), exps)


@dataclass(frozen=True)
class Polynomial:
    """Canonical-form polynomial in x1..x<dim> with rational coefficients."""

    dim: int
    terms: tuple[tuple[Exponents, Fraction], ...]

    # -- constructors ------------------------------------------------------

    @staticmethod
    def from_terms(dim: int, items: Iterable[tuple[Exponents, Scalar]]) -> "Polynomial":
        acc: dict[Exponents, Fraction] = {}
        for exps, coef in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != dim:
                raise ValueError(f"exponent tuple {exps} does not match dim={dim}")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            c = acc.get(exps, Fraction(0)) + Fraction(coef)
            if c:
                acc[exps] = c
            else:
                acc.pop(exps, None)
        ordered = tuple(sorted(acc.items(), key=lambda t: _term_key(t[0]), reverse=True))
        return Polynomial(dim, ordered)

    @staticmethod
    def zero(dim: int) -> "Polynomial":
        return Polynomial(dim, ())

    @staticmethod
    def constant(dim: int, c: Scalar) -> "Polynomial":
        return Polynomial.from_terms(dim, [((0,) * dim, Fraction(c))])

    @staticmethod
    def variable(dim: int, index: int) -> "Polynomial":
        """x<index+1> as a polynomial; index is 0-based."""
        if not 0 <= index < dim:
            raise ValueError(f"variable index {index} out of range for dim={dim}")
        exps = tuple(1 if i == index else 0 for i in range(dim))
        return Polynomial(dim, ((exps, Fraction(1)),))

    # -- algebra -----------------------------------------------------------

    def _check(self, other: "Polynomial") -> None:
        if self.dim != other.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        return Polynomial.from_terms(self.dim, list(self.terms) + list(other.terms))

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.dim, tuple((e, -c) for e, c in self.terms))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __mul__(self, other: Union["Polynomial", Scalar]) -> "Polynomial":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        self._check(other)
        items = []
        for e1, c1 in self.terms:
            for e2, c2 in other.terms:
                items.append((tuple(a + b for a, b in zip(e1, e2)), c1 * c2))
        return Polynomial.from_terms(self.dim, items)

    def __rmul__(self, other: Scalar) -> "Polynomial":
        return self.scale(other)

    def scale(self, c: Scalar) -> "Polynomial":
        c = Fraction(c)
        if not c:
            return Polynomial.zero(self.dim)
        return Polynomial(self.dim, tuple((e, c * k) for e, k in self.terms))

    def __pow__(self, n: int) -> "Polynomial":
        if n < 0:
            raise ValueError("negative power")
        out = Polynomial.constant(self.dim, 1)
        base = self
        while n:
            if n & 1:
                out = out * base
            base = base * base if n > 1 else base
            n >>= 1
        return out

    def diff(self, index: int) -> "Polynomial":
        """Partial derivative with respect to x<index+1> (index 0-based)."""
        items = []
        for exps, coef in self.terms:
            e = exps[index]
            if e:
                lowered = tuple(v - 1 if i == index else v for i, v in enumerate(exps))
                items.append((lowered, coef * e))
        return Polynomial.from_terms(self.dim, items)

    # -- queries -----------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return sum(self.terms[0][0]) if self.terms else -1

    def __call__(self, point: Sequence) -> float:
        return self.eval_float(point)

    def eval_float(self, point: Sequence) -> float:
        total = 0.0
        for exps, coef in self.terms:
            v = float(coef)
            for x, e in zip(point, exps):
                if e:
                    v *= float(x) ** e
            total += v
        return total

    def eval_batch(self, points) -> "np.ndarray":
        """Evaluate at many points at once; `points` is an (m, dim) array."""
        import numpy as np

        out = np.zeros(len(points))
        for exps, coef in self.terms:
            v = np.full(len(points), float(coef))
            for j, e in enumerate(exps):
                if e:
                    col = points[:, j]
                    for _ in range(e):
                        v = v * col
            out += v
        return out

    def eval_exact(self, point: Sequence[Scalar]) -> Fraction:
        total = Fraction(0)
        for exps, coef in self.terms:
            v = coef
            for x, e in zip(point, exps):
                if e:
                    v *= Fraction(x) ** e
            total += v
        return total

    # -- printing ----------------------------------------------------------

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        chunks = []
        for i, (exps, coef) in enumerate(self.terms):
            parts = []
            abs_coef = -coef if coef < 0 else coef
            vars_txt = [
                f"x{j + 1}" + (f"^{e}" if e > 1 else "")
                for j, e in enumerate(exps)
                if e
            ]
            if not vars_txt or abs_coef != 1:
                parts.append(str(abs_coef))
            parts.extend(vars_txt)
            body = "*".join(parts)
            if i == 0:
                chunks.append(("-" if coef < 0 else "") + body)
            else:
                chunks.append(("- " if coef < 0 else "+ ") + body)
        return " ".join(chunks)

    def __repr__(self) -> str:
        return f"Polynomial({self.dim}, {self})"


# -- parsing ---------------------------------------------------------------

_TOKEN_KINDS = {"num", "name", "op", "end"}


class _Tokenizer:
    def __init__(self, src: str, line: int, col: int):
        self.src = src
        self.pos = 0
        self.line = line
        self.col = col
        self.tokens: list[tuple[str, str, int, int]] = []
        self._scan()
        self.idx = 0

    def _scan(self) -> None:
        src = self.src
        i = 0
        line, col = self.line, self.col
        while i < len(src):
            ch = src[i]
            if ch == "\n":
                line += 1
                col = 1
                i += 1
                continue
            if ch in " \t\r":
                i += 1
                col += 1
                continue
            if ch.isdigit():
                j = i
                while j < len(src) and src[j].isdigit():
                    j += 1
                self.tokens.append(("num", src[i:j], line, col))
                col += j - i
                i = j
                continue
            if ch.isalpha() or ch == "_":
                j = i
                while j < len(src) and (src[j].isalnum() or src[j] == "_"):
                    j += 1
                self.tokens.append(("name", src[i:j], line, col))
                col += j - i
                i = j
                continue
            if ch in "+-*/^()":
                self.tokens.append(("op", ch, line, col))
                i += 1
                col += 1
                continue
            raise ParseError(f"unexpected character {ch!r}", line, col)
        self.tokens.append(("end", "", line, col))

    def peek(self) -> tuple[str, str, int, int]:
        return self.tokens[self.idx]

    def next(self) -> tuple[str, str, int, int]:
        tok = self.tokens[self.idx]
        self.idx += 1
        return tok


class _PolyParser:
    """Recursive descent over: expr := term (+/- term)*, term := factor (* factor)*,
    factor := atom (^ INT)?, atom := RATIONAL | VAR | (expr) | - factor."""

    def __init__(self, tokens: _Tokenizer, dim: int):
        self.toks = tokens
        self.dim = dim

    def parse(self) -> Polynomial:
        p = self.expr()
        kind, text, line, col = self.toks.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", line, col)
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while True:
            kind, text, _, _ = self.toks.peek()
            if kind == "op" and text in "+-":
                self.toks.next()
                q = self.term()
                p = p + q if text == "+" else p - q
            else:
                return p

    def term(self) -> Polynomial:
        p = self.factor()
        while True:
            kind, text, _, _ = self.toks.peek()
            if kind == "op" and text == "*":
                self.toks.next()
                p = p * self.factor()
            else:
                return p

    def factor(self) -> Polynomial:
        p = self.atom()
        kind, text, _, _ = self.toks.peek()
        if kind == "op" and text == "^":
            self.toks.next()
            k2, t2, l2, c2 = self.toks.next()
            if k2 != "num":
                raise ParseError("exponent must be a nonnegative integer", l2, c2)
            p = p ** int(t2)
        return p

    def atom(self) -> Polynomial:
        kind, text, line, col = self.toks.next()
        if kind == "op" and text == "-":
            return -self.factor()
        if kind == "num":
            value = Fraction(int(text))
            k2, t2, _, _ = self.toks.peek()
            if k2 == "op" and t2 == "/":
                self.toks.next()
                k3, t3, l3, c3 = self.toks.next()
                if k3 != "num":
                    raise ParseError("denominator must be an integer", l3, c3)
                if int(t3) == 0:
                    raise ParseError("zero denominator", l3, c3)
                value /= int(t3)
            return Polynomial.constant(self.dim, value)
        if kind == "name":
            if text.startswith("x") and text[1:].isdigit():
                idx = int(text[1:])
                if not 1 <= idx <= self.dim:
                    raise ParseError(
                        f"variable {text} out of range for dimension {self.dim}", line, col
                    )
                return Polynomial.variable(self.dim, idx - 1)
            raise ParseError(f"unknown symbol {text!r} (variables are x1..x{self.dim})", line, col)
        if kind == "op" and text == "(":
            p = self.expr()
            k2, t2, l2, c2 = self.toks.next()
            if not (k2 == "op" and t2 == ")"):
                raise ParseError("expected ')'", l2, c2)
            return p
        raise ParseError(f"unexpected token {text!r}", line, col)


def parse_polynomial(src: str, dim: int, *, line: int = 1, col: int = 1) -> Polynomial:
    """Parse `src` into a Polynomial in x1..x<dim>.

    line/col give the position of src's first character inside a larger
    document so errors carry document-accurate coordinates.
    """
    return _PolyParser(_Tokenizer(src, line, col), dim).parse()
