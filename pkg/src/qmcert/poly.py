"""Sparse multivariate polynomials with exact rational coefficients.

A :class:`Polynomial` is an immutable map from exponent tuples to nonzero
``mpq`` coefficients over a fixed number of variables.  Variable *names*
live outside the polynomial; they are only needed for parsing and printing.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Mapping, Sequence

import numpy as np
from gmpy2 import mpq

from .rational import Q, Rational

Monomial = tuple  # tuple[int, ...], one exponent per variable

NEG_INF = float("-inf")


class Polynomial:
    """Immutable sparse polynomial in ``nvars`` variables over the rationals.

    >>> x, y = Polynomial.variables(2)
    >>> ((1 - x) * (1 - y)).terms == {(0, 0): 1, (1, 0): -1, (0, 1): -1, (1, 1): 1}
    True
    """

    __slots__ = ("nvars", "terms", "_hash")

    def __init__(self, terms: Mapping[Sequence[int], object] | None = None, nvars: int = 1):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        clean: dict[tuple, mpq] = {}
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != nvars:
                raise ValueError(f"monomial {mono} does not have {nvars} exponents")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            c = Q(c)
            if c != 0:
                clean[mono] = clean.get(mono, mpq(0)) + c
                if clean[mono] == 0:
                    del clean[mono]
        self.nvars = nvars
        self.terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict, nvars: int) -> "Polynomial":
        # trusted constructor: terms already canonical (tuple keys, nonzero mpq)
        p = cls.__new__(cls)
        p.nvars = nvars
        p.terms = terms
        p._hash = None
        return p

    # ------------------------------------------------------------------ builders
    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls._raw({}, nvars)

    @classmethod
    def constant(cls, c, nvars: int) -> "Polynomial":
        c = Q(c)
        return cls._raw({(0,) * nvars: c} if c != 0 else {}, nvars)

    @classmethod
    def one(cls, nvars: int) -> "Polynomial":
        return cls.constant(1, nvars)

    @classmethod
    def variable(cls, i: int, nvars: int) -> "Polynomial":
        mono = [0] * nvars
        mono[i] = 1
        return cls._raw({tuple(mono): mpq(1)}, nvars)

    @classmethod
    def variables(cls, nvars: int) -> list["Polynomial"]:
        return [cls.variable(i, nvars) for i in range(nvars)]

    @classmethod
    def monomial(cls, exps: Sequence[int], coeff=1) -> "Polynomial":
        return cls({tuple(exps): coeff}, len(exps))

    @classmethod
    def from_univariate(cls, coeffs: Sequence, nvars: int = 1, var: int = 0) -> "Polynomial":
        """Build ``sum coeffs[k] * x_var**k``."""
        terms = {}
        for k, c in enumerate(coeffs):
            c = Q(c)
            if c != 0:
                mono = [0] * nvars
                mono[var] = k
                terms[tuple(mono)] = c
        return cls._raw(terms, nvars)

    # ---------------------------------------------------------------- structure
    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and (0,) * self.nvars in self.terms)

    def constant_term(self) -> mpq:
        return self.terms.get((0,) * self.nvars, mpq(0))

    @property
    def degree(self):
        """Total degree; ``-inf`` for the zero polynomial."""
        if not self.terms:
            return NEG_INF
        return max(sum(m) for m in self.terms)

    def degree_in(self, i: int):
        if not self.terms:
            return NEG_INF
        return max(m[i] for m in self.terms)

    def used_variables(self) -> list[int]:
        return [i for i in range(self.nvars) if any(m[i] for m in self.terms)]

    def homogeneous_part(self, d: int) -> "Polynomial":
        return Polynomial._raw({m: c for m, c in self.terms.items() if sum(m) == d}, self.nvars)

    def top_form(self) -> "Polynomial":
        if not self.terms:
            return self
        return self.homogeneous_part(self.degree)

    def coefficient(self, mono: Sequence[int]) -> mpq:
        return self.terms.get(tuple(mono), mpq(0))

    def max_abs_coefficient(self) -> mpq:
        return max((abs(c) for c in self.terms.values()), default=mpq(0))

    # --------------------------------------------------------------- arithmetic
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError(f"mismatched variable counts: {self.nvars} vs {other.nvars}")
            return other
        return Polynomial.constant(other, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        if len(other.terms) > len(self.terms):
            big, small = other.terms, self.terms
        else:
            big, small = self.terms, other.terms
        out = dict(big)
        for m, c in small.items():
            v = out.get(m)
            if v is None:
                out[m] = c
            else:
                v = v + c
                if v == 0:
                    del out[m]
                else:
                    out[m] = v
        return Polynomial._raw(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial._raw({m: -c for m, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            return self.scale(other)
        other = self._coerce(other)
        if not self.terms or not other.terms:
            return Polynomial.zero(self.nvars)
        out: dict = {}
        a_items = list(self.terms.items())
        b_items = list(other.terms.items())
        if len(a_items) < len(b_items):
            a_items, b_items = b_items, a_items
        n = self.nvars
        if n == 1:
            for (ea,), ca in a_items:
                for (eb,), cb in b_items:
                    k = (ea + eb,)
                    v = out.get(k)
                    out[k] = ca * cb if v is None else v + ca * cb
        else:
            for ma, ca in a_items:
                for mb, cb in b_items:
                    k = tuple(x + y for x, y in zip(ma, mb))
                    v = out.get(k)
                    out[k] = ca * cb if v is None else v + ca * cb
        return Polynomial._raw({m: c for m, c in out.items() if c != 0}, n)

    __rmul__ = __mul__

    def scale(self, c) -> "Polynomial":
        c = Q(c)
        if c == 0:
            return Polynomial.zero(self.nvars)
        return Polynomial._raw({m: v * c for m, v in self.terms.items()}, self.nvars)

    def __truediv__(self, c):
        c = Q(c)
        if c == 0:
            raise ZeroDivisionError("division of a polynomial by zero")
        return self.scale(1 / c)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("exponent must be a non-negative integer")
        result = Polynomial.one(self.nvars)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    # --------------------------------------------------------------- comparison
    def __eq__(self, other):
        if isinstance(other, Polynomial):
            return self.nvars == other.nvars and self.terms == other.terms
        try:
            return self == Polynomial.constant(other, self.nvars)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.nvars, frozenset(self.terms.items())))
        return self._hash

    def __repr__(self):
        return f"Polynomial({to_string(self)!r}, nvars={self.nvars})"

    def __str__(self):
        return to_string(self)

    # --------------------------------------------------------------- evaluation
    def __call__(self, *point):
        if len(point) == 1 and isinstance(point[0], (list, tuple)):
            point = point[0]
        return eval_rational(self, point)

    def eval_float(self, points: np.ndarray) -> np.ndarray:
        """Vectorised float evaluation at the rows of ``points`` (shape ``(m, n)``)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(pts.shape[0])
        for mono, c in self.terms.items():
            term = np.full(pts.shape[0], float(c))
            for i, e in enumerate(mono):
                if e:
                    term = term * pts[:, i] ** e
            out += term
        return out

    # --------------------------------------------------------------- calculus
    def derivative(self, i: int) -> "Polynomial":
        out = {}
        for m, c in self.terms.items():
            if m[i]:
                k = list(m)
                k[i] -= 1
                out[tuple(k)] = c * m[i]
        return Polynomial._raw(out, self.nvars)

    # ------------------------------------------------------------- substitution
    def substitute_scaling(self, factors: Sequence) -> "Polynomial":
        """``p(a_1 x_1, ..., a_n x_n)`` for rational ``a_i``."""
        factors = [Q(a) for a in factors]
        out = {}
        for m, c in self.terms.items():
            v = c
            for a, e in zip(factors, m):
                if e:
                    v *= a ** e
            if v != 0:
                out[m] = v
        return Polynomial._raw(out, self.nvars)

    def restrict_variables(self, keep: Sequence[int]) -> "Polynomial":
        """Re-index onto the variables ``keep`` (others must not occur)."""
        keep = list(keep)
        out = {}
        for m, c in self.terms.items():
            if any(m[i] for i in range(self.nvars) if i not in keep):
                raise ValueError("dropping a variable that occurs")
            out[tuple(m[i] for i in keep)] = c
        return Polynomial._raw(out, len(keep))

    def embed(self, positions: Sequence[int], nvars: int) -> "Polynomial":
        """Inverse of :meth:`restrict_variables`: variable ``k`` goes to ``positions[k]``."""
        out = {}
        for m, c in self.terms.items():
            full = [0] * nvars
            for k, e in zip(positions, m):
                full[k] = e
            out[tuple(full)] = c
        return Polynomial._raw(out, nvars)

    def translate_univariate(self, a) -> "Polynomial":
        """``p(x + a)`` for univariate ``p``."""
        return compose_univariate(self, Polynomial.from_univariate([a, 1]))

    # -------------------------------------------------------------- univariate
    def univariate_coeffs(self) -> list:
        """Dense coefficient list (ascending) of a univariate polynomial."""
        if self.nvars != 1:
            raise ValueError("polynomial is not univariate")
        if not self.terms:
            return []
        d = self.degree
        out = [mpq(0)] * (d + 1)
        for (e,), c in self.terms.items():
            out[e] = c
        return out


# ------------------------------------------------------------------ functions
def eval_rational(p: Polynomial, point: Sequence) -> mpq:
    """Exact value of ``p`` at a rational point."""
    if len(point) != p.nvars:
        raise ValueError(f"point has {len(point)} coordinates, polynomial has {p.nvars} variables")
    pt = [Q(v) for v in point]
    if p.nvars == 1:
        coeffs = p.univariate_coeffs()
        acc = mpq(0)
        x = pt[0]
        for c in reversed(coeffs):
            acc = acc * x + c
        return acc
    powers: list[dict] = [dict() for _ in pt]
    total = mpq(0)
    for m, c in p.terms.items():
        v = c
        for i, e in enumerate(m):
            if e:
                cache = powers[i]
                pw = cache.get(e)
                if pw is None:
                    pw = pt[i] ** e
                    cache[e] = pw
                v = v * pw
        total += v
    return total


def norm_sq(nvars: int) -> Polynomial:
    """``x_1^2 + ... + x_n^2``."""
    if nvars < 1:
        raise ValueError("need at least one variable")
    terms = {}
    for i in range(nvars):
        m = [0] * nvars
        m[i] = 2
        terms[tuple(m)] = mpq(1)
    return Polynomial._raw(terms, nvars)


def compose_univariate(h: Polynomial, q: Polynomial) -> Polynomial:
    """``H(q)`` for a univariate ``H`` (Horner scheme)."""
    if h.nvars != 1:
        raise ValueError("outer polynomial must be univariate")
    coeffs = h.univariate_coeffs()
    acc = Polynomial.zero(q.nvars)
    for c in reversed(coeffs):
        acc = acc * q + c
    return acc


def leading_coefficient_univariate(p: Polynomial) -> tuple[int, mpq]:
    """``(degree, leading coefficient)`` of a nonzero univariate polynomial."""
    if p.nvars != 1:
        raise ValueError("polynomial is not univariate")
    if p.is_zero():
        raise ValueError("zero polynomial has no leading coefficient")
    d = p.degree
    return d, p.terms[(d,)]


def poly_divmod_univariate(a: Polynomial, b: Polynomial) -> tuple[Polynomial, Polynomial]:
    """Euclidean division of univariate polynomials over the rationals."""
    if b.is_zero():
        raise ZeroDivisionError("division by the zero polynomial")
    num = a.univariate_coeffs()
    den = b.univariate_coeffs()
    db = len(den) - 1
    lead = den[-1]
    if len(num) - 1 < db:
        return Polynomial.zero(1), a
    quot = [mpq(0)] * (len(num) - db)
    num = list(num)
    for k in range(len(num) - 1, db - 1, -1):
        c = num[k] / lead
        quot[k - db] = c
        if c:
            for j in range(db + 1):
                num[k - db + j] -= c * den[j]
    return Polynomial.from_univariate(quot), Polynomial.from_univariate(num[:db])


def monomials_up_to(nvars: int, degree: int) -> list[tuple]:
    """All exponent tuples of total degree ``<= degree`` (graded, then lex)."""
    out = []

    def rec(prefix, left, k):
        if k == nvars - 1:
            out.append(tuple(prefix + [left]))
            return
        for e in range(left, -1, -1):
            rec(prefix + [e], left - e, k + 1)

    for d in range(degree + 1):
        if nvars == 0:
            if d == 0:
                out.append(())
            continue
        rec([], d, 0)
    return out


def grlex_key(mono: Sequence[int]):
    """Sort key: higher total degree first, then lexicographically larger first."""
    return (-sum(mono), tuple(-e for e in mono))


# -------------------------------------------------------------------- printing
def default_names(nvars: int) -> list[str]:
    if nvars <= 3:
        return ["x", "y", "z"][:nvars]
    return [f"x{i + 1}" for i in range(nvars)]


def _monomial_str(mono, names) -> str:
    parts = []
    for name, e in zip(names, mono):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts)


def to_string(p: Polynomial, names: Sequence[str] | None = None) -> str:
    """Render in graded-lex order, e.g. ``-x^2 - y^2 + 1``.

    The output is valid input for :func:`parse` with the same names.
    """
    if names is None:
        names = default_names(p.nvars)
    if len(names) != p.nvars:
        raise ValueError("wrong number of variable names")
    if not p.terms:
        return "0"
    pieces = []
    for mono in sorted(p.terms, key=grlex_key):
        c = p.terms[mono]
        mstr = _monomial_str(mono, names)
        sign = "-" if c < 0 else "+"
        a = abs(c)
        if not mstr:
            body = _rat_str(a)
        elif a == 1:
            body = mstr
        else:
            body = f"{_rat_str(a)}*{mstr}"
        pieces.append((sign, body))
    first_sign, first_body = pieces[0]
    text = ("-" if first_sign == "-" else "") + first_body
    for sign, body in pieces[1:]:
        text += f" {sign} {body}"
    return text


def _rat_str(a: mpq) -> str:
    if a.denominator == 1:
        return str(a.numerator)
    return f"{a.numerator}/{a.denominator}"


# --------------------------------------------------------------------- parsing
class ParseError(ValueError):
    """Malformed polynomial text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(.))")


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            break
        if m.group(1) is not None:
            tokens.append(("num", m.group(1), m.start(1)))
        elif m.group(2) is not None:
            tokens.append(("name", m.group(2), m.start(2)))
        elif m.group(3) is not None:
            ch = m.group(3)
            if ch not in "+-*/^()":
                raise ParseError(f"unexpected character {ch!r}", m.start(3), text)
            tokens.append(("op", ch, m.start(3)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    # expr   := ['+'|'-'] term (('+'|'-') term)*
    # term   := factor (('*'|'/') factor)*
    # factor := unary_minus factor | atom ('^' INT)?
    # atom   := INT | NAME | '(' expr ')'
    def __init__(self, text, names):
        self.text = text
        self.names = {name: i for i, name in enumerate(names)}
        self.n = len(names)
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, tok[2], self.text)

    def parse(self):
        if self.peek()[0] == "end":
            self.error("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self):
        neg = False
        if self.peek()[:2] in (("op", "+"), ("op", "-")):
            neg = self.take()[1] == "-"
        acc = self.term()
        if neg:
            acc = -acc
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            acc = acc + rhs if op == "+" else acc - rhs
        return acc

    def term(self):
        acc = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op_tok = self.take()
            rhs_tok = self.peek()
            rhs = self.factor()
            if op_tok[1] == "*":
                acc = acc * rhs
            else:
                if not rhs.is_constant():
                    self.error("division by a non-constant expression", rhs_tok)
                c = rhs.constant_term()
                if c == 0:
                    self.error("zero denominator", rhs_tok)
                acc = acc.scale(1 / c)
        return acc

    def factor(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return -self.factor()
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            tok = self.peek()
            if tok[0] != "num":
                self.error("exponent must be a non-negative integer literal")
            self.take()
            base = base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Polynomial.constant(int(val), self.n)
        if kind == "name":
            if val not in self.names:
                self.error(f"unknown variable {val!r}", tok)
            return Polynomial.variable(self.names[val], self.n)
        if (kind, val) == ("op", "("):
            inner = self.expr()
            if self.peek()[:2] != ("op", ")"):
                self.error("expected ')'")
            self.take()
            return inner
        self.error(f"unexpected token {val!r}" if val else "unexpected end of input", tok)


def parse(text: str, variables: Sequence[str]) -> Polynomial:
    """Parse ASCII polynomial text over the given ordered variable names.

    Grammar: integers, ``p/q`` rationals (division only by constants),
    identifiers, ``+ - * ^`` and parentheses.  Juxtaposition is an error.

    >>> str(parse("1 - x^2 - y^2", ["x", "y"]))
    '-x^2 - y^2 + 1'
    """
    names = list(variables)
    if len(set(names)) != len(names):
        raise ValueError("duplicate variable names")
    return _Parser(text, names).parse()


def random_polynomial(rng: np.random.Generator, nvars: int, degree: int, *,
                      density: float = 0.6, coeff_range: int = 10,
                      denominators: Iterable[int] = (1, 2, 3, 4)) -> Polynomial:
    """Random polynomial with coefficients in ``[-coeff_range, coeff_range]``.

    Each monomial of degree ``<= degree`` is kept with probability ``density``;
    coefficients are ``k / d`` with ``d`` drawn from ``denominators``.
    """
    dens = list(denominators)
    terms = {}
    for mono in monomials_up_to(nvars, degree):
        if rng.random() < density:
            d = int(rng.choice(dens))
            k = int(rng.integers(-coeff_range * d, coeff_range * d + 1))
            terms[mono] = mpq(k, d)
    return Polynomial(terms, nvars)


def binomial(n: int, k: int) -> int:
    return math.comb(n, k)
