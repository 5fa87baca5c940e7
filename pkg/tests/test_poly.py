import numpy as np
import pytest
import sympy
from gmpy2 import mpq

from qmcert.poly import (ParseError, Polynomial, compose_univariate, eval_rational,
                         leading_coefficient_univariate, monomials_up_to, norm_sq, parse,
                         poly_divmod_univariate, random_polynomial, to_string)

X, Y, Z = sympy.symbols("x y z")


def to_sympy(p: Polynomial):
    syms = [X, Y, Z][: p.nvars]
    out = sympy.Integer(0)
    for m, c in p.terms.items():
        term = sympy.Rational(int(c.numerator), int(c.denominator))
        for s, e in zip(syms, m):
            term *= s ** e
        out += term
    return sympy.expand(out)


def test_parse_and_print_round_trip():
    p = parse("1 - x^2 - y^2 + 3/4*x*y", ["x", "y"])
    assert parse(to_string(p), ["x", "y"]) == p
    assert str(parse("(x+1)^3", ["x"])) == "x^3 + 3*x^2 + 3*x + 1"


@pytest.mark.parametrize("text,pos", [("x + * y", 4), ("x y", 2), ("x ^ -1", 4), ("2 $ x", 2),
                                      ("x / y", 4), ("(x + 1", 6)])
def test_parse_errors_report_position(text, pos):
    with pytest.raises(ParseError) as info:
        parse(text, ["x", "y"])
    assert info.value.position == pos


def test_unknown_variable_is_an_error():
    with pytest.raises(ParseError):
        parse("x + w", ["x", "y"])


def test_arithmetic_matches_sympy():
    rng = np.random.default_rng(5)
    for _ in range(25):
        n = int(rng.integers(1, 4))
        a = random_polynomial(rng, n, int(rng.integers(0, 4)))
        b = random_polynomial(rng, n, int(rng.integers(0, 4)))
        sa, sb = to_sympy(a), to_sympy(b)
        assert to_sympy(a + b) == sympy.expand(sa + sb)
        assert to_sympy(a - b) == sympy.expand(sa - sb)
        assert to_sympy(a * b) == sympy.expand(sa * sb)
        assert to_sympy(a ** 3) == sympy.expand(sa ** 3)


def test_evaluation_paths_agree():
    rng = np.random.default_rng(11)
    p = random_polynomial(rng, 3, 5)
    pt = (mpq(1, 3), mpq(-2, 5), mpq(7, 4))
    exact = eval_rational(p, pt)
    assert p(*pt) == exact
    sym = to_sympy(p).subs({X: sympy.Rational(1, 3), Y: sympy.Rational(-2, 5),
                            Z: sympy.Rational(7, 4)})
    assert exact == mpq(int(sym.p), int(sym.q))
    approx = p.eval_float(np.array([[float(v) for v in pt]]))[0]
    assert approx == pytest.approx(float(exact), rel=1e-12, abs=1e-12)


def test_degree_and_parts():
    p = parse("x^3*y - 2*x*y + 5", ["x", "y"])
    assert p.degree == 4
    assert p.degree_in(0) == 3
    assert p.top_form() == parse("x^3*y", ["x", "y"])
    assert p.constant_term() == 5
    assert Polynomial.zero(2).is_zero()
    assert norm_sq(3) == parse("x^2 + y^2 + z^2", ["x", "y", "z"])


def test_univariate_helpers():
    a = parse("x^5 - 3*x^2 + 1", ["x"])
    b = parse("2*x^2 + x - 1", ["x"])
    q, r = poly_divmod_univariate(a, b)
    assert q * b + r == a
    assert r.degree < b.degree
    assert leading_coefficient_univariate(b) == (2, 2)
    h = parse("x^2 + 1", ["x"])
    inner = parse("x - y", ["x", "y"])
    assert compose_univariate(h, inner) == inner * inner + 1


def test_derivative_and_restriction():
    p = parse("x^2*z + 3*z", ["x", "y", "z"])
    assert p.derivative(0) == parse("2*x*z", ["x", "y", "z"])
    sub = p.restrict_variables([0, 2])
    assert sub.nvars == 2 and sub.embed([0, 2], 3) == p
    with pytest.raises(ValueError):
        p.restrict_variables([0, 1])


def test_monomial_counts():
    from math import comb
    for n in (1, 2, 3):
        for d in range(5):
            assert len(monomials_up_to(n, d)) == comb(n + d, d)


def test_mismatched_nvars_rejected():
    with pytest.raises(ValueError):
        parse("x", ["x"]) + parse("x + y", ["x", "y"])
