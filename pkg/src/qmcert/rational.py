"""Exact rational scalars.

Every coefficient, bound and parameter in the package is a ``gmpy2.mpq``.
It is a canonical arbitrary precision fraction (reduced, positive
denominator, zero is 0/1) and it is much faster than ``fractions.Fraction``,
which matters once interval branch-and-bound starts multiplying
high-degree coefficients.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

import gmpy2
from gmpy2 import mpq, mpz

Rational = type(mpq(0))
RationalLike = Union[int, str, Fraction, "mpq"]

ZERO = mpq(0)
ONE = mpq(1)


def Q(value, den=None) -> mpq:
    """Convert ``value`` to an exact rational.

    Accepts ints, ``Fraction``, ``mpq``/``mpz``, strings like ``"-3/4"`` and
    floats (converted exactly, so ``Q(0.1)`` is the binary value, not 1/10).

    >>> Q("3/6")
    mpq(1,2)
    """
    if den is not None:
        den = Q(den)
        if den == 0:
            raise ZeroDivisionError("zero denominator")
        return Q(value) / den
    if isinstance(value, Rational):
        return value
    if isinstance(value, (int, type(mpz(0)))):
        return mpq(value)
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            num, _, d = text.partition("/")
            d_int = int(d)
            if d_int == 0:
                raise ZeroDivisionError("zero denominator")
            return mpq(int(num), d_int)
        return mpq(int(text))
    if isinstance(value, float):
        return mpq(value)
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def to_str(q: mpq) -> str:
    """Wire form ``p/q`` (or ``p`` when the denominator is 1)."""
    q = Q(q)
    if q.denominator == 1:
        return str(q.numerator)
    return f"{q.numerator}/{q.denominator}"


def to_fraction(q: mpq) -> Fraction:
    q = Q(q)
    return Fraction(int(q.numerator), int(q.denominator))


def floor(q: mpq) -> int:
    return int(gmpy2.f_div(q.numerator, q.denominator))


def ceil(q: mpq) -> int:
    return -floor(-q)


def round_down(q: mpq, bits: int = 16) -> mpq:
    """Largest rational ``m / 2^k`` not above ``q`` with an ``bits``-bit mantissa.

    Used to replace a parameter by a nearby value with small numbers while
    keeping the side of the inequality it has to stay on.
    """
    q = Q(q)
    if q == 0:
        return q
    if q < 0:
        return -round_up(-q, bits)
    k = bits - q.numerator.bit_length() + q.denominator.bit_length()
    scale = mpq(2) ** k if k >= 0 else mpq(1, 2 ** (-k))
    return mpq(floor(q * scale)) / scale


def round_up(q: mpq, bits: int = 16) -> mpq:
    """Smallest rational ``m / 2^k`` not below ``q`` with a ``bits``-bit mantissa."""
    q = Q(q)
    if q == 0:
        return q
    if q < 0:
        return -round_down(-q, bits)
    k = bits - q.numerator.bit_length() + q.denominator.bit_length()
    scale = mpq(2) ** k if k >= 0 else mpq(1, 2 ** (-k))
    return mpq(ceil(q * scale)) / scale


def simplest_between(lo: mpq, hi: mpq) -> mpq:
    """Rational with the smallest denominator in the closed interval ``[lo, hi]``.

    Stern-Brocot style descent via continued fractions; handy for turning a
    certified range of admissible parameters into a readable number.
    """
    lo, hi = Q(lo), Q(hi)
    if lo > hi:
        raise ValueError("empty interval")
    if lo <= 0 <= hi:
        return mpq(0)
    if hi < 0:
        return -simplest_between(-hi, -lo)
    fl = floor(lo)
    if mpq(fl) == lo:
        return lo
    if fl + 1 <= hi:
        return mpq(fl + 1)
    # lo and hi share the integer part fl; recurse on reciprocals of the
    # fractional parts (note the swap of ends).
    rest = simplest_between(1 / (hi - fl), 1 / (lo - fl))
    return fl + 1 / rest


def exp_upper(m: int) -> mpq:
    """A rational upper bound on ``e**m`` for an integer ``m >= 0``.

    Taylor polynomial plus a geometric tail bound: for ``K >= 2m`` every
    omitted term is at most half the previous one, so the tail is at most the
    first omitted term.
    """
    if m < 0:
        raise ValueError("m must be non-negative")
    x = mpq(m)
    k_top = 2 * m + 8
    term = mpq(1)
    total = mpq(0)
    for k in range(k_top + 1):
        total += term
        term = term * x / (k + 1)
    # term is now x^(K+1)/(K+1)!, and later ratios are <= x/(K+2) <= 1/2.
    return total + 2 * term
