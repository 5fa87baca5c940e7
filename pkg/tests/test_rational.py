import math
from fractions import Fraction

import pytest
from gmpy2 import mpq

from qmcert.rational import Q, ceil, exp_upper, floor, round_down, round_up, simplest_between, to_str


def test_q_conversions():
    assert Q("3/6") == mpq(1, 2)
    assert Q(" -7 ") == -7
    assert Q(Fraction(2, 3)) == mpq(2, 3)
    assert Q(0.5) == mpq(1, 2)
    assert Q(1, 3) == mpq(1, 3)
    with pytest.raises(ZeroDivisionError):
        Q("1/0")
    with pytest.raises(TypeError):
        Q([1])


def test_to_str_round_trip():
    for v in (mpq(0), mpq(5), mpq(-22, 7), mpq(1, 1 << 70)):
        assert Q(to_str(v)) == v
    assert to_str(mpq(4, 2)) == "2"


def test_floor_ceil_negative():
    assert floor(mpq(-1, 2)) == -1
    assert ceil(mpq(-1, 2)) == 0
    assert floor(mpq(7, 1)) == ceil(mpq(7, 1)) == 7


@pytest.mark.parametrize("value", ["22/7", "-22/7", "1/3", "123456789/1000", "-5/1048576"])
def test_rounding_keeps_side(value):
    q = Q(value)
    lo, hi = round_down(q, 8), round_up(q, 8)
    assert lo <= q <= hi
    # short mantissas: both ends are m * 2^k with |m| < 2^9
    for v in (lo, hi):
        m = abs(int(v.numerator))
        while m and m % 2 == 0:
            m //= 2
        assert m < 1 << 9
        assert v.denominator & (v.denominator - 1) == 0


def test_simplest_between():
    assert simplest_between(mpq(3, 10), mpq(4, 10)) == mpq(1, 3)
    assert simplest_between(mpq(-2, 3), mpq(1, 5)) == 0
    assert simplest_between(mpq(7, 2), mpq(9, 2)) == 4
    assert simplest_between(mpq(-4, 10), mpq(-3, 10)) == mpq(-1, 3)
    with pytest.raises(ValueError):
        simplest_between(1, 0)


@pytest.mark.parametrize("m", [0, 1, 2, 5, 17, 40])
def test_exp_upper_is_an_upper_bound(m):
    bound = exp_upper(m)
    assert float(bound) >= math.exp(m)
    assert float(bound) <= math.exp(m) * (1 + 1e-6)
