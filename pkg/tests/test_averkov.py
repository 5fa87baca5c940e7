import numpy as np
import pytest
from gmpy2 import mpq

from qmcert import bounds as bd
from qmcert.averkov import (AverkovError, alg_averkov, alg_ext_averkov, c_big, c_small,
                            check_admissible, coercive_factor, coercive_factor_sos,
                            coercive_transform, is_archimedean_shaped, least_exponent, residual)
from qmcert.bounds import Box
from qmcert.poly import Polynomial, compose_univariate, norm_sq, parse
from qmcert.sos import verify_sos

XY = ["x", "y"]


def test_power_constants():
    assert c_small(mpq(2), mpq(1), 1) == 2 * 2 * mpq(4, 9)
    assert c_big(mpq(2), mpq(1), 1) == 2 * mpq(16, 9)


def test_least_exponent_matches_float_search():
    for gamma, eps, mu, big_m in [(36, 3, 11, 27), (4, mpq(1, 3), mpq(7, 4), 1), (2, 1, 1, 100)]:
        n = least_exponent(gamma, eps, mu, big_m)
        g, e, m, bm = (float(v) for v in (gamma, eps, mu, big_m))

        def ok(k):
            small = 2 * g * (g / (g + e)) ** (2 * k)
            big = 2 * e * ((g + 2 * e) / (g + e)) ** (2 * k)
            return small < m and big > bm + m
        assert ok(n) and not ok(n - 1)


def test_least_exponent_rejects_bad_input():
    with pytest.raises(ValueError):
        least_exponent(0, 1, 1, 1)
    with pytest.raises(AverkovError):
        least_exponent(1000, mpq(1, 1000), mpq(1, 10 ** 9), 10 ** 9, cap=5)


def test_composed_multiplier_expansion():
    # H(t) = ((t - gamma) / (gamma + eps))^2 t composed with q = 1 - x^2 - y^2
    q = parse("1 - x^2 - y^2", XY)
    t = parse("x", ["x"])
    h = ((t - mpq(2, 3)) / (mpq(2, 3) + mpq(1, 6))) ** 2 * t
    direct = ((q - mpq(2, 3)) * mpq(6, 5)) ** 2 * q
    assert compose_univariate(h, q) == direct


def test_residual_factored_equals_expanded():
    G = [parse("x", XY), parse("1 - x^2 - y^2", XY)]
    f = parse("x + 2", XY)
    bases = [(g - 2) / 3 for g in G]
    ps = residual(f, G, bases, 4)
    want = f - sum((b ** 4 * g for b, g in zip(bases, G)), Polynomial.zero(2))
    assert ps.expand() == want


def test_alg_averkov_positive_on_region():
    # f is negative at (-1/2, 0), where g1 = x < 0
    G = [parse("x", XY), parse("1 - x^2 - y^2", XY)]
    f = parse("x + 1/4", XY)
    box = Box.cube(mpq(5, 4), 2)
    res = alg_averkov(G, f, box)
    assert not res.skipped
    rest = f - sum((m * g for m, g in zip(res, G)), Polynomial.zero(2))
    assert bd.prove_positive(rest, box)
    # the multipliers are even powers, hence squares
    for m, b in zip(res, res.bases):
        assert m == b ** (2 * res.half_exponent)
    p = res.params
    assert p.satisfies_power_inequalities()


def test_alg_averkov_skips_when_already_positive():
    G = [parse("1 - x^2 - y^2", XY)]
    res = alg_averkov(G, parse("x^2 + 1", XY), Box.cube(1, 2))
    assert res.skipped and all(m.is_zero() for m in res)


def test_check_admissible_flags_bad_gamma():
    G = [parse("1 - x^2 - y^2", XY)]
    f = parse("x + 2", XY)
    region = bd.Region.ball(2, 2)
    good = check_admissible(G, f, region, 1, mpq(1, 10), 2, check_positivity=False)
    assert good.gamma_ok
    bad = check_admissible(G, f, region, mpq(1, 4), mpq(1, 10), 2, check_positivity=False)
    assert not bad.gamma_ok and not bad.admissible
    with pytest.raises(ValueError):
        check_admissible(G, f, region, 1, mpq(1, 10), 3)


def test_archimedean_shape_and_coercive_factor():
    assert is_archimedean_shaped(parse("3 - x^2 - y^2", XY))
    assert is_archimedean_shaped(parse("x - 2*(x^2 + y^2)^2", XY))
    assert not is_archimedean_shaped(parse("10 - x^2 - y^4", XY))
    g = parse("10 - x^2 - y^4", XY)
    # degree 4, n = 2: exponent 2 floor(9/2) + 2 = 10
    assert coercive_factor(g) == norm_sq(2) ** 5
    assert coercive_transform(g) == norm_sq(2) ** 5 * g
    q = parse("1 - x^2 - 2*y^2", XY)
    lifted = coercive_factor(q, force=True)
    assert lifted == (1 + norm_sq(2)) * norm_sq(2) ** ((4 - 1) ** 2 // 2 + 1)
    for gen, force in ((g, False), (q, True)):
        assert verify_sos(coercive_factor(gen, force), coercive_factor_sos(gen, force))


def test_ext_averkov_gives_global_positivity():
    g = parse("1 - x^2 - y^2", XY)
    f = parse("(x - 2)^2 + y^2 - 1/2", XY)       # min -1/2 at (2, 0), positive on the disc
    res = alg_ext_averkov(g, f)
    assert not res.skipped
    rest = f - res.multiplier * g
    lb = bd.global_min_lower_bound(rest)
    assert lb != bd.UNKNOWN and lb.value > 0
    assert verify_sos(res.multiplier, res.multiplier_sos(g))
    # sampled check far from the origin
    rng = np.random.default_rng(1)
    pts = rng.standard_normal((200, 2)) * 5
    assert np.all(rest.eval_float(pts) > 0)


def test_ext_averkov_needs_lower_bound():
    g = parse("1 - x^2 - y^2", XY)
    with pytest.raises(AverkovError):
        alg_ext_averkov(g, parse("x^3 + 2", XY))
