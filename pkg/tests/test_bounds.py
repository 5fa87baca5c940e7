import itertools

import numpy as np
import pytest
from gmpy2 import mpq

from qmcert import bounds as bd
from qmcert.bounds import (EMPTY, UNKNOWN, Box, BoundConfig, ProductSum, Region, constrained_sup,
                           enclosure_radius, global_min_lower_bound, has_global_lower_bound,
                           interval_eval, max_upper_bound, min_lower_bound, prove_positive)
from qmcert.poly import norm_sq, parse, random_polynomial


def grid(box: Box, k: int):
    axes = [np.linspace(float(s.lo), float(s.hi), k) for s in box]
    return np.array(list(itertools.product(*axes)))


def test_interval_eval_contains_samples():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(1, 4))
        p = random_polynomial(rng, n, int(rng.integers(1, 6)))
        box = Box([(mpq(int(rng.integers(-4, 0)), 2), mpq(int(rng.integers(1, 5)), 3))] * n)
        iv = interval_eval(p, box)
        vals = p.eval_float(grid(box, 6))
        assert vals.min() >= float(iv.lo) - 1e-9
        assert vals.max() <= float(iv.hi) + 1e-9


def test_box_bounds_bracket_known_extremes():
    x = parse("x", ["x"])
    p = x ** 4 - x ** 2          # min -1/4 at x^2 = 1/2, max 12 at x = 2
    b = Box.cube(2, 1)
    lo = min_lower_bound(p, b)
    hi = max_upper_bound(p, b)
    assert lo.value <= mpq(-1, 4) <= lo.value + mpq(1, 100)
    assert hi.value >= 12 and hi.value <= 12 + mpq(1, 100)
    assert lo.attained >= lo.value


def test_constrained_sup_on_disc_and_empty_slice():
    names = ["x", "y"]
    p = parse("x + y", names)
    disc = [norm_sq(2) - 1]                       # x^2 + y^2 - 1 <= 0
    r = constrained_sup(p, disc, Box.cube(2, 2))
    assert r.value >= 2 ** 0.5 - 1e-12
    assert float(r.value) <= 2 ** 0.5 + 0.01
    assert constrained_sup(p, [norm_sq(2) + 1], Box.cube(2, 2)) == EMPTY


def test_enclosure_radius_of_ball_and_unbounded():
    g = parse("4 - x^2 - y^2", ["x", "y"])
    r = enclosure_radius(g)
    assert r != "unknown" and r >= 2
    assert enclosure_radius(parse("1 - x^2", ["x", "y"])) == "unknown"
    assert enclosure_radius(parse("x*y", ["x", "y"])) == "unknown"


def test_global_min_lower_bound():
    names = ["x", "y"]
    f = parse("(x - 1)^4 + (y + 2)^2 + 1/2", names)     # min 1/2 at (1, -2)
    b = global_min_lower_bound(f)
    assert b != UNKNOWN
    assert b.value <= mpq(1, 2) <= b.value + mpq(1, 100)
    assert global_min_lower_bound(parse("x^3 + y^2", names)) == UNKNOWN


def test_has_global_lower_bound():
    names = ["x", "y"]
    assert has_global_lower_bound(parse("x^4 + y^4 - 100*x*y", names))
    assert not has_global_lower_bound(parse("x^3 + y^4", names))
    assert has_global_lower_bound(parse("7", names))


def test_product_sum_matches_expansion():
    names = ["x", "y"]
    g = parse("1 - x^2 - y^2", names)
    base = (g - mpq(2, 3)) / mpq(5, 6)
    ps = ProductSum([(1, [(parse("x + 3", names), 2)]), (-1, [(base, 6), (g, 1)])], 2)
    full = ps.expand()
    pt = (mpq(1, 3), mpq(-3, 4))
    assert ps.value(pt) == full(*pt)
    box = Box.cube(1, 2)
    lo, hi = ps.interval(box)
    vals = full.eval_float(grid(box, 15))
    assert float(lo) <= vals.min() + 1e-9 and vals.max() <= float(hi) + 1e-9


def test_prove_positive_regions():
    names = ["x", "y"]
    f = parse("2 - x^2 - y^2", names)
    assert prove_positive(f, ("ball", 1))
    assert not prove_positive(f, ("ball", 2))
    assert prove_positive(parse("x^2 + y^2 + 1/10", names), "all-space")
    g = parse("1 - x^2 - y^2", names)
    region = Region.semialgebraic(g, Box.cube(1, 2))
    assert prove_positive(parse("x + 2", names), region)


def test_tightened_config():
    cfg = BoundConfig(mpq(1, 100), 10, 5)
    t = cfg.tightened()
    assert t.tolerance == mpq(1, 400) and t.max_subdivisions == 20
    with pytest.raises(ValueError):
        BoundConfig(0)


def test_tail_box_really_bounds_the_set():
    g = parse("3 - x^2 - 2*y^4 + x*y", ["x", "y"])
    tail = bd.enclosure_tail(g)
    assert tail is not None
    box = tail.box
    # points just outside the box violate g >= 0
    rng = np.random.default_rng(0)
    for _ in range(200):
        d = rng.standard_normal(2)
        d /= np.abs(d).max()
        pt = d * (float(max(s.hi for s in box)) * (1 + rng.random()))
        if any(abs(v) > float(s.hi) for v, s in zip(pt, box)):
            assert g(*[mpq(float(v)) for v in pt]) < 0
