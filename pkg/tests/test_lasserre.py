import math

import pytest
from gmpy2 import mpq

from qmcert.lasserre import (LasserreError, admissible_epsilon, alg_lasserre, lasserre_parameters,
                             lower_bound_for, perturbation_series)
from qmcert.bounds import BoundConfig
from qmcert.poly import Polynomial, parse
from qmcert.sos import verify_sos

XY = ["x", "y"]


def test_perturbation_series_terms():
    p = perturbation_series(3, 2)
    assert p.constant_term() == 2
    assert p.coefficient((6, 0)) == mpq(1, 6)
    assert p.coefficient((0, 4)) == mpq(1, 2)
    assert p.coefficient((1, 1)) == 0
    assert perturbation_series(0, 3) == Polynomial.constant(3, 3)
    with pytest.raises(ValueError):
        perturbation_series(-1, 2)


def test_parameters_are_admissible():
    g = parse("1 - x^2 - y^2", XY)
    f = parse("x^4 + y^4 - x*y + 1", XY)
    prm = lasserre_parameters(f, g)
    assert not prm["forced"]
    assert prm["epsilon"] > 0 and prm["f_star"] > 0
    assert admissible_epsilon(prm["epsilon"], prm["f_star"], prm["big_m"], 2, prm["exp_bound"])
    assert prm["exp_bound"] >= math.exp(math.ceil(prm["radius_sq"]))


def test_sos_input_needs_no_multiplier():
    g = parse("1 - x^2 - y^2", XY)
    f = parse("(x - y)^2 + 1", XY)
    res = alg_lasserre(f, g)
    assert res.multiplier.is_zero() and res.r == 0
    assert verify_sos(f, res.sos_witness)


def test_result_identity_and_multiplier_squares():
    # x^2 y^2 (x^2 + y^2 - 3) + 2 is positive but not a sum of squares
    g = parse("4 - x^2 - y^2", XY)
    f = parse("x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 2", XY)
    res = alg_lasserre(f, g, r_max=6)
    assert verify_sos(f - res.multiplier * g, res.sos_witness)
    assert verify_sos(res.multiplier, res.multiplier_sos(g))
    assert res.multiplier == perturbation_series(res.r, 2).scale(res.epsilon) * res.c_factor


def test_unbounded_generator_is_rejected():
    with pytest.raises(LasserreError):
        lasserre_parameters(parse("x^4*y^2 + 1", XY), parse("1 - x^2", XY))


def test_nonpositive_target_is_rejected():
    with pytest.raises(LasserreError):
        lower_bound_for(parse("x^2 + y^2 - 1", XY), BoundConfig())

