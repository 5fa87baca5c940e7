import numpy as np
import pytest
from gmpy2 import mpq

from qmcert.poly import Polynomial, norm_sq, parse, random_polynomial
from qmcert.sos import (NOT_SOS, SosDecomposition, gram_basis, norm_power_sos, not_sos_reason,
                        psd_check_exact, sos_decompose, verify_sos)

MOTZKIN = "x^4*y^2 + x^2*y^4 - 3*x^2*y^2 + 1"


def quad(m, v):
    return sum(v[i] * m[i][j] * v[j] for i in range(len(v)) for j in range(len(v)))


def test_psd_check_exact_factors_psd_matrices():
    a = [[4, 2, 0], [2, 5, 1], [0, 1, 3]]
    res = psd_check_exact(a)
    assert res.psd and all(p > 0 for p in res.pivots)
    # rebuild the permuted matrix from L diag(d) L^T
    n = 3
    for i in range(n):
        for j in range(n):
            s = sum(res.lower[i][k] * res.pivots[k] * res.lower[j][k] for k in range(n))
            assert s == a[res.perm[i]][res.perm[j]]


def test_psd_check_exact_singular_and_indefinite():
    v = [mpq(1), mpq(-2), mpq(3)]
    rank_one = [[a * b for b in v] for a in v]
    assert psd_check_exact(rank_one).psd
    bad = [[1, 2], [2, 1]]
    res = psd_check_exact(bad)
    assert not res.psd
    assert quad(bad, res.witness) < 0
    zero_diag = [[0, 1], [1, 2]]
    res = psd_check_exact(zero_diag)
    assert not res.psd and quad(zero_diag, res.witness) < 0


def test_psd_check_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        psd_check_exact([[1, 2], [3, 1]])


def test_verify_sos_is_exact():
    x = parse("x", ["x"])
    d = SosDecomposition(((mpq(1), x - 1), (mpq(2), x)), None, 1)
    assert verify_sos(parse("3*x^2 - 2*x + 1", ["x"]), d)
    assert not verify_sos(parse("3*x^2 - 2*x + 1 + 1/1000000", ["x"]), d)
    neg = SosDecomposition(((mpq(-1), x),), None, 1)
    assert not verify_sos(parse("-x^2", ["x"]), neg)


@pytest.mark.parametrize("text", ["x^4 + 1", "x^8 - 2*x^5 + 3*x^2 + 1/7",
                                  "(x^2 - 2)^2 + 1/1000", "x^2 - 2*x + 1"])
def test_univariate(text):
    f = parse(text, ["x"])
    d = sos_decompose(f)
    assert isinstance(d, SosDecomposition) and verify_sos(f, d)


@pytest.mark.parametrize("text", ["x^2*y^2 + x^2 + y^2 + 1", "(x*y - 1)^2 + (x - y)^2",
                                  "2*x^4 + 2*x^3*y - x^2*y^2 + 5*y^4",
                                  "(x^2 + y^2 + z^2)^2 + (x*y*z - 1)^2"])
def test_multivariate(text):
    names = ["x", "y", "z"] if "z" in text else ["x", "y"]
    f = parse(text, names)
    d = sos_decompose(f)
    assert isinstance(d, SosDecomposition) and verify_sos(f, d)


def test_low_rank_sum_of_squares():
    # three squares in three variables share isolated real zeros, so the
    # Gram spectrahedron has empty interior
    names = ["x", "y", "z"]
    ps = [parse("-33/4*x^2 - 2*y^2 + 27/4*z^2 - x + 4*y - 7*z + 1/2", names),
          parse("-10*z^2 - 5/2*x", names), parse("-17/3*x^2 - 31/4*x*z + 10*z + 2", names)]
    f = sum((p * p for p in ps), Polynomial.zero(3))
    d = sos_decompose(f)
    assert isinstance(d, SosDecomposition) and verify_sos(f, d)


def test_negative_witnesses():
    names = ["x", "y"]
    assert sos_decompose(parse("x^3 + 1", names)) == NOT_SOS
    assert not_sos_reason(parse("x^3 + 1", names)) == "odd degree"
    f = parse("x^2 + y^2 - 1", names)
    assert sos_decompose(f) == NOT_SOS
    kind, pt = not_sos_reason(f)
    assert kind == "negative value" and f(*pt) < 0
    assert sos_decompose(Polynomial.constant(-1, 2)) == NOT_SOS


def test_motzkin_never_decomposes():
    d = sos_decompose(parse(MOTZKIN, ["x", "y"]))
    assert not isinstance(d, SosDecomposition)


def test_norm_power_sos():
    for n in (1, 2, 3):
        for k in range(5):
            d = norm_power_sos(n, k)
            assert verify_sos(norm_sq(n) ** k, d)


def test_decomposition_products_and_sums():
    x, y = Polynomial.variables(2)
    a = SosDecomposition.square(x - y, 2)
    b = SosDecomposition.square(x + 1)
    assert verify_sos(2 * (x - y) ** 2 * (x + 1) ** 2, a * b)
    assert verify_sos(2 * (x - y) ** 2 + (x + 1) ** 2, a + b)
    assert verify_sos(6 * (x - y) ** 2, a.scale(3))


def test_gram_basis_newton_filter():
    f = parse("x^4*y^2 + x^2*y^4 + 1", ["x", "y"])
    basis = gram_basis(f)
    # half the Newton polytope: only 1, xy, x^2 y, x y^2 survive
    assert set(basis) <= {(0, 0), (1, 1), (2, 1), (1, 2), (1, 0), (0, 1)}
    assert (2, 0) not in basis and (0, 2) not in basis


def test_random_sums_round_trip():
    rng = np.random.default_rng(2024)
    for _ in range(8):
        n = int(rng.integers(1, 3))
        f = Polynomial.zero(n)
        for _ in range(int(rng.integers(1, 4))):
            p = random_polynomial(rng, n, int(rng.integers(1, 3)), density=0.6)
            f = f + p * p
        d = sos_decompose(f)
        assert isinstance(d, SosDecomposition) and verify_sos(f, d)
