import json

import pytest
from gmpy2 import mpq

from qmcert.bounds import enclosure_radius
from qmcert.poly import Polynomial, norm_sq, parse
from qmcert.putinar import (Certificate, CertifyOptions, CombineError, PipelineError,
                            QuadraticModule, archimedean_certificate, certificate_from_json,
                            certificate_text, certificate_to_json, heuristic_ball,
                            putinar_certify, univariate_combine, verify_certificate)
from qmcert.rational import ceil
from qmcert.sos import SosDecomposition, verify_sos


def full_module(Q_, cert):
    return Q_ if cert.archimedean_n is None else Q_.with_ball(cert.archimedean_n)


def check(Q_, f, cert):
    """Independent re-check: each sigma is SOS and the identity holds."""
    M = full_module(Q_, cert)
    gens = [Polynomial.one(Q_.nvars)] + M.all_generators()
    total = Polynomial.zero(Q_.nvars)
    for sig, g in zip(cert.sigma, gens + [None]):
        if sig.is_zero():
            continue
        assert all(w >= 0 for w, _ in sig.squares)
        total = total + sig.expand(Q_.nvars) * g
    assert total == f


def test_module_validation():
    with pytest.raises(ValueError):
        QuadraticModule((parse("x", ["x"]), parse("x + y", ["x", "y"])), 1)
    M = QuadraticModule.from_strings(["1 - x^2"], ["x"], 4)
    assert M.s == 1 and M.adjoined() == 4 - norm_sq(1)
    assert len(M.all_generators()) == 2


def test_constant_target():
    Q_ = QuadraticModule.from_strings(["1 - x^2"], ["x"])
    f = Polynomial.one(1)
    cert = putinar_certify(Q_, f)
    check(Q_, f, cert)
    assert cert.sigma[-1].is_zero()


def test_univariate_certificate_and_trace_replay():
    Q_ = QuadraticModule.from_strings(["1 - x^2"], ["x"])
    f = parse("x + 11/10", ["x"])
    cert = putinar_certify(Q_, f)
    ok, why = verify_certificate(Q_, f, cert)
    assert ok, why
    check(Q_, f, cert)
    assert cert.archimedean_n is None and cert.sigma[-1].is_zero()
    replayed = cert.replay(1)
    for sig, rep in zip(cert.sigma, replayed):
        assert sig.expand(1) == rep
    assert {r.stage for r in cert.trace} <= {"averkov", "delta", "ext-averkov", "lasserre", "sos"}


def test_combination_of_odd_generators():
    Q_ = QuadraticModule.from_strings(["x", "1 - x"], ["x"])
    comb = univariate_combine(Q_)
    assert comb.g.degree % 2 == 0
    assert comb.g == comb.c_i.expand(1) * Q_.generators[comb.i] + \
        comb.c_j.expand(1) * Q_.generators[comb.j]
    f = parse("x + 1/2", ["x"])
    cert = putinar_certify(Q_, f)
    check(Q_, f, cert)
    assert "combination" in cert.params["g"]


def test_combination_needs_opposite_signs():
    with pytest.raises(CombineError):
        univariate_combine(QuadraticModule.from_strings(["x", "x^3 + 1"], ["x"]))


def test_heuristic_ball_covers_the_set():
    Q_ = QuadraticModule.from_strings(["x", "1 - x", "y", "1 - y"], ["x", "y"])
    big_n = heuristic_ball(Q_)
    assert big_n >= 2        # the corner (1, 1) has |X|^2 = 2
    assert big_n == (1 + 1) ** 2 * 2


def test_adjoined_ball_for_a_triangle():
    Q_ = QuadraticModule.from_strings(["x", "y", "1 - x - y"], ["x", "y"])
    f = parse("x + y + 1/2", ["x", "y"])
    cert = putinar_certify(Q_, f)
    assert cert.archimedean_n is not None and cert.archimedean_n > 0
    check(Q_, f, cert)
    ok, why = verify_certificate(Q_.with_ball(cert.archimedean_n), f, cert)
    assert ok, why


def test_failure_reports_stage_and_partial_trace():
    Q_ = QuadraticModule.from_strings(["1 - x^2"], ["x"])
    with pytest.raises(PipelineError) as info:
        putinar_certify(Q_, parse("x", ["x"]))
    err = info.value
    assert err.stage in ("averkov", "delta", "ext-averkov", "sos")
    assert isinstance(err.partial, list)
    assert "polynomial" in err.details


def test_failure_writes_state(tmp_path):
    Q_ = QuadraticModule.from_strings(["1 - x^2"], ["x"])
    path = tmp_path / "state.json"
    with pytest.raises(PipelineError):
        putinar_certify(Q_, parse("x - 1/2", ["x"]), CertifyOptions(state_path=str(path)))
    doc = json.loads(path.read_text())
    assert doc["status"] == "partial" and doc["failed_stage"]


@pytest.mark.parametrize("gen,names", [("1 - x^2", ["x"]), ("1 - x^2 - y^2", ["x", "y"])])
def test_archimedean_certificate(gen, names):
    g = parse(gen, names)
    big_r, cert = archimedean_certificate(g)
    n = len(names)
    r = enclosure_radius(g)
    assert big_r == n * ceil(r) + 1
    assert big_r * big_r > n          # S(g) is the unit ball, max |X|^2 = 1
    Q_ = QuadraticModule((g,), n)
    f = big_r * big_r - norm_sq(n)
    ok, why = verify_certificate(Q_, f, cert)
    assert ok, why
    assert cert.archimedean_n is None


def test_json_round_trip_and_tampering():
    Q_ = QuadraticModule.from_strings(["1 - x^2"], ["x"])
    f = parse("x + 11/10", ["x"])
    cert = putinar_certify(Q_, f)
    doc = certificate_to_json(Q_, f, cert, ["x"], True)
    text = json.dumps(doc)
    Q2, f2, cert2 = certificate_from_json(json.loads(text))
    assert f2 == f and Q2.generators == Q_.generators
    assert verify_certificate(Q2, f2, cert2)[0]
    # changing f by a tiny constant breaks the identity
    bad = json.loads(text)
    bad["f"] = bad["f"] + " + 1/1000000"
    assert not verify_certificate(*certificate_from_json(bad))[0]
    # a negative weight is rejected even if the identity could be restored
    neg = json.loads(text)
    for m in neg["multipliers"]:
        if m["squares"]:
            m["squares"][0]["weight"] = "-" + m["squares"][0]["weight"].lstrip("-")
            break
    ok, why = verify_certificate(*certificate_from_json(neg))
    assert not ok and "negative" in why
    assert "sigma_0" in certificate_text(Q_, f, cert, ["x"]) or "sigma_1" in \
        certificate_text(Q_, f, cert, ["x"])


def test_verify_rejects_wrong_shapes():
    Q_ = QuadraticModule.from_strings(["1 - x^2"], ["x"])
    x = Polynomial.variable(0, 1)
    one = SosDecomposition.square(Polynomial.one(1))
    z = SosDecomposition.zero(1)
    f = 2 - x * x
    cert = Certificate((one, one, z), None)
    assert verify_certificate(Q_, f, cert)[0]
    assert not verify_certificate(Q_, f, Certificate((one, one), None))[0]
    ball = Certificate((z, z, one), mpq(2))
    assert verify_certificate(Q_, f, ball)[0]
    assert not verify_certificate(Q_, f, Certificate((z, z, one), None))[0]
    assert not verify_certificate(Q_.with_ball(3), f, ball)[0]
    assert verify_sos(Polynomial.one(1), one)
