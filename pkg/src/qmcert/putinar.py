"""End-to-end certificates ``f = sigma_0 + sum_i sigma_i g_i`` for ``f > 0`` on ``S(G)``.

The pipeline:

1. pick a generator ``g`` with bounded ``S(g)``: an existing one, a
   combination ``c_i g_i + c_j g_j`` of two odd-degree univariate generators,
   or an adjoined ``N - |X|^2``;
2. Averkov multipliers make ``f~ = f - sum sigma_i g_i`` positive on ``S(g)``;
3. if ``f~`` is not bounded below, subtract ``delta g`` with an SOS ``delta``;
4. the extended Averkov step makes ``f^ - p g`` globally positive;
5. a sum of squares for the remainder (directly in one variable, via the
   perturbation series ``q`` otherwise).

The multipliers of ``g`` are folded back into the ``sigma_i``.  Every
certificate is checked by exact expansion before it is returned.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

from gmpy2 import mpq

from . import bounds as bd
from .averkov import AverkovError, alg_averkov, alg_ext_averkov
from .bounds import BoundConfig, Region
from .lasserre import LasserreError, alg_lasserre
from .poly import Polynomial, leading_coefficient_univariate, norm_sq, parse, to_string
from .rational import Q, ceil, to_str
from .sos import SosConfig, SosDecomposition, norm_power_sos, sos_decompose

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A stage failed; ``partial`` holds the trace collected so far."""

    def __init__(self, message: str, stage: str, partial=None, **details):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial or []
        self.details = details


class CombineError(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticModule:
    """Generators ``g_1..g_s`` in ``n`` variables, optionally with ``N - |X|^2`` adjoined."""

    generators: tuple
    nvars: int
    archimedean_n: mpq | None = None

    def __post_init__(self):
        gens = tuple(self.generators)
        if any(g.nvars != self.nvars for g in gens):
            raise ValueError("all generators need the same number of variables")
        object.__setattr__(self, "generators", gens)
        if self.archimedean_n is not None:
            object.__setattr__(self, "archimedean_n", Q(self.archimedean_n))

    @classmethod
    def from_strings(cls, gens: Sequence[str], variables: Sequence[str], archimedean_n=None):
        vs = list(variables)
        return cls(tuple(parse(g, vs) for g in gens), len(vs), archimedean_n)

    @property
    def s(self) -> int:
        return len(self.generators)

    def adjoined(self) -> Polynomial | None:
        if self.archimedean_n is None:
            return None
        return self.archimedean_n - norm_sq(self.nvars)

    def all_generators(self) -> list[Polynomial]:
        """``g_1..g_s`` followed by the adjoined ball polynomial if present."""
        out = list(self.generators)
        if self.archimedean_n is not None:
            out.append(self.adjoined())
        return out

    def with_ball(self, big_n) -> "QuadraticModule":
        return QuadraticModule(self.generators, self.nvars, big_n)


@dataclass(frozen=True)
class TraceRecord:
    """``addend`` was added to ``sigma_index`` by ``stage``."""

    stage: str
    index: int
    addend: SosDecomposition
    note: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Certificate:
    """``sigma[0] + sum_i sigma[i] g_i (+ sigma[s+1] (N - |X|^2))``."""

    sigma: tuple
    archimedean_n: mpq | None
    trace: tuple = ()
    params: dict = field(default_factory=dict)

    def degree(self, Q_: QuadraticModule) -> int:
        gens = [Polynomial.one(Q_.nvars)] + list(Q_.generators)
        if self.archimedean_n is not None:
            gens.append(self.archimedean_n - norm_sq(Q_.nvars))
        d = 0
        for s, g in zip(self.sigma, gens):
            if not s.is_zero():
                d = max(d, s.degree + g.degree)
        return d

    def evaluate(self, Q_: QuadraticModule) -> Polynomial:
        """The exact expansion of the right-hand side."""
        n = Q_.nvars
        gens = [Polynomial.one(n)] + list(Q_.generators)
        gens.append(Polynomial.zero(n) if self.archimedean_n is None
                    else self.archimedean_n - norm_sq(n))
        total = Polynomial.zero(n)
        for s, g in zip(self.sigma, gens):
            if not s.is_zero():
                total = total + s.expand(n) * g
        return total

    def replay(self, nvars: int) -> list[Polynomial]:
        """``sigma_i`` rebuilt from the trace records."""
        out = [Polynomial.zero(nvars) for _ in self.sigma]
        for rec in self.trace:
            out[rec.index] = out[rec.index] + rec.addend.expand(nvars)
        return out


@dataclass(frozen=True)
class CertifyOptions:
    """Knobs of :func:`putinar_certify`.

    ``archimedean_n`` forces the ball ``N - |X|^2`` to be adjoined with
    this ``N``; ``force_adjoin`` adjoins one even when a bounded generator
    exists.  ``search_radius`` is the box used for the heuristic choice of
    ``N``.  ``state_path`` receives the partial trace when a stage fails.
    """

    bound: BoundConfig = BoundConfig()
    sos: SosConfig = SosConfig()
    r_max: int = 15
    n_search_cap: int = 100000
    archimedean_n: mpq | None = None
    force_adjoin: bool = False
    combine: bool = True
    search_radius: int = 2 ** 10
    skip_lower_bound_check: bool = False
    state_path: str | None = None


# --------------------------------------------------------------------------
# choosing g


def find_bounded_generator(Q_: QuadraticModule, cfg: BoundConfig = BoundConfig()):
    """Index of the first generator with a proven bounded ``S(g_i)``, else ``None``."""
    for i, g in enumerate(Q_.generators):
        if bd.enclosure_radius(g, cfg) != "unknown":
            return i
    return None


@dataclass(frozen=True)
class Combination:
    """``g = c_i g_i + c_j g_j`` with SOS ``c_i, c_j``."""

    g: Polynomial
    i: int
    j: int
    c_i: SosDecomposition
    c_j: SosDecomposition
    shift: mpq


def _shift_candidates(limit: int):
    yield mpq(0)
    for k in range(1, limit + 1):
        yield mpq(k)
        yield mpq(-k)


def univariate_combine(Q_: QuadraticModule, cfg: BoundConfig = BoundConfig(),
                       max_shift: int = 25) -> Combination:
    """Combine two odd-degree generators with opposite leading signs into a bounded one.

    For ``deg g_i > deg g_j``: ``c_i = 1/|lc_i|``, ``c_j = (x - a)^(deg g_i -
    deg g_j) / |lc_j|``; for equal degrees both get an extra ``x^2`` resp.
    ``(x - a)^2``.  The shift ``a`` runs over 0, 1, -1, 2, -2, ... until the
    combination has even degree, negative leading coefficient and a proven
    bounded ``S(g)``.
    """
    if Q_.nvars != 1:
        raise CombineError("combination needs a univariate module")
    x = Polynomial.variable(0, 1)
    odd = [(i, g) for i, g in enumerate(Q_.generators) if g.degree % 2 == 1]
    pairs = [(a, b) for pos, a in enumerate(odd) for b in odd[pos + 1:]]
    for (i, gi), (j, gj) in pairs:
        li, lj = leading_coefficient_univariate(gi)[1], leading_coefficient_univariate(gj)[1]
        if (li > 0) == (lj > 0):
            continue
        if gi.degree < gj.degree:
            i, gi, li, j, gj, lj = j, gj, lj, i, gi, li
        gap = gi.degree - gj.degree
        for a in _shift_candidates(max_shift):
            if gap == 0:
                ci = SosDecomposition.square(x, 1 / abs(li))
                cj = SosDecomposition.square(x - a, 1 / abs(lj))
            else:
                ci = SosDecomposition.square(Polynomial.one(1), 1 / abs(li))
                cj = SosDecomposition.square((x - a) ** (gap // 2), 1 / abs(lj))
            g = ci.expand(1) * gi + cj.expand(1) * gj
            if g.is_zero() or g.degree % 2 or leading_coefficient_univariate(g)[1] >= 0:
                continue
            if bd.enclosure_radius(g, cfg) == "unknown":
                continue
            return Combination(g, i, j, ci, cj, a)
    raise CombineError("no pair of odd-degree generators with opposite leading signs combines "
                       "into a generator with bounded S(g)")


def heuristic_ball(Q_: QuadraticModule, radius: int = 2 ** 10,
                   cfg: BoundConfig = BoundConfig()) -> mpq:
    """``N = (1 + u)^2 n`` with ``u`` the sampled max of ``|x_i|`` over ``S(G)`` in a search box.

    Any ``N`` gives a valid module; this only keeps the ball near ``S(G)``.
    """
    n = Q_.nvars
    box = bd.Box.cube(radius, n)
    nonpos = [-g for g in Q_.generators]
    u = mpq(0)
    for k in range(n):
        xk = Polynomial.variable(k, n)
        for obj in (xk, -xk):
            b = bd.constrained_sup(obj, nonpos, box, cfg)
            if b == bd.EMPTY:
                raise PipelineError("S(G) looks empty inside the search box", "choose-g")
            seen = b.attained if b.attained is not None else b.value
            u = max(u, seen)
    return (1 + ceil(u)) ** 2 * n


# --------------------------------------------------------------------------
# delta


def skip_lower_bound_check(f, cfg: BoundConfig = BoundConfig()) -> bool:
    """True when ``f`` has a certified global lower bound (so ``delta = 0``)."""
    return bd.has_global_lower_bound(f, cfg)


def _delta_exponents(f_deg: int, g: Polynomial):
    """Candidate even exponents of ``|X|^e``: smallest first, up to the general bound."""
    n = g.nvars
    m = f_deg + (g.degree - 1) ** n - g.degree
    top = 2 * (max(m, 0) // 2) + 2
    e = 0
    while e <= top:
        yield e
        e += 2


@dataclass(frozen=True)
class DeltaChoice:
    delta: SosDecomposition
    constant: mpq
    exponent: int


def lower_bound_delta(f_terms, g: Polynomial, region: Region, cfg: BoundConfig = BoundConfig(),
                      f_deg: int | None = None) -> DeltaChoice:
    """SOS ``delta = c |X|^e`` with ``f - delta g`` bounded below and positive on ``S(g)``.

    ``f_terms`` is the factored form used by :class:`qmcert.bounds.ProductSum`.
    Exponents are tried from 0 upwards; for each the largest ``c = 2^k``
    (``k`` from 8 down to -64) passing both proofs wins.
    """
    n = g.nvars
    if f_deg is None:
        f_deg = bd.ProductSum(f_terms, n).expand().degree
    for e in _delta_exponents(f_deg, g):
        if e + g.degree < f_deg:
            continue
        nsq = norm_sq(n)
        for k in range(8, -65, -1):
            c = mpq(2) ** k
            rest = bd.ProductSum(list(f_terms) + [(-c, [(nsq, e // 2), (g, 1)])], n)
            if not bd.has_global_lower_bound(rest, cfg):
                break                   # a smaller c will not help the tail
            if not bd.prove_positive(rest, region, cfg):
                continue
            dec = norm_power_sos(n, e // 2).scale(c)
            return DeltaChoice(dec, c, e)
    raise PipelineError("no delta = c |X|^e made f - delta g bounded below and positive on S(g)",
                        "delta")


# --------------------------------------------------------------------------
# the pipeline


class _Builder:
    def __init__(self, s: int, n: int):
        self.n = n
        self.sigma = [SosDecomposition.zero(n) for _ in range(s + 2)]
        self.trace: list[TraceRecord] = []

    def add(self, stage: str, index: int, addend: SosDecomposition, **note):
        if addend.is_zero():
            return
        self.sigma[index] = self.sigma[index] + addend
        self.trace.append(TraceRecord(stage, index, addend, note))


def _fold(builder: _Builder, stage: str, mult: SosDecomposition, target, **note):
    """Distribute ``mult * g`` over the generators that make up ``g``."""
    for index, coeff in target:
        builder.add(stage, index, mult if coeff is None else mult * coeff, **note)


def putinar_certify(Q_: QuadraticModule, f, opts: CertifyOptions = CertifyOptions()) -> Certificate:
    """A verified certificate that ``f`` lies in the quadratic module of ``Q_``."""
    if isinstance(f, str):
        raise TypeError("parse f first")
    n = Q_.nvars
    if f.nvars != n:
        raise ValueError("f and the generators use different numbers of variables")
    cfg = opts.bound
    started = time.perf_counter()
    params: dict = {}
    s = Q_.s
    big_n = Q_.archimedean_n if opts.archimedean_n is None else Q(opts.archimedean_n)
    builder = _Builder(s, n)
    current = [f]            # the polynomial the running stage works on

    def fail(message, stage, details=None):
        details = dict(details or {})
        if "stage" in details:
            details["substage"] = details.pop("stage")
        details.setdefault("polynomial", current[0])
        details.setdefault("bounds_so_far", dict(params))
        err = PipelineError(message, stage, list(builder.trace), **details)
        if opts.state_path:
            write_partial_state(opts.state_path, Q_, f, builder, stage, message, params)
        return err

    # ---- choose g
    target = None
    g = None
    idx = None if opts.force_adjoin or big_n is not None else find_bounded_generator(Q_, cfg)
    if idx is not None:
        g = Q_.generators[idx]
        target = [(idx + 1, None)]
        params["g"] = f"generator {idx + 1}"
    elif big_n is None and n == 1 and opts.combine:
        try:
            comb = univariate_combine(Q_, cfg)
        except CombineError as exc:
            log.info("combination failed: %s", exc)
        else:
            g = comb.g
            target = [(comb.i + 1, comb.c_i), (comb.j + 1, comb.c_j)]
            params["g"] = f"combination of generators {comb.i + 1} and {comb.j + 1}"
            params["shift"] = comb.shift
    if g is None:
        if big_n is None:
            big_n = heuristic_ball(Q_, opts.search_radius, cfg)
        g = big_n - norm_sq(n)
        target = [(s + 1, None)]
        params["g"] = "adjoined ball"
    region_tail = bd.enclosure_tail(g, cfg)
    if region_tail is None:
        raise fail("S(g) could not be proven bounded", "choose-g")
    region = Region.semialgebraic(g, region_tail.box)
    log.info("g: %s (degree %d)", params["g"], g.degree)

    # ---- Averkov on S(g)
    G = list(Q_.generators)
    terms = [(1, [(f, 1)])]
    if G:
        try:
            av = alg_averkov(G, f, region, cfg, cap=opts.n_search_cap)
        except AverkovError as exc:
            raise fail(str(exc), "averkov", exc.details) from exc
        if not av.skipped:
            params["averkov"] = dict(gamma=av.params.gamma, epsilon=av.params.epsilon,
                                     exponent=2 * av.half_exponent,
                                     formula_exponent=2 * av.params.n_exponent)
            for i, (b, gi) in enumerate(zip(av.bases, G)):
                builder.add("averkov", i + 1, SosDecomposition.square(b ** av.half_exponent))
                terms.append((-1, [(b, 2 * av.half_exponent), (gi, 1)]))
        elif not bd.prove_positive(f, region, cfg):   # pragma: no cover - alg_averkov checks
            raise fail("f is not positive on S(g)", "averkov")
    else:
        if not bd.prove_positive(f, region, cfg):
            raise fail("f is not positive on S(g)", "averkov")
    f_tilde = bd.ProductSum(terms, n).expand()
    current[0] = f_tilde
    log.info("averkov: %s, f~ has degree %d", params.get("averkov", "skipped"), f_tilde.degree)

    # ---- delta
    delta = None
    if opts.skip_lower_bound_check or skip_lower_bound_check(bd.ProductSum(terms, n), cfg):
        f_hat = f_tilde
    else:
        try:
            delta = lower_bound_delta(terms, g, region, cfg, f_tilde.degree)
        except PipelineError as exc:
            raise fail(str(exc), "delta") from exc
        f_hat = f_tilde - delta.delta.expand(n) * g
        terms.append((-delta.constant, [(norm_sq(n), delta.exponent // 2), (g, 1)]))
        params["delta"] = dict(constant=delta.constant, exponent=delta.exponent)
        _fold(builder, "delta", delta.delta, target)

    # ---- extended Averkov
    current[0] = f_hat
    log.info("delta: %s", params.get("delta", "skipped"))
    try:
        ext = alg_ext_averkov(g, bd.ProductSum(terms, n), cfg, cap=opts.n_search_cap)
    except AverkovError as exc:
        raise fail(str(exc), "ext-averkov", exc.details) from exc
    rest = f_hat
    if not ext.skipped:
        params["ext_averkov"] = dict(gamma=ext.params.gamma, epsilon=ext.params.epsilon,
                                     exponent=2 * ext.half_exponent, forced=ext.forced)
        _fold(builder, "ext-averkov", ext.multiplier_sos(g), target)
        rest = f_hat - ext.multiplier * g
        terms.append((-1, [(ext.base, 2 * ext.half_exponent), (ext.factor, 1), (g, 1)]))

    # ---- sum of squares
    current[0] = rest
    log.info("ext-averkov: %s, remainder has degree %d", params.get("ext_averkov", "skipped"),
             rest.degree)
    if n == 1:
        dec = sos_decompose(rest, opts.sos)
        if not isinstance(dec, SosDecomposition):
            raise fail(f"remainder is {dec}", "sos")
        builder.add("sos", 0, dec)
    else:
        try:
            las = alg_lasserre(rest, g, cfg, opts.r_max, opts.sos,
                               bound_form=bd.ProductSum(terms, n))
        except LasserreError as exc:
            raise fail(str(exc), "lasserre", exc.details) from exc
        if not las.multiplier.is_zero():
            params["lasserre"] = dict(epsilon=las.epsilon, r=las.r)
            _fold(builder, "lasserre", las.multiplier_sos(g), target)
        builder.add("sos", 0, las.sos_witness)

    used_n = big_n if target[0][0] == s + 1 else None
    if used_n is not None:
        params["N"] = used_n
    params["seconds"] = time.perf_counter() - started
    cert = Certificate(tuple(builder.sigma), used_n, tuple(builder.trace), params)
    ok, why = verify_certificate(Q_, f, cert)
    if not ok:
        raise fail(f"final identity check failed: {why}", "verify")
    return cert


# --------------------------------------------------------------------------
# verification


def verify_certificate(Q_: QuadraticModule, f: Polynomial, cert: Certificate):
    """``(True, "")`` when the certificate expands exactly to ``f``.

    Each ``sigma_i`` is a weighted list of squares; weights must be
    nonnegative, and a ball term needs ``N`` > 0.
    """
    n = Q_.nvars
    if len(cert.sigma) != Q_.s + 2:
        return False, f"expected {Q_.s + 2} multipliers, got {len(cert.sigma)}"
    for i, s in enumerate(cert.sigma):
        if any(w < 0 for w, _ in s.squares):
            return False, f"sigma_{i} has a negative weight"
    if not cert.sigma[-1].is_zero():
        if cert.archimedean_n is None:
            return False, "ball multiplier present without N"
        if Q_.archimedean_n is not None and Q(cert.archimedean_n) != Q_.archimedean_n:
            return False, "N differs from the module's"
        if cert.archimedean_n <= 0:
            return False, "N must be positive"
    diff = cert.evaluate(Q_) - f
    if not diff.is_zero():
        return False, f"identity fails; difference has {len(diff.terms)} terms"
    return True, ""


def archimedean_certificate(g: Polynomial, opts: CertifyOptions = CertifyOptions()):
    """``(R, cert)`` proving ``R^2 - |X|^2`` lies in the module of the single generator ``g``.

    ``R = n r + 1`` for the certified box radius ``r`` of ``S(g)`` rounded
    up, so ``R^2 - |X|^2`` is positive on ``S(g)`` with room to spare.
    """
    n = g.nvars
    r = bd.enclosure_radius(g, opts.bound)
    if r == "unknown":
        raise PipelineError("S(g) could not be proven bounded", "choose-g")
    big_r = mpq(n * ceil(r) + 1)
    Q_ = QuadraticModule((g,), n)
    return big_r, putinar_certify(Q_, big_r * big_r - norm_sq(n), opts)


# --------------------------------------------------------------------------
# serialization


def _poly_str(p: Polynomial, names) -> str:
    return to_string(p, names)


def sos_to_json(d: SosDecomposition, names) -> list:
    return [{"weight": to_str(w), "poly": _poly_str(p, names)} for w, p in d.squares]


def sos_from_json(items, names) -> SosDecomposition:
    n = len(names)
    return SosDecomposition(tuple((Q(it["weight"]), parse(it["poly"], list(names)))
                                  for it in items), None, n)


def plain_value(v):
    if isinstance(v, type(mpq(0))):
        return to_str(v)
    if isinstance(v, dict):
        return {k: plain_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [plain_value(x) for x in v]
    if isinstance(v, float):
        return round(v, 4)
    return v


def _roles(s: int) -> list[str]:
    return ["sos"] + [f"g{i + 1}" for i in range(s)] + ["ball"]


def certificate_to_json(Q_: QuadraticModule, f: Polynomial, cert: Certificate, names,
                        verdict: bool | None = None) -> dict:
    """A JSON-ready record; rationals are ``"p/q"`` strings."""
    roles = _roles(Q_.s)
    return {
        "variables": list(names),
        "generators": [_poly_str(g, names) for g in Q_.generators],
        "f": _poly_str(f, names),
        "N": None if cert.archimedean_n is None else to_str(cert.archimedean_n),
        "multipliers": [
            {"index": i, "role": roles[i], "degree": None if sig.is_zero() else sig.degree,
             "squares": sos_to_json(sig, names)}
            for i, sig in enumerate(cert.sigma)],
        "trace": [{"stage": r.stage, "index": r.index, "addend": sos_to_json(r.addend, names)}
                  for r in cert.trace],
        "params": plain_value(cert.params),
        "verified": verdict,
    }


def certificate_from_json(doc: dict):
    """``(Q, f, cert)`` rebuilt from :func:`certificate_to_json` output.

    Raises ``KeyError``/``ValueError``/:class:`qmcert.poly.ParseError` on
    malformed input.
    """
    names = list(doc["variables"])
    big_n = None if doc.get("N") is None else Q(doc["N"])
    gens = tuple(parse(g, names) for g in doc["generators"])
    f = parse(doc["f"], names)
    entries = sorted(doc["multipliers"], key=lambda e: int(e["index"]))
    if [int(e["index"]) for e in entries] != list(range(len(gens) + 2)):
        raise ValueError("multiplier indices must be 0 .. s+1")
    sigma = tuple(sos_from_json(e["squares"], names) for e in entries)
    trace = tuple(TraceRecord(r["stage"], int(r["index"]), sos_from_json(r["addend"], names))
                  for r in doc.get("trace", []))
    Q_ = QuadraticModule(gens, len(names), big_n)
    return Q_, f, Certificate(sigma, big_n, trace, doc.get("params", {}))


def certificate_text(Q_: QuadraticModule, f: Polynomial, cert: Certificate, names) -> str:
    """A human-readable rendering of the identity."""
    lines = [f"f = {_poly_str(f, names)}"]
    gens = list(Q_.generators)
    labels = ["1"] + [f"g{i + 1} = {_poly_str(g, names)}" for i, g in enumerate(gens)]
    if cert.archimedean_n is not None:
        labels.append(f"N - |x|^2 with N = {to_str(cert.archimedean_n)}")
    for i, (s, lab) in enumerate(zip(cert.sigma, labels)):
        if s.is_zero():
            continue
        lines.append(f"sigma_{i} (multiplies {lab}): {len(s.squares)} squares, "
                     f"degree {s.degree}")
        for w, p in s.squares:
            lines.append(f"    {to_str(w)} * ({_poly_str(p, names)})^2")
    for k, v in cert.params.items():
        lines.append(f"{k}: {plain_value(v)}")
    return "\n".join(lines)


def write_partial_state(path, Q_, f, builder: _Builder, stage, message, params):
    names = [f"x{i + 1}" for i in range(Q_.nvars)]
    doc = {
        "status": "partial",
        "failed_stage": stage,
        "message": message,
        "variables": names,
        "generators": [_poly_str(g, names) for g in Q_.generators],
        "f": _poly_str(f, names),
        "trace": [{"stage": r.stage, "index": r.index, "addend": sos_to_json(r.addend, names)}
                  for r in builder.trace],
        "params": plain_value(params),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
