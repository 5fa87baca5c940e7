"""Reduce a globally positive ``f`` modulo one bounded generator to a sum of squares.

With ``p_r = sum_{k<=r} sum_j x_j^(2k) / k!`` and a small enough ``eps``,
``f - eps * p_r * c * g`` becomes a sum of squares for some ``r``; here ``c``
is 1 when ``{c g + 1 >= 0}`` is already bounded for ``c = 1`` and a power of
``|X|^2`` otherwise.  ``eps`` comes from certified bounds and ``r`` is found
by trying 0, 1, 2, ... in order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

from gmpy2 import mpq

from . import bounds as bd
from .averkov import coercive_factor, coercive_factor_sos
from .bounds import EMPTY, UNKNOWN, BoundConfig
from .poly import Polynomial, norm_sq
from .rational import Q, ceil, exp_upper, round_down
from .sos import SosConfig, SosDecomposition, sos_decompose, verify_sos

log = logging.getLogger(__name__)


class LasserreError(RuntimeError):
    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class LasserreResult:
    """``f - multiplier * g`` equals ``sos_witness`` exactly.

    ``multiplier = c_factor * epsilon * p_r``; a zero multiplier means ``f``
    itself was decomposed.
    """

    multiplier: Polynomial
    epsilon: mpq
    r: int
    c_factor: Polynomial
    sos_witness: SosDecomposition
    bounds: dict = field(default_factory=dict)
    forced: bool = False

    def multiplier_sos(self, g: Polynomial) -> SosDecomposition:
        """The multiplier ``c eps p_r`` as an explicit sum of squares."""
        n = self.multiplier.nvars
        if self.multiplier.is_zero():
            return SosDecomposition.zero(n)
        sq = [(self.epsilon * n, Polynomial.one(n))]
        for k in range(1, self.r + 1):
            w = self.epsilon / math.factorial(k)
            for j in range(n):
                sq.append((w, Polynomial.variable(j, n) ** k))
        out = SosDecomposition(tuple(sq), None, n)
        if self.forced:
            out = out * coercive_factor_sos(g, force=True)
        return out


def perturbation_series(r: int, n: int) -> Polynomial:
    """``sum_{k=0}^{r} sum_{j=1}^{n} x_j^(2k) / k!``."""
    if r < 0 or n < 1:
        raise ValueError("need r >= 0 and n >= 1")
    terms: dict = {}
    zero = (0,) * n
    terms[zero] = mpq(n)
    for k in range(1, r + 1):
        c = mpq(1, math.factorial(k))
        for j in range(n):
            m = [0] * n
            m[j] = 2 * k
            terms[tuple(m)] = c
    return Polynomial(terms, n)


def lower_bound_for(f: Polynomial, cfg: BoundConfig):
    """``(f_star, heuristic)``: a positive lower bound on ``min f``.

    Uses the certified global bound when available; otherwise the box
    ``[-2^10, 2^10]^n`` (flagged heuristic), and if even that bound is not
    positive, half the smallest sampled value.  Heuristic values only
    steer the search; the returned certificate is verified exactly anyway.
    """
    b = bd.global_min_lower_bound(f, cfg)
    if b != UNKNOWN and b.value > 0:
        return b.value, False
    if b != UNKNOWN and b.attained is not None and b.attained <= 0:
        raise LasserreError("f is not globally positive", point=b.witness)
    fb = bd.fallback_min(f, cfg)
    if fb.value > 0:
        return fb.value, True
    if fb.attained is None or fb.attained <= 0:
        raise LasserreError("f is not globally positive", point=fb.witness)
    return fb.attained / 2, True


def lasserre_parameters(f, g: Polynomial, cfg: BoundConfig = BoundConfig()) -> dict:
    """The constants ``c, f*, R, M, E, eps`` used by :func:`alg_lasserre`.

    ``f`` may be a :class:`qmcert.bounds.ProductSum`; only bounds use it.
    """
    n = f.nvars
    if bd.enclosure_radius(g, cfg) == "unknown":
        raise LasserreError("S(g) is not proven bounded", stage="enclosure")
    c_factor = Polynomial.one(n)
    forced = bd.enclosure_tail(g + 1, cfg) is None
    if forced:
        c_factor = coercive_factor(g, force=True)
    cg = c_factor * g
    tail = bd.enclosure_tail(cg + 1, cfg)
    if tail is None:
        raise LasserreError("S(c g + 1) is not proven bounded", stage="radius")
    box = tail.box
    rs = bd.constrained_sup(norm_sq(n), [-(cg + 1)], box, cfg)
    radius_sq = mpq(0) if rs == EMPTY else max(rs.value, mpq(0))
    sup = bd.global_sup_upper_bound(cg, cfg)
    if sup == "unknown":
        sup = bd.constrained_sup(cg, [-(cg + 1)], box, cfg)
    big_m = max(sup.value + 1, mpq(1)) if sup != EMPTY else mpq(1)
    f_star, heuristic = lower_bound_for(f, cfg)
    e_up = exp_upper(ceil(radius_sq))
    eps = f_star / (2 * big_m * n * e_up)
    eps = round_down(min(eps, mpq(1, 2)), 16)
    return dict(c_factor=c_factor, forced=forced, f_star=f_star, f_star_heuristic=heuristic,
                radius_sq=radius_sq, big_m=big_m, exp_bound=e_up, epsilon=eps)


def alg_lasserre(f: Polynomial, g: Polynomial, cfg: BoundConfig = BoundConfig(), r_max: int = 15,
                 sos_cfg: SosConfig = SosConfig(), r_start: int = 0,
                 bound_form=None) -> LasserreResult:
    """``q = c eps p_r`` with ``f - q g`` a verified sum of squares.

    ``bound_form`` is an optional factored form of ``f`` used for the
    certified bounds.
    """
    n = f.nvars
    first = sos_decompose(f, sos_cfg)
    if isinstance(first, SosDecomposition):
        return LasserreResult(Polynomial.zero(n), mpq(0), 0, Polynomial.one(n), first)
    params = lasserre_parameters(f if bound_form is None else bound_form, g, cfg)
    eps = params["epsilon"]
    # the perturbed remainders are interior points, so the searches meant for
    # singular Gram matrices (reweighting, low rank) only cost time here
    inner = replace(sos_cfg, low_rank_basis=0, reweight_rounds=0)
    last = None
    for r in range(r_start, r_max + 1):
        mult = perturbation_series(r, n).scale(eps) * params["c_factor"]
        rest = f - mult * g
        dec = sos_decompose(rest, inner)
        log.info("lasserre r=%d: %s", r, dec if isinstance(dec, str) else "sos")
        if isinstance(dec, SosDecomposition):
            if not verify_sos(rest, dec):       # pragma: no cover - sos_decompose checks too
                raise LasserreError("decomposition failed exact verification", r=r)
            return LasserreResult(mult, eps, r, params["c_factor"], dec, params,
                                  forced=params["forced"])
        last = dec
    raise LasserreError(f"no sum of squares found for r <= {r_max}", last=last, params=params,
                        stage="lasserre")


def admissible_epsilon(eps, f_star, big_m, n: int, e_up) -> bool:
    """``eps * 2 M n E <= f*`` by exact comparison."""
    return Q(eps) * 2 * Q(big_m) * n * Q(e_up) <= Q(f_star)
