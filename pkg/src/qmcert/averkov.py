"""Multipliers that push a polynomial below ``f`` outside the positivity set.

Given generators ``g_1..g_s`` and ``f > 0`` on ``S(G)``, the polynomial

    h = sum_i ((g_i - gamma) / (gamma + eps))^(2N) * g_i

lies in the quadratic module and, for admissible parameters, satisfies
``f - h > 0`` on a compact region ``B`` (or on all of R^n when ``s = 1``
and ``f`` is bounded below).  All parameters come from certified
branch-and-bound bounds, and every output is re-checked by an independent
positivity proof before it is returned.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

from gmpy2 import mpq

from . import bounds as bd
from .bounds import EMPTY, UNKNOWN, BoundConfig, Region
from .poly import Polynomial, norm_sq
from .rational import Q, simplest_between

log = logging.getLogger(__name__)

SKIP = "skip"


class AverkovError(RuntimeError):
    """A bound could not be certified or the final positivity check failed."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


@dataclass(frozen=True)
class AverkovParams:
    """Admissible ``gamma, eps, N`` together with the certified bounds used.

    ``n_exponent`` is the least ``N`` satisfying both power inequalities
    with the stored values (``c(N) < mu/s`` and ``C(N) > M + mu``).
    """

    gamma: mpq
    epsilon: mpq
    mu: mpq
    big_m: mpq
    n_exponent: int
    s: int = 1

    def c_small(self, n: int | None = None) -> mpq:
        n = self.n_exponent if n is None else n
        return c_small(self.gamma, self.epsilon, n)

    def c_big(self, n: int | None = None) -> mpq:
        n = self.n_exponent if n is None else n
        return c_big(self.gamma, self.epsilon, n)

    def satisfies_power_inequalities(self, n: int | None = None) -> bool:
        n = self.n_exponent if n is None else n
        return (self.s * self.c_small(n) < self.mu
                and self.c_big(n) > self.big_m + self.mu)


def c_small(gamma, eps, n: int) -> mpq:
    """``c(N) = 2 gamma (gamma / (gamma + eps))^(2N)``."""
    return 2 * gamma * (gamma / (gamma + eps)) ** (2 * n)


def c_big(gamma, eps, n: int) -> mpq:
    """``C(N) = 2 eps ((gamma + 2 eps) / (gamma + eps))^(2N)``."""
    return 2 * eps * ((gamma + 2 * eps) / (gamma + eps)) ** (2 * n)


def least_exponent(gamma, eps, mu, big_m, s: int = 1, cap: int = 100000) -> int:
    """Least ``N >= 1`` with ``s c(N) < mu`` and ``C(N) > M + mu`` (exact search)."""
    gamma, eps, mu, big_m = Q(gamma), Q(eps), Q(mu), Q(big_m)
    if gamma <= 0 or eps <= 0 or mu <= 0:
        raise ValueError("gamma, eps and mu must be positive")
    down = (gamma / (gamma + eps)) ** 2
    up = ((gamma + 2 * eps) / (gamma + eps)) ** 2
    small = 2 * gamma * down
    big = 2 * eps * up
    for n in range(1, cap + 1):
        if s * small < mu and big > big_m + mu:
            return n
        small *= down
        big *= up
    raise AverkovError(f"no admissible N below the cap {cap}")


def _slack_gamma(bound: mpq) -> mpq:
    # gamma > bound/2 is needed; take bound/2 * 9/8 + 1/8 and a short rational above it
    g = max(bound / 2, mpq(0)) * mpq(9, 8) + mpq(1, 8)
    return simplest_between(g, g * mpq(65, 64))


def _slack_eps(sup_min_g: mpq) -> mpq:
    # eps < |sup_T min g| / 2 is needed; take 7/8 of it and a short rational below
    e = abs(sup_min_g) / 2 * mpq(7, 8)
    return simplest_between(e * mpq(63, 64), e)


def _base(gi: Polynomial, gamma: mpq, eps: mpq) -> Polynomial:
    return (gi - gamma) / (gamma + eps)


def residual(f: Polynomial, G, bases, exponent: int) -> bd.ProductSum:
    """``f - sum_i base_i^exponent * g_i`` in factored form.

    Proving positivity of the factored form is far more robust than of the
    expansion, whose coefficients cancel badly for large exponents.
    """
    if isinstance(f, bd.ProductSum):
        terms = [(c, [(f.factors[j], e) for j, e in packed]) for c, packed in f.terms]
    else:
        terms = [(1, [(f, 1)])]
    terms += [(-1, [(b, exponent), (gi, 1)]) for b, gi in zip(bases, G)]
    return bd.ProductSum(terms, f.nvars)


# ---------------------------------------------------------------- compact B


def _region(B, n: int) -> Region:
    return bd._coerce_region(B, n)


def compute_params(G: Sequence[Polynomial], f: Polynomial, B, cfg: BoundConfig = BoundConfig(),
                   cap: int = 100000):
    """Certified admissible parameters over a compact region, or ``"skip"``.

    ``"skip"`` means ``{f <= 0}`` does not meet the region, so ``h = 0``
    already works.
    """
    region = _region(B, f.nvars)
    if not region.compact:
        raise ValueError("compute_params needs a compact region")
    G = list(G)
    if not G:
        raise ValueError("need at least one generator")
    # eps: sup over {f <= 0} of min_i g_i
    t_sup = bd.region_sup(G, region, cfg, extra_nonpos=[f])
    if t_sup == EMPTY:
        return SKIP
    if t_sup.value >= 0:
        raise AverkovError("could not certify that min g_i < 0 on {f <= 0}",
                           bound=t_sup.value, stage="epsilon")
    eps = _slack_eps(t_sup.value)
    # gamma: max over B of every g_i
    g_max = None
    for gi in G:
        b = bd.region_sup(gi, region, cfg)
        if b == EMPTY:
            return SKIP
        g_max = b.value if g_max is None else max(g_max, b.value)
    gamma = _slack_gamma(g_max)
    # mu: min f over {g_i >= -2 eps} within B
    mu_b = bd.region_inf(f, region, cfg, extra_nonpos=[-(gi + 2 * eps) for gi in G])
    if mu_b == EMPTY:
        raise AverkovError("the slice {g_i >= -2 eps} is empty, which contradicts S(G) nonempty",
                           stage="mu")
    if mu_b.value <= 0:
        raise AverkovError("could not certify mu > 0", bound=mu_b.value, stage="mu")
    mu = mu_b.value
    # M: minus the minimum of f over B
    m_b = bd.region_inf(f, region, cfg)
    big_m = -m_b.value
    n = least_exponent(gamma, eps, mu, big_m, len(G), cap)
    return AverkovParams(gamma, eps, mu, big_m, n, len(G))


@dataclass(frozen=True)
class AverkovResult:
    """Multipliers ``sigma_i = base_i^(2 * half_exponent)`` (all zero when skipped)."""

    multipliers: tuple
    bases: tuple = ()
    half_exponent: int = 0
    params: AverkovParams | None = None
    skipped: bool = True

    def __iter__(self):
        return iter(self.multipliers)

    def __len__(self):
        return len(self.multipliers)

    def __getitem__(self, i):
        return self.multipliers[i]


def alg_averkov(G: Sequence[Polynomial], f: Polynomial, B, cfg: BoundConfig = BoundConfig(),
                shrink: bool = True, cap: int = 100000,
                max_degree: int | None = None) -> AverkovResult:
    """Multipliers with ``f - sum sigma_i g_i > 0`` certified on the compact region ``B``.

    With ``shrink`` the exponent is searched from below and can end well
    under the parameter formula's value; the answer is always a proven
    one.  Exponents making ``f - sum sigma_i g_i`` exceed ``max_degree``
    (default: what the later sum-of-squares step can handle) are not tried.
    """
    G = list(G)
    n = f.nvars
    if max_degree is None:
        max_degree = _sos_degree_cap(n)
    region = _region(B, n)
    zeros = tuple(Polynomial.zero(n) for _ in G)
    if bd.prove_positive(f, region, cfg):
        return AverkovResult(zeros)
    last_error = None
    for attempt_cfg in (cfg, cfg.tightened()):
        try:
            params = compute_params(G, f, region, attempt_cfg, cap)
        except AverkovError as exc:
            last_error = exc
            continue
        if params == SKIP:
            if bd.prove_positive(f, region, attempt_cfg.tightened()):
                return AverkovResult(zeros)
            last_error = AverkovError("slice {f <= 0} empty but f > 0 could not be proven")
            continue
        bases = [_base(gi, params.gamma, params.epsilon) for gi in G]

        def works(k: int) -> bool:
            return bd.prove_positive(residual(f, G, bases, 2 * k), region, attempt_cfg)

        top = params.n_exponent
        base_deg = max(max(b.degree for b in bases), 1)
        limit = max(1, (max_degree - max(g.degree for g in G)) // (2 * base_deg))
        k = _grow(works, top, limit) if shrink else (top if works(top) else None)
        if k is None:
            why = ("positivity of f - h could not be certified" if top <= limit
                   else f"no exponent up to {limit} works (formula gives {top})")
            last_error = AverkovError(why, params=params, stage="verify")
            continue
        mults = tuple(b ** (2 * k) for b in bases)
        return AverkovResult(mults, tuple(bases), k, params, skipped=False)
    raise last_error


def _sos_degree_cap(n: int, max_basis: int = 70) -> int:
    """Largest even degree whose half-degree monomial basis fits ``max_basis``.

    About 70 monomials is where one Gram SDP still solves in seconds (it
    takes a minute at 91).  Univariate inputs are decomposed through
    roots, not an SDP, so they get a generous fixed cap instead.
    """
    if n == 1:
        return 400
    half = 0
    while math.comb(n + half + 1, n) <= max_basis:
        half += 1
    return 2 * half


def _grow(works, top: int, limit: int) -> int | None:
    """Smallest ``k <= min(top, limit)`` with ``works(k)``, searching by doubling first.

    Cheap small exponents are tried before large ones; after the first
    success the gap to the last failure is bisected.  ``None`` when no
    exponent up to the limit works.
    """
    hi = min(top, limit)
    lo, k = 0, 1
    while True:
        k = min(k, hi)
        if works(k):
            break
        if k == hi:
            return None
        lo, k = k, 2 * k
    while lo + 1 < k:
        mid = (lo + k) // 2
        if works(mid):
            k = mid
        else:
            lo = mid
    return k


# ------------------------------------------------------------- all of R^n


def is_archimedean_shaped(g: Polynomial) -> bool:
    """``g = N - |X|^2``, or the top form is ``-c |X|^(2k)`` with ``c > 0``."""
    n = g.nvars
    rest = g + norm_sq(n)
    if rest.is_constant() and rest.constant_term() > 0:
        return True
    top = g.top_form()
    d = g.degree
    if d < 2 or d % 2:
        return False
    k = d // 2
    ref = norm_sq(n) ** k
    lead = top.coefficient(next(iter(ref.terms)))
    return lead < 0 and top == ref.scale(lead)


def _coercive_shape(g: Polynomial, force: bool):
    """``(lifted, k)``: the factor is ``(1 + |X|^2 if lifted) * |X|^(2k)``; ``None`` for 1."""
    if not force and is_archimedean_shaped(g):
        return None
    d = g.degree
    lifted = d <= 2
    if lifted:
        d = d + 2
    return lifted, (d - 1) ** g.nvars // 2 + 1


def coercive_factor(g: Polynomial, force: bool = False) -> Polynomial:
    """The SOS factor ``F`` with ``coercive_transform(g) = F * g``."""
    n = g.nvars
    shape = _coercive_shape(g, force)
    if shape is None:
        return Polynomial.one(n)
    lifted, k = shape
    pre = 1 + norm_sq(n) if lifted else Polynomial.one(n)
    return pre * norm_sq(n) ** k


def coercive_factor_sos(g: Polynomial, force: bool = False):
    """:func:`coercive_factor` written explicitly as a sum of squares."""
    from .sos import SosDecomposition, norm_power_sos

    n = g.nvars
    shape = _coercive_shape(g, force)
    if shape is None:
        return SosDecomposition.square(Polynomial.one(n))
    lifted, k = shape
    out = norm_power_sos(n, k)
    if lifted:
        out = norm_power_sos(n, 0) + norm_power_sos(n, 1)
        out = out * norm_power_sos(n, k)
    return out


def coercive_transform(g: Polynomial, force: bool = False) -> Polynomial:
    """``|X|^(2 floor((d-1)^n / 2) + 2) * g`` (after lifting ``g`` when ``deg g <= 2``).

    Archimedean-shaped inputs come back unchanged unless ``force``.
    """
    if g.is_zero():
        raise ValueError("zero generator")
    return coercive_factor(g, force) * g


def sup_over_sublevel(gp: Polynomial, f: Polynomial, cfg: BoundConfig = BoundConfig()):
    """Certified upper bound on ``sup {gp(x) : f(x) <= 0}`` over all of R^n.

    Needs ``gp -> -infinity`` in the tail-proof sense.  The bound is found
    on a finite box; outside it ``gp`` is proven to stay below the bound.
    Returns ``None`` when no such proof is found.
    """
    tail = bd.enclosure_tail(gp, cfg)
    if tail is None:
        return None
    radii = list(tail.radii)
    level = None
    for _ in range(12):
        box = bd.Box.from_radii(radii)
        inside = bd.constrained_sup(gp, [f], box, cfg)
        if inside != EMPTY:
            level = inside.value if level is None else max(level, inside.value)
        elif level is None:
            level = mpq(-1)
        if level >= 0:
            return level
        t = bd.tail_proof(level - gp, cfg)
        if t is None:
            return None
        if all(a <= b for a, b in zip(t.radii, radii)):
            return level
        radii = [max(a, b) for a, b in zip(t.radii, radii)]
    return None


@dataclass(frozen=True)
class ExtAverkovResult:
    """``sigma = base^(2 * half_exponent)`` times ``factor``, multiplying ``g``.

    ``factor`` is the SOS polynomial of the coercive transform (1 when ``g``
    was used as is).  ``multiplier`` is the full SOS multiplier of ``g``.
    """

    multiplier: Polynomial
    base: Polynomial | None = None
    half_exponent: int = 0
    factor: Polynomial | None = None
    params: AverkovParams | None = None
    skipped: bool = True
    global_min: mpq | None = None
    forced: bool = False          # True when the coercive factor was applied

    def multiplier_sos(self, g: Polynomial):
        """The multiplier as an explicit sum of squares."""
        from .sos import SosDecomposition

        n = self.multiplier.nvars
        if self.skipped:
            return SosDecomposition.zero(n)
        sq = SosDecomposition.square(self.base ** self.half_exponent)
        if self.forced:
            sq = sq * coercive_factor_sos(g, force=True)
        return sq


def alg_ext_averkov(g: Polynomial, f: Polynomial, cfg: BoundConfig = BoundConfig(),
                    shrink: bool = True, cap: int = 100000,
                    max_degree: int | None = None) -> ExtAverkovResult:
    """A multiplier ``sigma`` with ``f - sigma g`` globally positive with positive minimum.

    ``f`` must be bounded below, ``S(g)`` bounded and ``f > 0`` on ``S(g)``.
    It may be given in factored form (:class:`qmcert.bounds.ProductSum`),
    which keeps the interval enclosures tight.  ``max_degree`` caps the
    degree of ``f - sigma g`` that the exponent search will expand; the
    default is what the later sum-of-squares step can still handle.
    """
    n = f.nvars
    if max_degree is None:
        max_degree = _sos_degree_cap(n)
    lb = bd.global_min_lower_bound(f, cfg, target=mpq(0))
    if lb == UNKNOWN:
        raise AverkovError("f has no certified global lower bound", stage="lower-bound")
    if lb.value > 0:
        return ExtAverkovResult(Polynomial.zero(n), global_min=lb.value)
    factor = Polynomial.one(n)
    forced = bd.global_sup_upper_bound(g, cfg) == "unknown"
    if forced:
        factor = coercive_factor(g, force=True)
    gp = factor * g
    last_error = None
    for attempt_cfg in (cfg, cfg.tightened()):
        try:
            params = _ext_params(gp, f, attempt_cfg, cap)
        except AverkovError as exc:
            last_error = exc
            continue
        base = _base(gp, params.gamma, params.epsilon)

        def rest(k: int) -> bd.ProductSum:
            return residual(f, [gp], [base], 2 * k)

        def works(k: int) -> bool:
            b = bd.global_min_lower_bound(rest(k), attempt_cfg, target=mpq(0))
            return b != UNKNOWN and b.value > 0

        top = params.n_exponent
        # the global proofs expand the residual, so huge exponents are out of reach
        limit = max(1, (max_degree - gp.degree) // (2 * max(base.degree, 1)))
        k = _grow(works, top, limit) if shrink else (top if works(top) else None)
        if k is None:
            why = ("global positivity of f - sigma g could not be certified" if top <= limit
                   else f"no exponent up to {limit} works (formula gives {top})")
            last_error = AverkovError(why, params=params, stage="verify")
            continue
        final = bd.global_min_lower_bound(rest(k), attempt_cfg)
        mult = base ** (2 * k) * factor
        return ExtAverkovResult(mult, base, k, factor, params, skipped=False,
                                global_min=final.value, forced=forced)
    raise last_error


def _ext_params(gp: Polynomial, f: Polynomial, cfg: BoundConfig, cap: int = 100000) -> AverkovParams:
    sup_g = bd.global_sup_upper_bound(gp, cfg)
    if sup_g == "unknown":
        raise AverkovError("no certified upper bound on g over R^n", stage="gamma")
    gamma = _slack_gamma(sup_g.value)
    t_sup = sup_over_sublevel(gp, f, cfg)
    if t_sup is None or t_sup >= 0:
        raise AverkovError("could not certify g < 0 on {f <= 0}", bound=t_sup, stage="epsilon")
    eps = _slack_eps(t_sup)
    shifted = gp + 2 * eps
    tail = bd.enclosure_tail(shifted, cfg)
    if tail is None:
        raise AverkovError("{g >= -2 eps} not proven bounded", stage="mu")
    mu_b = bd.constrained_inf(f, [-shifted], tail.box, cfg)
    if mu_b == EMPTY or mu_b.value <= 0:
        raise AverkovError("could not certify mu > 0", stage="mu",
                           bound=None if mu_b == EMPTY else mu_b.value)
    lb = bd.global_min_lower_bound(f, cfg)
    if lb == UNKNOWN:
        raise AverkovError("f has no certified global lower bound", stage="M")
    big_m = -lb.value
    nexp = least_exponent(gamma, eps, mu_b.value, big_m, 1, cap)
    return AverkovParams(gamma, eps, mu_b.value, big_m, nexp, 1)


def global_sup_upper_bound(g: Polynomial, cfg: BoundConfig = BoundConfig()):
    """Re-export of :func:`qmcert.bounds.global_sup_upper_bound`."""
    return bd.global_sup_upper_bound(g, cfg)


# ------------------------------------------------------------ admissibility


@dataclass
class Admissibility:
    """Outcome of checking given ``gamma, eps, N`` against certified bounds.

    ``exponent`` is the full even power used on each base (``2N`` in the
    usual convention).
    """

    gamma_ok: bool
    eps_ok: bool
    power_ok: bool | None
    positivity: bool | None
    bounds: dict = field(default_factory=dict)

    @property
    def admissible(self) -> bool:
        checks = [self.gamma_ok, self.eps_ok]
        if self.power_ok is not None:
            checks.append(self.power_ok)
        return all(checks)


def check_admissible(G: Sequence[Polynomial], f: Polynomial, B, gamma, eps, exponent: int,
                     cfg: BoundConfig = BoundConfig(), check_positivity: bool = True) -> Admissibility:
    """Test given parameters against certified bounds.

    The tests are ``gamma > max g_i / 2`` and ``eps < |sup_T min g_i| / 2``.
    The power tests are ``s c(N) < mu`` and ``C(N) > M + mu``; they use a
    certified lower bound for ``mu`` and an upper bound for ``M``, and are
    skipped when ``f`` is unbounded below on ``B``.  Optionally the
    resulting ``f - h > 0`` is also proven directly.
    """
    G = list(G)
    gamma, eps = Q(gamma), Q(eps)
    if exponent % 2:
        raise ValueError("exponent must be even")
    half = exponent // 2
    region = _region(B, f.nvars)
    info: dict = {}
    if region.compact:
        g_max = max(bd.region_sup(gi, region, cfg).value for gi in G)
        t_sup = bd.region_sup(G, region, cfg, extra_nonpos=[f])
        t_val = None if t_sup == EMPTY else t_sup.value
        mu_b = bd.region_inf(f, region, cfg, extra_nonpos=[-(gi + 2 * eps) for gi in G])
        mu = None if mu_b == EMPTY else mu_b.value
        big_m = -bd.region_inf(f, region, cfg).value
    else:
        if len(G) != 1:
            raise ValueError("the unbounded case takes a single generator")
        sup_g = bd.global_sup_upper_bound(G[0], cfg)
        g_max = None if sup_g == "unknown" else sup_g.value
        t_val = sup_over_sublevel(G[0], f, cfg)
        lb = bd.global_min_lower_bound(f, cfg)
        big_m = None if lb == UNKNOWN else -lb.value
        mu = None
        tail = bd.enclosure_tail(G[0] + 2 * eps, cfg)
        if tail is not None:
            mb = bd.constrained_inf(f, [-(G[0] + 2 * eps)], tail.box, cfg)
            mu = None if mb == EMPTY else mb.value
    info.update(g_max=g_max, sup_T_min_g=t_val, mu=mu, big_m=big_m)
    gamma_ok = g_max is not None and 2 * gamma > g_max
    eps_ok = eps > 0 and (t_val is None or (t_val < 0 and 2 * eps < -t_val))
    power_ok = None
    if big_m is not None:
        power_ok = (mu is not None and mu > 0
                    and len(G) * c_small(gamma, eps, half) < mu
                    and c_big(gamma, eps, half) > big_m + mu)
        if mu is not None and mu > 0:
            info["least_N"] = least_exponent(gamma, eps, mu, big_m, len(G))
    positivity = None
    if check_positivity:
        bases = [_base(gi, gamma, eps) for gi in G]
        positivity = bd.prove_positive(residual(f, G, bases, exponent), region, cfg)
    return Admissibility(gamma_ok, eps_ok, power_ok, positivity, info)
