"""Rigorous one-sided bounds on polynomial extrema.

Everything here is exact: boxes have rational endpoints and polynomial ranges
are enclosed with rational interval arithmetic (the centred Taylor form
intersected with the naive term-by-term enclosure).  Branch-and-bound
bisects the widest side (lowest index on ties) and keeps a best-first queue,
so results are deterministic.

Unbounded regions are handled by a compactification.  Suppose every used
variable ``x_i`` has a pure power ``x_i^{d_i}`` in ``h``, with ``d_i`` even
and a positive coefficient.  Put ``L = lcm(d_i)`` and ``w_i = L / d_i``.
Substituting ``x_i = u_i / s^{w_i}`` and multiplying by ``s^L`` gives a
polynomial ``P(u, s)``.  The region outside the weighted box
``|x_i| <= R^{w_i}`` corresponds to ``u`` on the surface of the unit cube
and ``0 < s < 1/R``.  Showing ``P > 0`` there with ordinary
branch-and-bound therefore proves ``h > 0`` outside a finite box.  With
all ``d_i`` equal this is the usual "definite top form" argument.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from gmpy2 import mpq

from .poly import Polynomial, norm_sq
from .rational import Q

# --------------------------------------------------------------------------
# intervals and boxes


@dataclass(frozen=True)
class Interval:
    lo: mpq
    hi: mpq

    def __post_init__(self):
        object.__setattr__(self, "lo", Q(self.lo))
        object.__setattr__(self, "hi", Q(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> mpq:
        return self.hi - self.lo

    @property
    def mid(self) -> mpq:
        return (self.lo + self.hi) / 2

    def contains(self, v) -> bool:
        return self.lo <= v <= self.hi

    def __iter__(self):
        return iter((self.lo, self.hi))


class Box(tuple):
    """A product of closed rational intervals (a tuple of :class:`Interval`)."""

    def __new__(cls, sides: Iterable):
        items = []
        for s in sides:
            if not isinstance(s, Interval):
                lo, hi = s
                s = Interval(lo, hi)
            items.append(s)
        return super().__new__(cls, items)

    @classmethod
    def cube(cls, radius, n: int) -> "Box":
        r = Q(radius)
        return cls([(-r, r)] * n)

    @classmethod
    def from_radii(cls, radii: Sequence) -> "Box":
        return cls([(-Q(r), Q(r)) for r in radii])

    @property
    def dim(self) -> int:
        return len(self)

    def center(self) -> tuple:
        return tuple(s.mid for s in self)

    def widest(self) -> int:
        best, best_w = 0, None
        for i, s in enumerate(self):
            if best_w is None or s.width > best_w:
                best, best_w = i, s.width
        return best

    def split(self, i: int | None = None) -> tuple["Box", "Box"]:
        if i is None:
            i = self.widest()
        s = self[i]
        m = s.mid
        left = list(self)
        right = list(self)
        left[i] = Interval(s.lo, m)
        right[i] = Interval(m, s.hi)
        return Box(left), Box(right)

    def contains(self, point) -> bool:
        return all(s.lo <= Q(v) <= s.hi for s, v in zip(self, point))

    def max_width(self) -> mpq:
        return max(s.width for s in self) if self else mpq(0)


@dataclass(frozen=True)
class BoundConfig:
    """Branch-and-bound knobs.

    ``tolerance`` is the target gap between the certified bound and the best
    sampled value, ``max_subdivisions`` caps processed boxes per query and
    ``expansion_budget`` caps radius doublings in the tail proofs.
    """

    tolerance: mpq = mpq(1, 1000)
    max_subdivisions: int = 4000
    expansion_budget: int = 40

    def __post_init__(self):
        object.__setattr__(self, "tolerance", Q(self.tolerance))
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_subdivisions <= 0 or self.expansion_budget <= 0:
            raise ValueError("budgets must be positive")

    def tightened(self) -> "BoundConfig":
        """The retry configuration: tolerance / 4 and twice the budget."""
        return BoundConfig(self.tolerance / 4, self.max_subdivisions * 2, self.expansion_budget)


@dataclass(frozen=True)
class Bound:
    """A certified one-sided bound.

    ``value`` is sound.  ``attained`` is the best value actually reached at
    a sampled point (the other side of the gap), ``witness`` that point.
    ``loose`` means the budget ran out before the tolerance was met, and
    ``heuristic`` means the value is *not* certified (fallback search box).
    """

    value: mpq
    attained: mpq | None = None
    witness: tuple | None = None
    loose: bool = False
    heuristic: bool = False
    boxes: int = 0

    def __float__(self):
        return float(self.value)


EMPTY = "empty"
UNKNOWN = "unbounded-or-unknown"

# --------------------------------------------------------------------------
# compiled polynomial with interval enclosures

_ROUND_BITS = 192
_TAYLOR_BUDGET = 6000


class Enclosure:
    """A polynomial prepared for repeated interval evaluation.

    Coefficients with very long numerators/denominators are replaced by
    short dyadic approximations; the rounding error is carried as an extra
    nonnegative weight per monomial and added to the enclosure, so the
    result stays sound while arithmetic stays cheap.
    """

    def __init__(self, p: Polynomial):
        self.poly = p
        self.n = p.nvars
        terms = []
        errors = []
        for mono, c in p.terms.items():
            bits = c.numerator.bit_length() + c.denominator.bit_length()
            if bits > 2 * _ROUND_BITS:
                k = _ROUND_BITS - c.numerator.bit_length() + c.denominator.bit_length()
                scale = mpq(2) ** k if k >= 0 else mpq(1, 2 ** (-k))
                approx = mpq(int(c * scale)) / scale  # truncation toward zero
                err = abs(c - approx)
                terms.append((mono, approx))
                if err:
                    errors.append((mono, err))
            else:
                terms.append((mono, c))
        self.terms = terms
        self.errors = errors
        self.univariate = self.n == 1
        if self.univariate:
            deg = max((m[0] for m, _ in terms), default=0)
            dense = [mpq(0)] * (deg + 1)
            for (e,), c in terms:
                dense[e] = c
            self.dense = dense
            cost = deg * deg // 2
        else:
            cost = sum(math.prod(e + 1 for e in m) for m, _ in terms)
        # Full Taylor expansion at the centre is the sharpest form but its
        # cost grows like the product of the exponents; past a threshold the
        # second-order form (exact gradient, interval Hessian) is used.
        self.full_taylor = cost <= _TAYLOR_BUDGET
        self._grad = None
        self._hess = None

    # exact point value (using the original coefficients)
    def value(self, point) -> mpq:
        return self.poly(list(point))

    def interval(self, box: Box) -> tuple[mpq, mpq]:
        if self.full_taylor:
            lo1, hi1 = self._taylor(box)
        else:
            lo1, hi1 = self._order2(box)
        lo2, hi2 = self._naive(box)
        lo, hi = max(lo1, lo2), min(hi1, hi2)
        if self.errors:
            e = self._error_bound(box)
            lo, hi = lo - e, hi + e
        return lo, hi

    def _error_bound(self, box: Box) -> mpq:
        mags = [max(abs(s.lo), abs(s.hi)) for s in box]
        total = mpq(0)
        for mono, err in self.errors:
            v = err
            for m, e in zip(mags, mono):
                if e:
                    v *= m ** e
            total += v
        return total

    def _order2(self, box: Box) -> tuple[mpq, mpq]:
        # p(c + t) in p(c) + grad p(c) . t + t^T H(box) t / 2
        if self._grad is None:
            p = self.poly
            self._grad = [p.derivative(i) for i in range(self.n)]
            self._hess = {(i, j): Enclosure(self._grad[i].derivative(j))
                          for i in range(self.n) for j in range(i, self.n)}
        center = [s.mid for s in box]
        radius = [s.width / 2 for s in box]
        v = self.poly(center)
        lo = hi = v
        for i, gi in enumerate(self._grad):
            if radius[i]:
                a = abs(gi(center)) * radius[i]
                lo -= a
                hi += a
        for (i, j), h in self._hess.items():
            if not radius[i] or not radius[j] or h.poly.is_zero():
                continue
            hlo, hhi = h._naive_with_error(box)
            if i == j:
                r2 = radius[i] * radius[i] / 2
                if hlo < 0:
                    lo += hlo * r2
                if hhi > 0:
                    hi += hhi * r2
            else:
                a = max(abs(hlo), abs(hhi)) * radius[i] * radius[j]
                lo -= a
                hi += a
        return lo, hi

    def _naive_with_error(self, box: Box) -> tuple[mpq, mpq]:
        lo, hi = self._naive(box)
        if self.errors:
            e = self._error_bound(box)
            lo, hi = lo - e, hi + e
        return lo, hi

    def _naive(self, box: Box) -> tuple[mpq, mpq]:
        pow_cache: dict = {}
        lo_total = mpq(0)
        hi_total = mpq(0)
        for mono, c in self.terms:
            lo, hi = c, c
            for i, e in enumerate(mono):
                if not e:
                    continue
                key = (i, e)
                iv = pow_cache.get(key)
                if iv is None:
                    iv = _pow_interval(box[i].lo, box[i].hi, e)
                    pow_cache[key] = iv
                a, b = iv
                cands = (lo * a, lo * b, hi * a, hi * b)
                lo, hi = min(cands), max(cands)
            lo_total += lo
            hi_total += hi
        return lo_total, hi_total

    def _taylor(self, box: Box) -> tuple[mpq, mpq]:
        center = [s.mid for s in box]
        radius = [s.width / 2 for s in box]
        if self.univariate:
            coeffs = _taylor_shift(self.dense, center[0])
            r = radius[0]
            lo = hi = coeffs[0]
            rk = mpq(1)
            for k in range(1, len(coeffs)):
                rk *= r
                a = coeffs[k]
                if not a:
                    continue
                v = a * rk
                if k % 2 == 0:
                    if v > 0:
                        hi += v
                    else:
                        lo += v
                else:
                    v = abs(v)
                    lo -= v
                    hi += v
            return lo, hi
        coeffs = _taylor_multi(self.terms, center, self.n)
        rpow = [dict() for _ in range(self.n)]
        lo = hi = mpq(0)
        for k, a in coeffs.items():
            if not a:
                continue
            v = a
            even = True
            for i, e in enumerate(k):
                if e:
                    if e & 1:
                        even = False
                    cache = rpow[i]
                    pw = cache.get(e)
                    if pw is None:
                        pw = radius[i] ** e
                        cache[e] = pw
                    v *= pw
            if not any(k):
                lo += v
                hi += v
            elif even:
                if v > 0:
                    hi += v
                else:
                    lo += v
            else:
                v = abs(v)
                lo -= v
                hi += v
        return lo, hi


def _pow_interval(lo: mpq, hi: mpq, e: int) -> tuple[mpq, mpq]:
    a, b = lo ** e, hi ** e
    if e % 2 == 0:
        if lo <= 0 <= hi:
            return mpq(0), max(a, b)
        return min(a, b), max(a, b)
    return a, b


def _taylor_shift(coeffs: list, c: mpq) -> list:
    """Coefficients of ``p(c + t)`` from the ascending list of ``p``."""
    a = list(coeffs)
    if c == 0:
        return a
    d = len(a) - 1
    for i in range(d):
        for j in range(d - 1, i - 1, -1):
            a[j] += c * a[j + 1]
    return a


def _taylor_multi(terms, center, n) -> dict:
    expansions: list[dict] = [dict() for _ in range(n)]
    out: dict = {}
    for mono, c in terms:
        partial = [((), c)]
        for i, e in enumerate(mono):
            exp = expansions[i].get(e)
            if exp is None:
                m = center[i]
                if e == 0:
                    exp = [(0, mpq(1))]
                elif m == 0:
                    exp = [(e, mpq(1))]
                else:
                    exp = [(k, math.comb(e, k) * m ** (e - k)) for k in range(e + 1)]
                expansions[i][e] = exp
            if len(exp) == 1:
                k, b = exp[0]
                partial = [(ks + (k,), v * b) for ks, v in partial] if b != 1 else [
                    (ks + (k,), v) for ks, v in partial]
            else:
                partial = [(ks + (k,), v * b) for ks, v in partial for k, b in exp]
        for ks, v in partial:
            prev = out.get(ks)
            out[ks] = v if prev is None else prev + v
    return out


def interval_eval(p: Polynomial, b: Box) -> Interval:
    """An interval containing ``{p(x) : x in b}``."""
    b = b if isinstance(b, Box) else Box(b)
    if b.dim != p.nvars:
        raise ValueError(f"box has dimension {b.dim}, polynomial has {p.nvars} variables")
    lo, hi = Enclosure(p).interval(b)
    return Interval(lo, hi)


def _imul(a, b):
    cands = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return min(cands), max(cands)


def _ipow(a, e: int):
    if e == 0:
        return mpq(1), mpq(1)
    if e == 1:
        return a
    return _pow_interval(a[0], a[1], e)


class ProductSum:
    """``sum_t c_t * prod_j q_tj^e_tj`` kept in factored form.

    Expanding something like ``f - sum_i b_i^(2N) g_i`` produces huge
    alternating coefficients that ruin interval enclosures.  Evaluating the
    factors first and combining their ranges avoids that.  The enclosure is
    the intersection of that direct form with a mean-value form, whose
    gradient range is built from the factors in the same way.
    """

    def __init__(self, terms, nvars: int):
        self.n = nvars
        self.terms = []
        index: dict = {}
        self.factors: list[Polynomial] = []
        for c, fs in terms:
            c = Q(c)
            if c == 0:
                continue
            packed = []
            for q, e in fs:
                if q.nvars != nvars:
                    raise ValueError("factor has the wrong number of variables")
                if e == 0:
                    continue
                if q.is_constant():
                    c *= q.constant_term() ** e
                    continue
                key = q
                if key not in index:
                    index[key] = len(self.factors)
                    self.factors.append(q)
                packed.append((index[key], e))
            if c != 0:
                self.terms.append((c, packed))
        self._enc = [Enclosure(q) for q in self.factors]
        self._denc = None

    @property
    def nvars(self) -> int:
        return self.n

    def _rebuild(self, fn, nvars: int, extra=()) -> "ProductSum":
        terms = [(c, [(fn(self.factors[j]), e) for j, e in packed]) for c, packed in self.terms]
        return ProductSum(terms + list(extra), nvars)

    def restrict_variables(self, keep) -> "ProductSum":
        keep = list(keep)
        return self._rebuild(lambda q: q.restrict_variables(keep), len(keep))

    @classmethod
    def from_polynomial(cls, p: Polynomial) -> "ProductSum":
        return cls([(1, [(p, 1)])], p.nvars)

    def expand(self) -> Polynomial:
        total = Polynomial.zero(self.n)
        for c, packed in self.terms:
            prod = Polynomial.constant(c, self.n)
            for j, e in packed:
                prod = prod * self.factors[j] ** e
            total = total + prod
        return total

    def __neg__(self):
        return ProductSum([(-c, [(self.factors[j], e) for j, e in packed])
                           for c, packed in self.terms], self.n)

    def shifted(self, k) -> "ProductSum":
        """``self + k`` for a rational constant ``k``."""
        return self._rebuild(lambda q: q, self.n, [(Q(k), [])])

    def used_variables(self) -> list[int]:
        used = set()
        for q in self.factors:
            used.update(q.used_variables())
        return sorted(used)

    def value(self, point) -> mpq:
        pt = list(point)
        vals = [q(pt) for q in self.factors]
        total = mpq(0)
        for c, packed in self.terms:
            v = c
            for j, e in packed:
                v *= vals[j] ** e
            total += v
        return total

    def interval(self, box: Box) -> tuple[mpq, mpq]:
        fint = [enc.interval(box) for enc in self._enc]
        lo = hi = mpq(0)
        for c, packed in self.terms:
            iv = (c, c)
            for j, e in packed:
                iv = _imul(iv, _ipow(fint[j], e))
            lo += iv[0]
            hi += iv[1]
        mv = self._mean_value(box, fint)
        if mv is not None:
            lo, hi = max(lo, mv[0]), min(hi, mv[1])
        return lo, hi

    def _mean_value(self, box: Box, fint):
        radius = [s.width / 2 for s in box]
        if not any(radius):
            return None
        if self._denc is None:
            self._denc = [[Enclosure(q.derivative(i)) for i in range(self.n)]
                          for q in self.factors]
        center = [s.mid for s in box]
        v = self.value(center)
        lo = hi = v
        for i in range(self.n):
            if not radius[i]:
                continue
            dlo = dhi = mpq(0)
            for c, packed in self.terms:
                for pos, (j, e) in enumerate(packed):
                    dq = self._denc[j][i]
                    if dq.poly.is_zero():
                        continue
                    part = _imul((c * e, c * e), _ipow(fint[j], e - 1))
                    part = _imul(part, dq._naive_with_error(box) if not dq.full_taylor
                                 else dq.interval(box))
                    for pos2, (j2, e2) in enumerate(packed):
                        if pos2 != pos:
                            part = _imul(part, _ipow(fint[j2], e2))
                    dlo += part[0]
                    dhi += part[1]
            m = max(abs(dlo), abs(dhi)) * radius[i]
            lo -= m
            hi += m
        return lo, hi


def _objective(p):
    """Something with ``interval(box)`` and ``value(point)`` for ``p``."""
    if isinstance(p, (Enclosure, ProductSum)):
        return p
    return Enclosure(p)


def _expanded(p) -> Polynomial:
    return p.expand() if isinstance(p, ProductSum) else p


# --------------------------------------------------------------------------
# the branch-and-bound core


@dataclass
class _SupResult:
    upper: mpq | None          # None: feasible set proven empty
    attained: mpq | None       # best feasible sampled value
    witness: tuple | None
    loose: bool
    boxes: int
    stopped_on_target: bool = False


def _maximize(objectives: Sequence[Enclosure], constraints: Sequence[Enclosure], box: Box,
              cfg: BoundConfig, target: mpq | None = None,
              budget: int | None = None) -> _SupResult:
    """Upper bound on ``sup min_i p_i`` over ``{x in box : q_j(x) <= 0}``.

    With ``target`` given, stops as soon as the bound drops below it or a
    sampled feasible value reaches it.
    """
    budget = cfg.max_subdivisions if budget is None else budget
    tol = cfg.tolerance
    counter = itertools.count()
    best_val: mpq | None = None
    best_pt = None

    def sample(b: Box, c=None):
        nonlocal best_val, best_pt
        c = b.center() if c is None else c
        for q in constraints:
            if q.value(c) > 0:
                return
        v = min(p.value(c) for p in objectives)
        if best_val is None or v > best_val:
            best_val, best_pt = v, c

    def upper_of(b: Box):
        for q in constraints:
            lo, _ = q.interval(b)
            if lo > 0:
                return None
        return min(p.interval(b)[1] for p in objectives)

    heap: list = []
    leaves: list[mpq] = []   # boxes too thin to split further
    ub0 = upper_of(box)
    if ub0 is not None:
        sample(box)
        if box.dim <= 4:
            for corner in itertools.product(*[(s.lo, s.hi) for s in box]):
                sample(box, corner)
        heapq.heappush(heap, (-ub0, next(counter), box))
    processed = 0
    while heap:
        top = -heap[0][0]
        cur_upper = max([top] + leaves)
        if target is not None:
            if cur_upper < target or (best_val is not None and best_val >= target):
                return _SupResult(cur_upper, best_val, best_pt, False, processed, True)
        if best_val is not None and cur_upper - best_val <= tol:
            return _SupResult(max(cur_upper, best_val), best_val, best_pt, False, processed)
        if processed >= budget:
            return _SupResult(max(cur_upper, best_val) if best_val is not None else cur_upper,
                              best_val, best_pt, True, processed)
        _, _, b = heapq.heappop(heap)
        processed += 1
        if b.max_width() == 0 or b.max_width() < mpq(1, 2 ** 80):
            leaves.append(top)
            continue
        for child in b.split():
            ub = upper_of(child)
            if ub is None:
                continue
            sample(child)
            if best_val is not None and ub <= best_val:
                continue
            heapq.heappush(heap, (-ub, next(counter), child))
    if leaves:
        up = max(leaves)
        if best_val is not None:
            up = max(up, best_val)
        return _SupResult(up, best_val, best_pt, False, processed)
    if best_val is None:
        return _SupResult(None, None, None, False, processed)
    return _SupResult(best_val, best_val, best_pt, False, processed)


def _as_box(b) -> Box:
    return b if isinstance(b, Box) else Box(b)


def _check_dim(p: Polynomial, b: Box):
    if p.nvars != b.dim:
        raise ValueError(f"box has dimension {b.dim}, polynomial has {p.nvars} variables")


def max_upper_bound(p: Polynomial, b, cfg: BoundConfig = BoundConfig()) -> Bound:
    """Certified upper bound on ``max p`` over the box ``b``."""
    b = _as_box(b)
    _check_dim(p, b)
    r = _maximize([_objective(p)], [], b, cfg)
    return Bound(r.upper, r.attained, r.witness, r.loose, boxes=r.boxes)


def min_lower_bound(p: Polynomial, b, cfg: BoundConfig = BoundConfig()) -> Bound:
    """Certified lower bound on ``min p`` over the box ``b``."""
    b = _as_box(b)
    _check_dim(p, b)
    r = _maximize([_objective(-p)], [], b, cfg)
    return Bound(-r.upper, -r.attained if r.attained is not None else None, r.witness,
                 r.loose, boxes=r.boxes)


def constrained_sup(p, nonpos: Sequence[Polynomial], b, cfg: BoundConfig = BoundConfig(),
                    target=None):
    """Upper bound on ``sup p`` over ``{x in b : q(x) <= 0 for q in nonpos}``.

    ``p`` may be a single polynomial or a list, read as the pointwise
    minimum of its members.  Returns ``"empty"`` when the slice is proven
    empty, otherwise a :class:`Bound`.
    """
    b = _as_box(b)
    objs = list(p) if isinstance(p, (list, tuple)) else [p]
    for q in list(objs) + list(nonpos):
        _check_dim(q, b)
    r = _maximize([_objective(q) for q in objs], [_objective(q) for q in nonpos], b, cfg,
                  target=None if target is None else Q(target))
    if r.upper is None:
        return EMPTY
    return Bound(r.upper, r.attained, r.witness, r.loose, boxes=r.boxes)


def constrained_inf(p, nonpos: Sequence[Polynomial], b, cfg: BoundConfig = BoundConfig(),
                    target=None):
    """Lower bound on ``inf p`` over the slice; ``"empty"`` if proven empty."""
    r = constrained_sup(-p, nonpos, b, cfg, None if target is None else -Q(target))
    if r == EMPTY:
        return EMPTY
    return Bound(-r.value, -r.attained if r.attained is not None else None, r.witness, r.loose,
                 boxes=r.boxes)


# --------------------------------------------------------------------------
# tail proofs on unbounded regions


@dataclass(frozen=True)
class Tail:
    """Outcome of a successful tail proof: ``h > 0`` outside ``box``."""

    radii: tuple          # per-variable half-widths (for all n variables)
    used: tuple           # indices of variables occurring in h
    weights: tuple        # weights of the used variables
    scale: mpq            # the R with radii[i] = R ** w_i

    @property
    def box(self) -> Box:
        return Box.from_radii(self.radii)

    @property
    def linf_radius(self) -> mpq:
        return max(self.radii) if self.radii else mpq(0)


def _weights(h: Polynomial, used: list[int]):
    degs = []
    for i in used:
        pure = [(m[i], c) for m, c in h.terms.items()
                if m[i] and all(e == 0 for j, e in enumerate(m) if j != i)]
        if not pure:
            return None
        d, c = max(pure)
        if d % 2 or c <= 0:
            return None
        degs.append(d)
    big_l = math.lcm(*degs)
    w = [big_l // d for d in degs]
    for m in h.terms:
        if sum(wi * m[i] for wi, i in zip(w, used)) > big_l:
            return None
    return big_l, w


def _compactify(h: Polynomial, used: list[int], big_l: int, w: list[int]) -> Polynomial:
    """``P(u, s) = s^L h(u / s^w)`` over the used variables plus ``s`` (last)."""
    k = len(used)
    terms = {}
    for m, c in h.terms.items():
        wd = sum(wi * m[i] for wi, i in zip(w, used))
        terms[tuple(m[i] for i in used) + (big_l - wd,)] = c
    return Polynomial(terms, k + 1)


def _face_boxes(k: int, s_max: mpq):
    one = mpq(1)
    for i in range(k):
        for sign in (-one, one):
            sides = [(-one, one)] * k + [(mpq(0), s_max)]
            sides[i] = (sign, sign)
            yield Box(sides)


def _grid_ok(enc: Enclosure, box: Box, pts_per_side: int = 5) -> bool:
    axes = []
    for s in box:
        if s.width == 0:
            axes.append([s.lo])
        else:
            axes.append([s.lo + s.width * j / (pts_per_side - 1) for j in range(pts_per_side)])
    return all(enc.value(pt) > 0 for pt in itertools.product(*axes))


def _compactify_structured(h: ProductSum, used: list[int], big_l: int, w: list[int]):
    """Factor-wise version of :func:`_compactify`, or ``None`` if it does not fit.

    Each factor is compactified with its own weighted degree and every
    product picks up the missing power of ``s``.  That needs no product to
    exceed ``big_l``, which fails only when leading parts cancel.
    """
    k = len(used)
    wdeg = []
    comp = []
    for q in h.factors:
        d = max(sum(wi * m[i] for wi, i in zip(w, used)) for m in q.terms)
        wdeg.append(d)
        comp.append(_compactify(q, used, d, w))
    s_var = Polynomial.variable(k, k + 1)
    terms = []
    for c, packed in h.terms:
        own = sum(wdeg[j] * e for j, e in packed)
        if own > big_l:
            return None
        terms.append((c, [(comp[j], e) for j, e in packed] + [(s_var, big_l - own)]))
    return ProductSum(terms, k + 1)


def tail_proof(h, cfg: BoundConfig = BoundConfig(), start=1) -> Tail | None:
    """Find a box outside which ``h > 0`` is proven, or ``None``.

    Variables that do not occur in ``h`` get radius 0 (they are
    irrelevant).  Doubles the scale ``R`` from ``start`` up to
    ``2**expansion_budget``.
    """
    flat = _expanded(h)
    used = h.used_variables()
    if not used:
        if flat.constant_term() > 0:
            return Tail(tuple(mpq(0) for _ in range(h.nvars)), (), (), mpq(0))
        return None
    wts = _weights(flat, used)
    if wts is None:
        return None
    big_l, w = wts
    enc = None
    if isinstance(h, ProductSum):
        enc = _compactify_structured(h, used, big_l, w)
    if enc is None:
        enc = Enclosure(_compactify(flat, used, big_l, w))
    neg = -enc if isinstance(enc, ProductSum) else Enclosure(-enc.poly)
    k = len(used)
    # The weighted leading part must be positive on the cube surface.
    for face in _face_boxes(k, mpq(0)):
        if not _grid_ok(enc, face):
            return None
    scale = Q(start)
    per_face_budget = max(200, cfg.max_subdivisions // (2 * k))
    for _ in range(cfg.expansion_budget):
        s_max = 1 / scale
        faces = list(_face_boxes(k, s_max))
        if all(_grid_ok(enc, f, 3) for f in faces):
            proved = True
            for f in faces:
                r = _maximize([neg], [], f, cfg, target=mpq(0), budget=per_face_budget)
                if not (r.upper is not None and r.upper < 0):
                    proved = False
                    break
            if proved:
                radii = [mpq(0)] * h.nvars
                for wi, i in zip(w, used):
                    radii[i] = scale ** wi
                return Tail(tuple(radii), tuple(used), tuple(w), scale)
        scale *= 2
    return None


def enclosure_radius(g: Polynomial, cfg: BoundConfig = BoundConfig()):
    """``R`` with ``g < 0`` proven wherever ``max|x_i| > R``; else ``"unknown"``."""
    t = enclosure_tail(g, cfg)
    return "unknown" if t is None else t.linf_radius


def enclosure_tail(g: Polynomial, cfg: BoundConfig = BoundConfig()) -> Tail | None:
    """Like :func:`enclosure_radius` but returns the per-variable box."""
    if len(g.used_variables()) < g.nvars:
        return None  # some coordinate is unconstrained
    return tail_proof(-g, cfg)


def global_min_lower_bound(f, cfg: BoundConfig = BoundConfig(), target=None):
    """Certified lower bound on ``min f`` over all of R^n, or ``"unbounded-or-unknown"``.

    With ``target`` the inner search stops once the bound is known to be
    above (or the sampled minimum below) ``target``.
    """
    origin = [mpq(0)] * f.nvars
    if isinstance(f, ProductSum):
        if not f.used_variables():
            c = f.value(origin)
            return Bound(c, c, tuple(origin))
        level = f.value(origin)
        t = tail_proof(f.shifted(-level), cfg)
    else:
        if f.is_constant():
            c = f.constant_term()
            return Bound(c, c, tuple(origin))
        level = f(origin)
        t = tail_proof(f - level, cfg)
    if t is None:
        return UNKNOWN
    used = list(t.used)
    sub = f.restrict_variables(used)
    box = Box.from_radii([t.radii[i] for i in used])
    r = _maximize([_objective(-sub)], [], box, cfg, target=None if target is None else -Q(target))
    value = -r.upper
    if value > level:
        value = level  # f(0) = level is attained, so the min is at most this
    wit = None
    if r.witness is not None:
        full = list(origin)
        for i, v in zip(used, r.witness):
            full[i] = v
        wit = tuple(full)
    attained = -r.attained if r.attained is not None else level
    return Bound(value, min(attained, level), wit, r.loose, boxes=r.boxes)


def has_global_lower_bound(f, cfg: BoundConfig = BoundConfig()) -> bool:
    """True when a tail proof shows ``f`` is bounded below on R^n.

    Much cheaper than :func:`global_min_lower_bound`: no search over the
    inner box is needed.
    """
    origin = [mpq(0)] * f.nvars
    if isinstance(f, ProductSum):
        if not f.used_variables():
            return True
        return tail_proof(f.shifted(-f.value(origin)), cfg) is not None
    if f.is_constant():
        return True
    return tail_proof(f - f(origin), cfg) is not None


def global_sup_upper_bound(g: Polynomial, cfg: BoundConfig = BoundConfig()):
    """Certified upper bound on ``sup g`` over R^n, or ``"unknown"``."""
    r = global_min_lower_bound(-g, cfg)
    if r == UNKNOWN:
        return "unknown"
    return Bound(-r.value, -r.attained if r.attained is not None else None, r.witness, r.loose,
                 boxes=r.boxes)


def fallback_min(f: Polynomial, cfg: BoundConfig = BoundConfig(), radius=2 ** 10) -> Bound:
    """Minimum over the box ``[-radius, radius]^n`` flagged as heuristic.

    Only for callers whose result is re-verified downstream.
    """
    b = min_lower_bound(f, Box.cube(radius, f.nvars), cfg)
    return Bound(b.value, b.attained, b.witness, b.loose, heuristic=True, boxes=b.boxes)


# --------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region:
    """A compact region ``{x in box : c(x) >= 0 for c in constraints}`` or all of R^n.

    ``Region.ball(R, n)`` and ``Region.semialgebraic(g, box)`` are the
    constrained cases; ``Region.all_space(n)`` has no box.
    """

    kind: str                       # "box", "ball", "slice", "all"
    n: int
    box: Box | None = None
    constraints: tuple = ()         # polynomials required >= 0
    radius: mpq | None = None

    @classmethod
    def from_box(cls, box) -> "Region":
        box = _as_box(box)
        return cls("box", box.dim, box)

    @classmethod
    def ball(cls, radius, n: int) -> "Region":
        r = Q(radius)
        if r <= 0:
            raise ValueError("ball radius must be positive")
        return cls("ball", n, Box.cube(r, n), (r * r - norm_sq(n),), r)

    @classmethod
    def semialgebraic(cls, g: Polynomial, box) -> "Region":
        box = _as_box(box)
        return cls("slice", g.nvars, box, (g,))

    @classmethod
    def all_space(cls, n: int) -> "Region":
        return cls("all", n)

    @property
    def compact(self) -> bool:
        return self.kind != "all"

    @property
    def nonpos(self) -> list[Polynomial]:
        """The constraints in ``q <= 0`` form."""
        return [-c for c in self.constraints]


def region_sup(p, region: Region, cfg: BoundConfig = BoundConfig(), extra_nonpos=(), target=None):
    """Upper bound on ``sup p`` (or of a min-list) over a compact region slice."""
    if not region.compact:
        raise ValueError("region must be compact")
    return constrained_sup(p, region.nonpos + list(extra_nonpos), region.box, cfg, target)


def region_inf(p: Polynomial, region: Region, cfg: BoundConfig = BoundConfig(), extra_nonpos=(),
               target=None):
    if not region.compact:
        raise ValueError("region must be compact")
    return constrained_inf(p, region.nonpos + list(extra_nonpos), region.box, cfg, target)


def prove_positive(p, region, cfg: BoundConfig = BoundConfig()) -> bool:
    """True only when ``p > 0`` is certified on the region.

    ``p`` is a polynomial or a :class:`ProductSum`.  ``region`` is a
    :class:`Region`, a :class:`Box`, ``("ball", R)`` or ``"all-space"``.
    """
    region = _coerce_region(region, p.nvars)
    if region.kind == "all":
        r = global_min_lower_bound(p, cfg, target=mpq(0))
        if r == UNKNOWN:
            return False
        if r.value > 0:
            return True
        if r.attained is not None and r.attained <= 0:
            return False
        return False
    r = region_inf(p, region, cfg, target=mpq(0))
    if r == EMPTY:
        return True
    return r.value > 0


def _coerce_region(region, n: int) -> Region:
    if isinstance(region, Region):
        return region
    if isinstance(region, str):
        if region in ("all", "all-space"):
            return Region.all_space(n)
        raise ValueError(f"unknown region {region!r}")
    if isinstance(region, tuple) and len(region) == 2 and region[0] == "ball":
        return Region.ball(region[1], n)
    return Region.from_box(region)
