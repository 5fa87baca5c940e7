"""Sum-of-squares decompositions that verify by exact expansion.

Two routes produce decompositions:

* univariate polynomials: approximate complex roots of a slightly
  perturbed ``f`` give ``f ~ lc (s1^2 + s2^2)``; the exact remainder plus
  the perturbation is then absorbed term by term into squares of binomials.
  This works for any strictly positive univariate input once the root
  precision is high enough, regardless of the degree.
* everything else: a Gram matrix is found numerically by an SDP solve,
  rounded to dyadic rationals, projected exactly back onto the coefficient
  constraints and factored by an exact LDL^T.  When the numerical Gram
  matrix is singular the search is repeated on the face spanned by its
  (rationalized) range.

Only decompositions that pass :func:`verify_sos` are returned.  ``"not-sos"``
comes with an exact witness (a point where ``f < 0``, odd degree, or a
diagonal Gram entry forced negative); everything else that fails is
``"inconclusive"``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np
from gmpy2 import mpq

from .poly import Polynomial, monomials_up_to
from .rational import Q

log = logging.getLogger(__name__)

NOT_SOS = "not-sos"
INCONCLUSIVE = "inconclusive"


# --------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class SosDecomposition:
    """``sum w_i p_i^2`` with positive rational weights.

    ``gram`` optionally holds ``(basis, matrix)`` with ``f = b^T Q b``.
    """

    squares: tuple = ()
    gram: tuple | None = None
    nvars: int | None = None

    def __post_init__(self):
        sq = tuple((Q(w), p) for w, p in self.squares if Q(w) != 0 and not p.is_zero())
        object.__setattr__(self, "squares", sq)
        if self.nvars is None and sq:
            object.__setattr__(self, "nvars", sq[0][1].nvars)

    @classmethod
    def zero(cls, nvars: int) -> "SosDecomposition":
        return cls((), None, nvars)

    @classmethod
    def square(cls, p: Polynomial, weight=1) -> "SosDecomposition":
        return cls(((Q(weight), p),), None, p.nvars)

    def is_zero(self) -> bool:
        return not self.squares

    def expand(self, nvars: int | None = None) -> Polynomial:
        n = self.nvars if nvars is None else nvars
        if n is None:
            raise ValueError("variable count unknown for an empty decomposition")
        total = Polynomial.zero(n)
        for w, p in self.squares:
            total = total + (p * p).scale(w)
        return total

    @property
    def degree(self):
        if not self.squares:
            return Polynomial.zero(1).degree
        return max(2 * p.degree for _, p in self.squares)

    def __add__(self, other: "SosDecomposition") -> "SosDecomposition":
        n = self.nvars if self.nvars is not None else other.nvars
        return SosDecomposition(self.squares + other.squares, None, n)

    def scale(self, c) -> "SosDecomposition":
        c = Q(c)
        if c < 0:
            raise ValueError("scaling an SOS by a negative number")
        return SosDecomposition(tuple((w * c, p) for w, p in self.squares), None, self.nvars)

    def __mul__(self, other: "SosDecomposition") -> "SosDecomposition":
        """Product of two SOS is SOS: pairwise products of the squares."""
        n = self.nvars if self.nvars is not None else other.nvars
        sq = tuple((w1 * w2, p1 * p2) for (w1, p1), (w2, p2)
                   in itertools.product(self.squares, other.squares))
        return SosDecomposition(sq, None, n)


@dataclass(frozen=True)
class GramBasis:
    monomials: tuple

    def __len__(self):
        return len(self.monomials)

    def __iter__(self):
        return iter(self.monomials)

    def __contains__(self, m):
        return tuple(m) in self.monomials


@dataclass
class PsdResult:
    """Exact LDL^T outcome.  ``Q[perm][:, perm] = L diag(pivots) L^T`` when PSD."""

    psd: bool
    pivots: list = field(default_factory=list)
    witness: list | None = None      # v with v^T Q v < 0 when not PSD
    lower: list | None = None
    perm: list | None = None

    def __bool__(self):
        return self.psd


@dataclass(frozen=True)
class SosConfig:
    denominators: tuple = (8, 16, 24, 40)
    newton: bool = True
    max_basis: int = 160
    samples: int = 400
    seed: int = 20240601
    root_precisions: tuple = (30, 60, 120, 240, 480)
    solver_eps: float = 1e-9
    reweight_rounds: int = 6
    low_rank_basis: int = 60

    def escalated(self) -> "SosConfig":
        return SosConfig(self.denominators + (56, 80), self.newton, self.max_basis * 2,
                         self.samples * 2, self.seed + 1,
                         self.root_precisions + (960,), self.solver_eps / 10,
                         self.reweight_rounds + 4, self.low_rank_basis)


# --------------------------------------------------------------------------
# verification and exact PSD test


def verify_sos(f: Polynomial, d: SosDecomposition) -> bool:
    """True iff every weight is positive and ``sum w p^2 - f`` expands to zero."""
    if not isinstance(d, SosDecomposition):
        return False
    for w, p in d.squares:
        if Q(w) <= 0 or p.nvars != f.nvars:
            return False
    return d.expand(f.nvars) == f


def psd_check_exact(m: Sequence[Sequence]) -> PsdResult:
    """Exact LDL^T with symmetric pivoting (largest remaining diagonal first)."""
    a = [[Q(x) for x in row] for row in m]
    n = len(a)
    for i in range(n):
        if len(a[i]) != n:
            raise ValueError("matrix is not square")
        for j in range(i):
            if a[i][j] != a[j][i]:
                raise ValueError("matrix is not symmetric")
    perm = list(range(n))
    lower = [[mpq(0)] * n for _ in range(n)]
    pivots: list = []
    work = [row[:] for row in a]
    for k in range(n):
        # choose the largest diagonal among the remaining block
        best = max(range(k, n), key=lambda i: (work[i][i], -i))
        if best != k:
            work[k], work[best] = work[best], work[k]
            for row in work:
                row[k], row[best] = row[best], row[k]
            perm[k], perm[best] = perm[best], perm[k]
            lower[k], lower[best] = lower[best], lower[k]
        d = work[k][k]
        if d < 0:
            return PsdResult(False, pivots, _lift_witness(lower, perm, k, {k: mpq(1)}, n))
        if d == 0:
            for i in range(k + 1, n):
                if work[i][k] != 0:
                    # (e_k + t e_i)^T S (e_k + t e_i) = 2 t S_ik + t^2 S_ii, negative
                    # for t = -sign(S_ik) * small; S_ii <= S_kk = 0 makes any |t| work
                    t = mpq(-1) if work[i][k] > 0 else mpq(1)
                    v = {k: mpq(1), i: t}
                    return PsdResult(False, pivots, _lift_witness(lower, perm, k, v, n))
            lower[k][k] = mpq(1)
            pivots.append(mpq(0))
            continue
        lower[k][k] = mpq(1)
        pivots.append(d)
        col = [work[i][k] / d for i in range(k + 1, n)]
        for idx, i in enumerate(range(k + 1, n)):
            lower[i][k] = col[idx]
            li = col[idx]
            if li == 0:
                continue
            wi = work[i]
            wk = work[k]
            for j in range(k + 1, i + 1):
                wi[j] -= li * wk[j]
                if j != i:
                    work[j][i] = wi[j]
    return PsdResult(True, pivots, None, lower, perm)


def _lift_witness(lower, perm, k, y: dict, n: int):
    """Vector ``x`` with ``x^T A x = y^T S y`` for the Schur complement ``S`` at step ``k``."""
    z = [mpq(0)] * n
    for i, v in y.items():
        z[i] = Q(v)
    # solve L^T x' = z for the first k unknowns (trailing block is identity)
    x = z[:]
    for i in range(k - 1, -1, -1):
        s = x[i]
        for j in range(i + 1, n):
            if lower[j][i] != 0:
                s -= lower[j][i] * x[j]
        x[i] = s
    out = [mpq(0)] * n
    for i in range(n):
        out[perm[i]] = x[i]
    return out


def _quad_form(m, v) -> mpq:
    n = len(v)
    return sum((Q(m[i][j]) * v[i] * v[j] for i in range(n) for j in range(n)), mpq(0))


# --------------------------------------------------------------------------
# Gram bases


def _half_box(f: Polynomial):
    n = f.nvars
    hi = [max(m[i] for m in f.terms) // 2 for i in range(n)]
    lo = [-(-min(m[i] for m in f.terms) // 2) for i in range(n)]
    dmax = f.degree // 2
    dmin = -(-min(sum(m) for m in f.terms) // 2)
    return lo, hi, dmin, dmax


def _combinatorial_basis(f: Polynomial) -> list[tuple]:
    """Degree and per-variable box filter followed by diagonal pruning.

    Exactly sound: a dropped monomial has a zero diagonal entry in every
    Gram matrix of ``f``.
    """
    lo, hi, dmin, dmax = _half_box(f)
    cands = [m for m in monomials_up_to(f.nvars, dmax)
             if sum(m) >= dmin and all(lo[i] <= m[i] <= hi[i] for i in range(f.nvars))]
    return _diagonal_prune(f, cands)


def _diagonal_prune(f: Polynomial, cands: list[tuple]) -> list[tuple]:
    support = set(f.terms)
    basis = list(cands)
    changed = True
    while changed:
        changed = False
        present = set(basis)
        keep = []
        for m in basis:
            dbl = tuple(2 * e for e in m)
            if dbl in support:
                keep.append(m)
                continue
            # is 2m a sum of two distinct basis monomials?
            ok = False
            for a in basis:
                if a == m:
                    continue
                b = tuple(x - y for x, y in zip(dbl, a))
                if min(b) >= 0 and b != m and b in present:
                    ok = True
                    break
            if ok:
                keep.append(m)
            else:
                changed = True
        basis = keep
    return basis


def _newton_filter(f: Polynomial, basis: list[tuple]) -> list[tuple]:
    """Keep ``m`` only when ``2m`` lies in the Newton polytope of ``f`` (LP test)."""
    from scipy.optimize import linprog

    pts = np.array(sorted(f.terms), dtype=float)
    k = len(pts)
    if k == 0:
        return []
    a_eq = np.vstack([pts.T, np.ones((1, k))])
    keep = []
    support = set(f.terms)
    for m in basis:
        dbl = tuple(2 * e for e in m)
        if dbl in support:
            keep.append(m)
            continue
        b_eq = np.array(list(dbl) + [1.0])
        res = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * k,
                      method="highs")
        if res.status != 2:      # anything but proven infeasible keeps the monomial
            keep.append(m)
    return keep


def gram_basis(f: Polynomial, newton: bool = True) -> GramBasis:
    """Candidate monomials for a Gram matrix of ``f``."""
    if f.is_zero():
        return GramBasis(())
    if f.degree % 2:
        raise ValueError("odd-degree polynomial has no Gram basis")
    basis = _combinatorial_basis(f)
    if newton and f.nvars > 1:
        basis = _diagonal_prune(f, _newton_filter(f, basis))
    return GramBasis(tuple(basis))


def _pair_groups(basis: Sequence[tuple]) -> dict:
    groups: dict = {}
    for i, a in enumerate(basis):
        for j in range(i, len(basis)):
            g = tuple(x + y for x, y in zip(a, basis[j]))
            groups.setdefault(g, []).append((i, j))
    return groups


def _structural_witness(f: Polynomial, basis: Sequence[tuple]):
    """An exact reason no Gram matrix exists over ``basis``, or ``None``."""
    groups = _pair_groups(basis)
    for m in f.terms:
        if m not in groups:
            return f"monomial {m} is not a product of basis monomials"
    for g, pairs in groups.items():
        if len(pairs) == 1 and pairs[0][0] == pairs[0][1] and f.coefficient(g) < 0:
            return f"Gram diagonal entry for {basis[pairs[0][0]]} forced to {f.coefficient(g)}"
    return None


# --------------------------------------------------------------------------
# sampling for negative values


def _find_negative(f: Polynomial, cfg: SosConfig):
    n = f.nvars
    vals = [mpq(0), mpq(1), mpq(-1), mpq(1, 2), mpq(-1, 2), mpq(2), mpq(-2)]
    if n <= 3:
        for pt in itertools.product(vals, repeat=n):
            if f(list(pt)) < 0:
                return pt
    rng = np.random.default_rng(cfg.seed)
    pts = rng.standard_normal((cfg.samples, n)) * rng.choice([0.3, 1.0, 3.0], size=(cfg.samples, 1))
    with np.errstate(all="ignore"):
        v = f.eval_float(pts)
    order = np.argsort(v)
    for idx in order[:5]:
        if np.isfinite(v[idx]) and v[idx] < 0:
            pt = tuple(Q(Fraction(float(x)).limit_denominator(1 << 20)) for x in pts[idx])
            if f(list(pt)) < 0:
                return pt
    # a few local descents from the best samples
    try:
        from scipy.optimize import minimize
    except ImportError:     # pragma: no cover
        return None
    fl = _float_poly(f)
    for idx in order[:3]:
        res = minimize(fl, pts[idx], method="BFGS", options={"maxiter": 200})
        if np.isfinite(res.fun) and res.fun < 0:
            pt = tuple(Q(Fraction(float(x)).limit_denominator(1 << 24)) for x in res.x)
            if f(list(pt)) < 0:
                return pt
    return None


def _float_poly(f: Polynomial):
    monos = np.array(list(f.terms), dtype=float)
    coefs = np.array([float(c) for c in f.terms.values()])

    def fn(x):
        with np.errstate(all="ignore"):
            return float(np.sum(coefs * np.prod(np.power(x, monos), axis=1)))
    return fn


# --------------------------------------------------------------------------
# univariate route


def _univariate_sos(f: Polynomial, cfg: SosConfig):
    """Decomposition of a univariate ``f`` (given as a 1-variable polynomial).

    Repeated factors are split off first: ``f = c A^2 B`` where ``B`` has
    only simple roots, so ``B`` must be strictly positive when ``f >= 0``.
    """
    c, a_part, b_part = _square_split(f)
    if c <= 0:
        return None
    if b_part.is_constant():
        dec = SosDecomposition.square(Polynomial.one(1), b_part.constant_term())
    else:
        dec = _strict_univariate_sos(b_part, cfg)
        if dec is None:
            return None
    out = SosDecomposition(tuple((w * c, p * a_part) for w, p in dec.squares), None, 1)
    return out if verify_sos(f, out) else None


def _square_split(f: Polynomial):
    """``(c, A, B)`` with ``f = c * A^2 * B`` from a squarefree factorization."""
    import sympy

    x = sympy.Symbol("x")
    expr = sum(sympy.Rational(int(c.numerator), int(c.denominator)) * x ** m[0]
               for m, c in f.terms.items())
    lead, factors = sympy.sqf_list(sympy.Poly(expr, x))
    a_part = Polynomial.one(1)
    b_part = Polynomial.one(1)
    for fac, mult in factors:
        coeffs = [Q(str(cf)) for cf in reversed(fac.all_coeffs())]
        fp = Polynomial.from_univariate(coeffs)
        if fp.univariate_coeffs()[-1] < 0:
            fp = -fp
            if mult % 2:
                lead = -lead
        a_part = a_part * fp ** (mult // 2)
        if mult % 2:
            b_part = b_part * fp
    c = Q(str(lead))
    return c, a_part, b_part


def _strict_univariate_sos(f: Polynomial, cfg: SosConfig):
    coeffs = f.univariate_coeffs()
    deg = len(coeffs) - 1
    lc = coeffs[-1]
    if deg % 2 or lc <= 0:
        return None
    d = deg // 2
    if d == 0:
        return SosDecomposition.square(Polynomial.one(1), lc) if lc > 0 else None
    eps0 = _ratio_floor(coeffs, d)
    if eps0 is None or eps0 <= 0:
        return None
    eps = eps0
    for _ in range(8):
        pert = list(coeffs)
        for i in range(d + 1):
            pert[2 * i] -= eps
        for dps in cfg.root_precisions:
            got = _roots_sos(coeffs, pert, eps, d, dps)
            if got is not None:
                return got
        eps /= 8
    return None


def _ratio_floor(coeffs, d):
    """Rational a bit below ``min_x f(x) / sum_i x^(2i)`` (numerical estimate)."""
    with mpmath.workdps(40):
        cs = [mpmath.mpf(int(c.numerator)) / int(c.denominator) for c in coeffs]
        best = mpmath.mpf(cs[-1])
        for k in range(1, 4000):
            theta = mpmath.pi * (mpmath.mpf(k) / 4000 - mpmath.mpf(1) / 2)
            x = mpmath.tan(theta)
            fx = mpmath.polyval(cs[::-1], x)
            px = sum(x ** (2 * i) for i in range(d + 1))
            r = fx / px
            if r < best:
                best = r
        if best <= 0:
            return None
        est = best / 2
        return Q(Fraction(str(mpmath.nstr(est, 15, min_fixed=-mpmath.inf, max_fixed=mpmath.inf)))) \
            if est > 0 else None


def _mp_to_q(x, bits: int) -> mpq:
    scaled = mpmath.nint(x * mpmath.mpf(2) ** bits)
    return mpq(int(scaled), 1 << bits)


def _roots_sos(coeffs, pert, eps, d, dps):
    lc = pert[-1]
    if lc <= 0:
        return None
    with mpmath.workdps(dps):
        cs = [mpmath.mpf(int(c.numerator)) / int(c.denominator) for c in pert]
        monic = [c / cs[-1] for c in cs]
        init = None
        try:
            fl = np.array([float(c) for c in monic[::-1]])
            if np.all(np.isfinite(fl)):
                init = [mpmath.mpc(complex(z)) for z in np.roots(fl)]
        except (OverflowError, np.linalg.LinAlgError, ValueError):
            init = None
        try:
            roots = mpmath.polyroots(monic[::-1], maxsteps=400, extraprec=2 * dps,
                                     roots_init=init)
        except mpmath.libmp.NoConvergence:
            return None
        upper = [z for z in roots if mpmath.im(z) > 0]
        if len(upper) != d:
            return None
        s = [mpmath.mpc(1)]
        for z in upper:
            nxt = [mpmath.mpc(0)] * (len(s) + 1)
            for k, c in enumerate(s):
                nxt[k + 1] += c
                nxt[k] -= z * c
            s = nxt
        bits = int(dps * 3.32) - 8
        s1 = [_mp_to_q(mpmath.re(c), bits) for c in s]
        s2 = [_mp_to_q(mpmath.im(c), bits) for c in s]
    s1[-1], s2[-1] = mpq(1), mpq(0)
    p1 = Polynomial.from_univariate(s1)
    p2 = Polynomial.from_univariate(s2)
    approx = (p1 * p1 + p2 * p2).scale(lc)
    f = Polynomial.from_univariate(coeffs)
    rem = f - approx     # = eps * sum x^(2i) + u
    r = rem.univariate_coeffs() if not rem.is_zero() else []
    r = r + [mpq(0)] * (2 * d + 1 - len(r))
    x = Polynomial.variable(0, 1)
    squares = [(lc, p1), (lc, p2)]
    even = [r[2 * i] for i in range(d + 1)]
    for i in range(d):
        u = r[2 * i + 1]
        if u == 0:
            continue
        a = abs(u) / 2
        sign = 1 if u > 0 else -1
        squares.append((a, x ** (i + 1) + Polynomial.constant(sign, 1) * x ** i))
        even[i] -= a
        even[i + 1] -= a
    if any(e < 0 for e in even):
        return None
    for i, e in enumerate(even):
        if e > 0:
            squares.append((e, x ** i))
    dec = SosDecomposition(tuple(squares), None, 1)
    return dec if verify_sos(f, dec) else None


# --------------------------------------------------------------------------
# Gram route


def _solve_sdp(f_scaled: dict, basis, groups, mode: str, eps: float, weight=None):
    """Numerical Gram matrix.

    ``mode`` is ``"center"`` (maximize the smallest eigenvalue) or
    ``"trace"`` (minimize ``trace(weight Q)``, plain trace by default).
    """
    import cvxpy as cp

    n = len(basis)
    keys = list(groups)
    rows, cols, vals = [], [], []
    for r, g in enumerate(keys):
        for i, j in groups[g]:
            rows.append(r)
            cols.append(i * n + j)
            vals.append(1.0 if i == j else 2.0)
    from scipy.sparse import csr_matrix

    a = csr_matrix((vals, (rows, cols)), shape=(len(keys), n * n))
    b = np.array([f_scaled.get(g, 0.0) for g in keys])
    qv = cp.Variable((n, n), symmetric=True)
    vec = cp.vec(qv, order="C")
    cons = [a @ vec == b]
    if mode == "center":
        t = cp.Variable()
        cons += [qv - t * np.eye(n) >> 0, cp.trace(qv) <= 10 * n * max(1.0, float(np.max(np.abs(b))))]
        prob = cp.Problem(cp.Maximize(t), cons)
    else:
        cons += [qv >> 0]
        obj = cp.trace(qv) if weight is None else cp.trace(weight @ qv)
        prob = cp.Problem(cp.Minimize(obj), cons)
    for solver, opts in (("CLARABEL", {}), ("SCS", {"eps": eps, "max_iters": 20000})):
        try:
            prob.solve(solver=solver, **opts)
        except Exception as exc:    # solver failures just move on
            log.debug("solver %s failed: %s", solver, exc)
            continue
        if qv.value is not None and prob.status in ("optimal", "optimal_inaccurate"):
            tval = float(t.value) if mode == "center" else None
            return np.array(qv.value), tval
    return None, None


def _round_matrix(qn, bits: int):
    n = qn.shape[0]
    scale = 1 << bits
    out = [[mpq(0)] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            v = mpq(int(round(float(qn[i, j]) * scale)), scale)
            out[i][j] = out[j][i] = v
    return out


def _project_groups(qm, groups, fq: dict):
    """Exact orthogonal projection onto ``sum_{pairs} Q_ij = f_gamma``."""
    for g, pairs in groups.items():
        count = sum(1 if i == j else 2 for i, j in pairs)
        total = sum((qm[i][j] if i == j else 2 * qm[i][j] for i, j in pairs), mpq(0))
        c = (fq.get(g, mpq(0)) - total) / count
        if c:
            for i, j in pairs:
                qm[i][j] += c
                if i != j:
                    qm[j][i] = qm[i][j]
    return qm


def _squares_from_ldl(res: PsdResult, polys: Sequence[Polynomial], scale: mpq):
    n = len(polys)
    squares = []
    for k in range(n):
        piv = res.pivots[k]
        if piv == 0:
            continue
        p = Polynomial.zero(polys[0].nvars)
        for j in range(k, n):
            c = res.lower[j][k]
            if c:
                p = p + polys[res.perm[j]].scale(c)
        squares.append((piv * scale, p))
    return squares


def _gram_route(f: Polynomial, basis: list[tuple], cfg: SosConfig):
    n = f.nvars
    groups = _pair_groups(basis)
    if any(m not in groups for m in f.terms):
        return None
    top = max(abs(c) for c in f.terms.values())
    scale = mpq(2) ** (int(top.numerator).bit_length() - int(top.denominator).bit_length())
    fq = {m: c / scale for m, c in f.terms.items()}
    ff = {m: float(c) for m, c in fq.items()}
    monos = [Polynomial.monomial(m) if len(m) == n else None for m in basis]
    qn, t = _solve_sdp(ff, basis, groups, "center", cfg.solver_eps)
    if qn is not None and t is not None and t > 1e-7:
        for bits in cfg.denominators:
            qm = _project_groups(_round_matrix(qn, bits), groups, fq)
            res = psd_check_exact(qm)
            if res.psd:
                squares = _squares_from_ldl(res, monos, scale)
                dec = SosDecomposition(tuple(squares), (tuple(basis), qm), n)
                if verify_sos(f, dec):
                    return dec
    if t is not None and t < -1e-5:
        return None         # no PSD Gram matrix at all, faces will not help
    # Singular case: restrict to the face spanned by a numerical range.
    # Interior-point solutions sit in the relative interior of the optimal
    # face, whose span is usually irrational; reweighted trace minimization
    # (a log-det rank heuristic) drifts to low-rank faces spanned by
    # rational polynomials.
    qc, _ = _solve_sdp(ff, basis, groups, "trace", cfg.solver_eps)
    for _ in range(cfg.reweight_rounds):
        if qc is None:
            break
        dec = _facial_route(f, basis, monos, qc, fq, scale, cfg)
        if dec is not None:
            return dec
        weight = np.linalg.inv(qc + 1e-3 * np.eye(len(basis)))
        qc, _ = _solve_sdp(ff, basis, groups, "trace", cfg.solver_eps, weight)
    if qn is not None:
        dec = _facial_route(f, basis, monos, qn, fq, scale, cfg)
        if dec is not None:
            return dec
    start = qc if qc is not None else qn
    if start is not None and len(basis) <= cfg.low_rank_basis:
        for q in _low_rank_grams(ff, basis, groups, start, cfg.seed):
            dec = _facial_route(f, basis, monos, q, fq, scale, cfg)
            if dec is not None:
                return dec
    return None


def _low_rank_grams(ff: dict, basis, groups, q0, seed: int, max_rank: int = 8, starts: int = 3):
    """Numerical Gram matrices ``V^T V`` of small rank fitted by least squares.

    The interior-point and reweighted solutions can sit on a face of the
    spectrahedron that has no rational point of its own even when a rational
    low-rank Gram matrix exists (typically when ``f`` has isolated real
    zeros).  Fitting ``f = sum_{i<r} (V b)_i^2`` directly for small ``r`` goes
    after that point instead.
    """
    from scipy.optimize import least_squares

    m = len(basis)
    keys, amat = _group_matrix(basis, groups)
    b = np.array([ff.get(g, 0.0) for g in keys])
    amat = amat.toarray()
    # d vec(V^T V) / dV is assembled per column block from the entries of V
    a3 = amat.reshape(len(keys), m, m)
    a_sym = a3 + a3.transpose(0, 2, 1)

    def fun(x, r):
        v = x.reshape(r, m)
        return amat @ (v.T @ v).ravel() - b

    def jac(x, r):
        v = x.reshape(r, m)
        # d/dV[a, c] of sum_ij A[g, i, j] V[a, i] V[a, j] = sum_j (A + A^T)[g, c, j] V[a, j]
        return np.einsum("gcj,aj->gac", a_sym, v).reshape(len(keys), r * m)

    rng = np.random.default_rng(seed)
    w, u = np.linalg.eigh((q0 + q0.T) / 2)
    order = np.argsort(w)[::-1]
    scale_b = max(float(np.linalg.norm(b)), 1e-300)
    numrank = int(np.sum(w > 1e-6 * max(float(w.max()), 1e-300)))
    for r in range(1, min(max_rank, numrank) + 1):
        top = order[:r]
        guesses = [(u[:, top] * np.sqrt(np.maximum(w[top], 0))).T]
        for _ in range(starts):
            guesses.append(rng.standard_normal((r, m)) * np.sqrt(max(float(np.trace(q0)), 1e-12) / (r * m)))
        for v0 in guesses:
            method = "lm" if len(keys) >= r * m else "trf"
            sol = least_squares(fun, v0.ravel(), jac=jac, args=(r,), method=method,
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200 * r * m)
            if np.linalg.norm(sol.fun) < 1e-11 * scale_b:
                v = sol.x.reshape(r, m)
                yield v.T @ v


def _rref_rows(mat):
    """Numerical RREF of a full-row-rank float matrix: (pivot columns, rows)."""
    from scipy.linalg import qr

    _, _, piv = qr(mat, pivoting=True)
    r = mat.shape[0]
    cols = sorted(piv[:r])
    sub = mat[:, cols]
    rows = np.linalg.solve(sub, mat)
    return cols, rows


def _facial_route(f, basis, monos, qn, fq, scale, cfg):
    n = f.nvars
    groups = _pair_groups(basis)
    w, v = np.linalg.eigh((qn + qn.T) / 2)
    lam_max = max(float(np.max(w)), 1e-300)
    tried = set()
    for tol in (1e-6, 1e-4, 1e-8):
        keep = w > tol * lam_max
        r = int(np.sum(keep))
        if r == 0 or r > 40 or r in tried:
            continue
        tried.add(r)
        u = v[:, keep]
        cols, rows = _rref_rows(u.T)
        rf0 = np.array(rows)
        pinv = np.linalg.pinv(rf0.T)
        wn = pinv @ qn @ pinv.T

        def attempt(rq, max_bits):
            for i, c in enumerate(cols):        # exact identity on pivot columns
                for k in range(r):
                    rq[k][c] = mpq(1) if k == i else mpq(0)
            qs = []
            for k in range(r):
                p = Polynomial.zero(n)
                for j, c in enumerate(rq[k]):
                    if c:
                        p = p + monos[j].scale(c)
                qs.append(p)
            return _solve_face(f, qs, wn, fq, scale, cfg, max_bits)

        seen = set()
        for den in (1 << 10, 1 << 16):
            # a face with a rational basis reconstructs far below the rounding scale
            rq = _reconstruct(rows, den, Fraction(1, 10 ** 7))
            if rq is None:
                continue
            key = tuple(tuple(row) for row in rq)
            if key in seen:
                continue
            seen.add(key)
            dec = attempt(rq, _FACE_BITS)
            if dec is not None:
                return dec
        # Faces whose echelon form has large denominators need more digits
        # than the solver gives; sharpen them first.
        sharp = _refine_face(rf0, cols, wn, basis, groups, fq)
        if sharp is None:
            continue
        for den in (1 << 24, 1 << 48):
            rq = _reconstruct(sharp, den, Fraction(1, 1 << 120))
            if rq is not None:
                dec = attempt(rq, 4 * _FACE_BITS)
                if dec is not None:
                    return dec
                break
    return None


def _group_matrix(basis, groups):
    """Sparse map from ``vec(Q)`` (row major) to the coefficient of each monomial group."""
    from scipy.sparse import csr_matrix

    m = len(basis)
    keys = list(groups)
    rows, cols, vals = [], [], []
    for r, g in enumerate(keys):
        for i, j in groups[g]:
            rows.append(r)
            cols.append(i * m + j)
            vals.append(1.0 if i == j else 2.0)
    return keys, csr_matrix((vals, (rows, cols)), shape=(len(keys), m * m))


def _refine_face(rows, cols, wn, basis, groups, fq, iters: int = 12, bits: int = 224):
    """Sharpen a numerical face ``R = [I | X]`` together with its Gram block ``W``.

    Gauss-Newton on ``R^T W R = Q`` where the residual is evaluated exactly in
    rationals and only the correction is solved in floating point, so the
    iterates converge well past double precision.  Returns the refined rows
    as rationals, or ``None`` if the residual does not shrink.
    """
    r, m = rows.shape
    keys, amat = _group_matrix(basis, groups)
    free = [c for c in range(m) if c not in cols]
    xq = [[Q(float(rows[k, c])) for c in free] for k in range(r)]
    wq = [[Q(float((wn[k, l] + wn[l, k]) / 2)) for l in range(r)] for k in range(r)]
    target = [fq.get(g, mpq(0)) for g in keys]
    grid = mpq(1, 1 << bits)

    def full_rows(xv):
        out = [[mpq(0)] * m for _ in range(r)]
        for k in range(r):
            out[k][cols[k]] = mpq(1)
            for t, c in enumerate(free):
                out[k][c] = xv[k][t]
        return out

    def residual(rq, wv):
        wr = [[sum((wv[k][l] * rq[l][j] for l in range(r)), mpq(0)) for j in range(m)] for k in range(r)]
        res = []
        for g, tgt in zip(keys, target):
            s = -tgt
            for i, j in groups[g]:
                v = sum((rq[k][i] * wr[k][j] for k in range(r)), mpq(0))
                s += v if i == j else 2 * v
            res.append(s)
        return res

    def snap(x):
        return Q(round(x / grid)) * grid if x.denominator > (1 << bits) else x

    last = None
    for _ in range(iters):
        rq = full_rows(xq)
        res = residual(rq, wq)
        size = max((abs(float(v)) for v in res), default=0.0)
        if size == 0.0 or size < 2.0 ** (-bits + 16):
            return rq
        if last is not None and size > 0.5 * last:
            return None
        last = size
        rf = np.array([[float(v) for v in row] for row in rq])
        wf = np.array([[float(v) for v in row] for row in wq])
        wr = wf @ rf
        jac = []
        for k in range(r):
            for c in free:
                dq = np.zeros((m, m))
                dq[c, :] += wr[k]
                dq[:, c] += wr[k]
                jac.append(amat @ dq.ravel())
        for k in range(r):
            for l in range(k, r):
                dq = np.outer(rf[k], rf[l])
                if k != l:
                    dq = dq + dq.T
                jac.append(amat @ dq.ravel())
        step = np.linalg.lstsq(np.array(jac).T, -np.array([float(v) for v in res]), rcond=None)[0]
        pos = 0
        for k in range(r):
            for t in range(len(free)):
                xq[k][t] = snap(xq[k][t] + Q(float(step[pos])))
                pos += 1
        for k in range(r):
            for l in range(k, r):
                wq[k][l] = wq[l][k] = snap(wq[k][l] + Q(float(step[pos])))
                pos += 1
    return None


def _reconstruct(rows, den: int, tol):
    """Rows rounded to the nearest fractions with denominator ``<= den``, if all are within ``tol``."""
    out = []
    for row in rows:
        new = []
        for x in row:
            fx = Fraction(int(x.numerator), int(x.denominator)) if isinstance(x, type(mpq(0))) else Fraction(float(x))
            y = fx.limit_denominator(den)
            if abs(y - fx) > tol:
                return None
            new.append(Q(y))
        out.append(new)
    return out


_FACE_BITS = 128


def _bits(c) -> int:
    return int(c.numerator).bit_length() + int(c.denominator).bit_length()


def _solve_face(f, qs, wn, fq, scale, cfg, max_bits: int = _FACE_BITS):
    """Exact ``W`` with ``sum W_kl q_k q_l = f / scale``; free unknowns set from ``wn``."""
    r = len(qs)
    unknowns = [(k, l) for k in range(r) for l in range(k, r)]
    prods = {}
    for idx, (k, l) in enumerate(unknowns):
        pr = qs[k] * qs[l]
        mult = 1 if k == l else 2
        for m, c in pr.terms.items():
            prods.setdefault(m, {})[idx] = prods.get(m, {}).get(idx, mpq(0)) + mult * c
    mons = list(set(prods) | set(fq))
    # cheap float test first: is f/scale (nearly) in the span of the q_k q_l?
    amat = np.zeros((len(mons), len(unknowns)))
    rhs = np.zeros(len(mons))
    for row, m in enumerate(mons):
        for idx, c in prods.get(m, {}).items():
            amat[row, idx] = float(c)
        rhs[row] = float(fq.get(m, 0))
    sol = np.linalg.lstsq(amat, rhs, rcond=None)[0]
    if np.linalg.norm(amat @ sol - rhs) > 1e-7 * max(1.0, np.linalg.norm(rhs)):
        return None
    # independent equations only; the final exact check catches a bad choice
    from scipy.linalg import qr

    _, rr, order = qr(amat.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(rr))
    rank = int(np.sum(diag > 1e-9 * max(diag.max(initial=0.0), 1e-300)))
    eqs = [(dict(prods.get(mons[i], {})), fq.get(mons[i], mpq(0))) for i in order[:rank]]
    # Faces with a genuinely rational basis give short coefficients; long
    # ones mean the rounding missed, and exact elimination would only crawl.
    bits = max((_bits(c) for row, _ in eqs for c in row.values()), default=0)
    if bits > max_bits:
        return None
    sol_pivots = _exact_rref(eqs, len(unknowns))
    if sol_pivots is None:
        return None
    for bits in cfg.denominators:
        vals = {}
        for idx, (k, l) in enumerate(unknowns):
            vals[idx] = mpq(int(round(float(wn[k, l]) * (1 << bits))), 1 << bits)
        for piv, (row, rhs) in sol_pivots:
            s = rhs
            for j, c in row.items():
                if j != piv:
                    s -= c * vals[j]
            vals[piv] = s
        if any(sum((c * vals[idx] for idx, c in prods.get(m, {}).items()), mpq(0))
               != fq.get(m, 0) for m in mons):
            continue
        wm = [[mpq(0)] * r for _ in range(r)]
        for idx, (k, l) in enumerate(unknowns):
            wm[k][l] = wm[l][k] = vals[idx]
        res = psd_check_exact(wm)
        if res.psd:
            squares = _squares_from_ldl(res, qs, scale)
            dec = SosDecomposition(tuple(squares), None, f.nvars)
            if verify_sos(f, dec):
                return dec
    return None


def _exact_rref(eqs, nunk):
    """Reduced row echelon form of sparse rational equations.

    Returns ``[(pivot, (row, rhs))]`` with each row expressing its pivot in
    terms of free unknowns only, or ``None`` when inconsistent.
    """
    rows = [(dict((j, Q(c)) for j, c in row.items() if c != 0), Q(rhs)) for row, rhs in eqs]
    done: list = []
    for row, rhs in rows:
        # eliminate known pivots
        for piv, (prow, prhs) in done:
            c = row.get(piv)
            if c:
                for j, v in prow.items():
                    nv = row.get(j, mpq(0)) - c * v
                    if nv:
                        row[j] = nv
                    else:
                        row.pop(j, None)
                rhs = rhs - c * prhs
        if not row:
            if rhs != 0:
                return None
            continue
        piv = min(row)
        c = row[piv]
        row = {j: v / c for j, v in row.items()}
        rhs = rhs / c
        # back-substitute into earlier rows
        new_done = []
        for p2, (r2, rhs2) in done:
            c2 = r2.get(piv)
            if c2:
                for j, v in row.items():
                    nv = r2.get(j, mpq(0)) - c2 * v
                    if nv:
                        r2[j] = nv
                    else:
                        r2.pop(j, None)
                rhs2 = rhs2 - c2 * rhs
            new_done.append((p2, (r2, rhs2)))
        done = new_done + [(piv, (row, rhs))]
    return done


# --------------------------------------------------------------------------
# entry point


def sos_decompose(f: Polynomial, cfg: SosConfig = SosConfig(), escalate: bool = True):
    """A verified :class:`SosDecomposition` of ``f``, ``"not-sos"`` or ``"inconclusive"``."""
    n = f.nvars
    if f.is_zero():
        return SosDecomposition.zero(n)
    if f.is_constant():
        c = f.constant_term()
        return SosDecomposition.square(Polynomial.one(n), c) if c > 0 else NOT_SOS
    if f.degree % 2:
        return NOT_SOS
    used = f.used_variables()
    mono = _monomial_squares(f)
    if mono is not None:
        return mono
    if _find_negative(f, cfg) is not None:
        return NOT_SOS
    if len(used) == 1:
        sub = f.restrict_variables(used)
        dec = _univariate_sos(sub, cfg)
        if dec is None and escalate:
            dec = _univariate_sos(sub, cfg.escalated())
        if dec is not None:
            out = SosDecomposition(tuple((w, p.embed(used, n)) for w, p in dec.squares), None, n)
            if verify_sos(f, out):
                return out
        return INCONCLUSIVE
    comb = _combinatorial_basis(f)
    if _structural_witness(f, comb) is not None:
        return NOT_SOS
    basis = comb
    if cfg.newton:
        basis = _diagonal_prune(f, _newton_filter(f, comb))
    if len(basis) > cfg.max_basis:
        return INCONCLUSIVE
    dec = _gram_route(f, basis, cfg)
    if dec is None and escalate:
        dec = _gram_route(f, comb if cfg.newton else basis, cfg.escalated())
    return dec if dec is not None else INCONCLUSIVE


def norm_power_sos(n: int, k: int) -> SosDecomposition:
    """``(x_1^2 + ... + x_n^2)^k`` as an explicit sum of squares."""
    from .poly import norm_sq

    if k < 0:
        raise ValueError("negative power")
    if k % 2 == 0:
        return SosDecomposition.square(norm_sq(n) ** (k // 2))
    half = norm_sq(n) ** (k // 2)
    return SosDecomposition(tuple((mpq(1), Polynomial.variable(j, n) * half) for j in range(n)),
                            None, n)


def _monomial_squares(f: Polynomial):
    """``f`` as positive multiples of squared monomials, when it already is one."""
    squares = []
    for m, c in f.terms.items():
        if c < 0 or any(e % 2 for e in m):
            return None
        squares.append((c, Polynomial.monomial(tuple(e // 2 for e in m))))
    return SosDecomposition(tuple(squares), None, f.nvars)


def not_sos_reason(f: Polynomial, cfg: SosConfig = SosConfig()):
    """The exact witness behind a ``"not-sos"`` verdict (or ``None``)."""
    if f.is_constant():
        return "negative constant" if f.constant_term() < 0 else None
    if f.degree % 2:
        return "odd degree"
    pt = _find_negative(f, cfg)
    if pt is not None:
        return ("negative value", pt)
    if len(f.used_variables()) > 1:
        return _structural_witness(f, _combinatorial_basis(f))
    return None
