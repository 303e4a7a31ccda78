"""Generalized trigonometric and exponential series with certified error.

The four trigonometric functions are entire series in z with coefficients
taken from a PQTable:

    sinN(z) = sum (-1)^n p_{2n+1} z^(2n+1)      zeros^2 = Neumann spectrum
    sinD(z) = sum (-1)^n q_{2n+1} z^(2n+1)      zeros^2 = Dirichlet spectrum
    cosN(z) = sum (-1)^n p_{2n}   z^(2n)        zeros^2 = mixed (ND) spectrum
    cosD(z) = sum (-1)^n q_{2n}   z^(2n)        zeros^2 = mixed (DN) spectrum

Every evaluation returns a CertifiedValue whose ``tail_bound`` covers both
the truncation tail (see pq module docs for the two bound families) and the
accumulated rounding error of the Horner loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Tuple

from mpmath import mp, mpf

from . import pq
from .errors import PrecisionExhausted, TableTooShallow, ValidationError
from .pq import P_EVEN, P_ODD, Q_EVEN, Q_ODD, PQTable

SIN_N = "sinN"
SIN_D = "sinD"
COS_N = "cosN"
COS_D = "cosD"

_FAMILY = {SIN_N: P_ODD, SIN_D: Q_ODD, COS_N: P_EVEN, COS_D: Q_EVEN}
_IS_ODD = {SIN_N: True, SIN_D: True, COS_N: False, COS_D: False}

# safety inflation on all computed bounds (absorbs rounding of the bound
# arithmetic itself and of the tabled coefficients)
_SLACK = mpf("1.01")


@dataclass(frozen=True)
class CertifiedValue:
    """A computed number with a rigorous total error bound."""

    value: mpf
    tail_bound: mpf

    def __float__(self):
        return float(self.value)

    def contains_zero(self) -> bool:
        return abs(self.value) <= self.tail_bound


@dataclass(frozen=True)
class TrigSeries:
    """One of the four series over a fixed table, optionally pinned degree."""

    kind: str
    table: PQTable
    degree: Optional[int] = None

    def __post_init__(self):
        if self.kind not in _FAMILY:
            raise ValidationError(f"unknown series kind {self.kind!r}")
        if self.degree is not None and self.degree > self.table.levels:
            raise TableTooShallow(
                f"degree {self.degree} exceeds table capacity {self.table.levels}",
                required_n_max=2 * self.degree + 1)


def _mpf_coeffs(table: PQTable, family: str) -> List[mpf]:
    """Coefficient magnitudes as mpf, cached on the table."""
    key = ("coeffs", family)
    got = table._aux.get(key)
    if got is None or len(got) < table.levels + 1:
        if table.backend == pq.EXACT:
            prec = max(250, 10 + int(3.33 * (table.params.working_digits + 30)))
            with mp.workprec(prec):
                got = [mpf(c.numerator) / c.denominator for c in table.family(family)]
        else:
            got = table.family(family)
        table._aux[key] = got
    return got


_LOG10 = math.log(10)


def _log10_number(v) -> float:
    if isinstance(v, Fraction):
        with mp.workdps(20):
            return float(mp.log10(mpf(v.numerator)) - mp.log10(mpf(v.denominator)))
    with mp.workdps(20):
        return float(mp.log10(abs(v)))


def _log_coeffs(table: PQTable, family: str) -> List[float]:
    """float log10 of the coefficient magnitudes, cached on the table."""
    key = ("logc", family)
    got = table._aux.get(key)
    if got is None or len(got) < table.levels + 1:
        got = [_log10_number(c) for c in table.family(family)]
        table._aux[key] = got
    return got


def _log_factorials(n: int) -> List[float]:
    return [math.lgamma(k + 1) / _LOG10 for k in range(n + 1)]


def tail_log10(table: PQTable, family: str, n_terms: int, x, weight: int = 0) -> float:
    """log10 of an upper bound for sum_{n>=N} coef_n x^n (weight 0) or the
    derivative-style tail sum_{n>=N} n coef_n x^(n-1) (weight 1), N = n_terms.

    Takes the min of the anchored factorial bound (needs coef_N, so N must
    be within table capacity) and the quadratic-factorial envelope bound
    (valid for any N when an envelope exists).  Float arithmetic in log
    space; a fixed slack absorbs its rounding.
    """
    N = n_terms
    if isinstance(x, mpf):
        xf = abs(float(x))
        lx = _log10_number(x) if x != 0 else -math.inf
    else:
        xf = abs(float(x))
        lx = math.log10(xf) if xf > 0 else -math.inf
    if lx == -math.inf:
        return -math.inf
    key = ("tailctx", family)
    ctx = table._aux.get(key)
    if ctx is None:
        w = pq.anchored_constants(table)[family]
        wf = float(w.numerator) / float(w.denominator) if table.backend == pq.EXACT else float(w)
        env = pq.envelope(table)
        envf = (float(env.A), float(env.sigma)) if env is not None else None
        ctx = (wf, envf)
        table._aux[key] = ctx
    wf, envf = ctx
    best = math.inf
    if N <= table.levels:
        logc = _log_coeffs(table, family)[N]
        if weight == 0:
            best = logc + N * lx + wf * xf / _LOG10
        else:
            best = logc + (N - 1) * lx + math.log10(N + wf * xf) + wf * xf / _LOG10
    if envf is not None:
        A, sigma = envf
        lsx = math.log10(sigma) + lx
        closure = 2 * math.sqrt(sigma * xf) / _LOG10
        lgf = math.lgamma(N + 1) / _LOG10
        if weight == 0:
            e = math.log10(A) + N * lsx - 2 * lgf + closure
        else:
            e = (math.log10(A * sigma) + (N - 1) * lsx
                 - 2 * math.lgamma(N) / _LOG10 + closure)
        best = min(best, e)
    return best + 0.01  # slack for the float rounding of this estimate


def tail_bound(table: PQTable, family: str, n_terms: int, x, weight: int = 0) -> mpf:
    """The tail_log10 bound as an mpf (see there)."""
    lb = tail_log10(table, family, n_terms, x, weight)
    with mp.workdps(20):
        if lb == -math.inf:
            return mpf(0)
        return mp.power(10, mpf(lb)) * _SLACK


def required_terms(table: PQTable, family: str, x, tol, weight: int = 0) -> int:
    """Smallest N with tail_bound(N) <= tol.

    May exceed the table capacity (the envelope bound needs no
    coefficients); callers turn that into TableTooShallow or an extension.
    """
    ltol = _log10_number(tol) - 0.05 if tol else -math.inf
    limit = 6 * table.levels + 256
    N = 1
    while N <= limit:
        if tail_log10(table, family, N, x, weight) <= ltol:
            break
        N = max(N + 1, int(N * 1.4))
    else:
        raise PrecisionExhausted(
            f"no degree up to {limit} reaches the requested tail at x={float(x):.4g}")
    lo, hi = N // 2, N
    while lo < hi:  # bound is decreasing in this range
        mid = (lo + hi) // 2
        if mid >= 1 and tail_log10(table, family, mid, x, weight) <= ltol:
            hi = mid
        else:
            lo = mid + 1
    return max(hi, 1)


def _horner(coeffs: List[mpf], u: mpf, n_terms: int, alternating: bool) -> Tuple[mpf, mpf]:
    """(sum_{n<N} (-1)^n c_n u^n  or  sum c_n u^n, sum c_n |u|^n)."""
    acc = mpf(0)
    accabs = mpf(0)
    ua = abs(u)
    us = -u if alternating else u
    for n in range(n_terms - 1, -1, -1):
        c = coeffs[n]
        acc = acc * us + c
        accabs = accabs * ua + c
    return acc, accabs


def _eval_weighted(table: PQTable, family: str, x, tol, odd_factor, z=None,
                   degree: Optional[int] = None, alternating: bool = True,
                   rel_ok: bool = False):
    """Shared evaluation core; returns (CertifiedValue, n_terms).

    With ``rel_ok`` the rounding loop may stop once rounding is negligible
    relative to the value itself, even if the absolute target is missed;
    used by the spectral scan where only certified signs matter.
    """
    wd = table.params.working_digits
    with mp.workdps(wd + 20):
        x = mpf(x)
    if degree is None:
        n_terms = required_terms(table, family, x, mpf(tol) / 2)
        if n_terms > table.levels:
            raise TableTooShallow(
                f"need {n_terms} series terms, table holds {table.levels}",
                required_n_max=2 * n_terms + 3)
    else:
        n_terms = degree
        if n_terms > table.levels:
            raise TableTooShallow(
                f"degree {n_terms} exceeds table capacity {table.levels}",
                required_n_max=2 * n_terms + 1)
    trunc = tail_bound(table, family, n_terms, x)
    if odd_factor:
        with mp.workdps(25):
            trunc = trunc * abs(mpf(z))  # series tail = |z| * polynomial tail
    coeffs = _mpf_coeffs(table, family)
    # the tabled coefficients themselves carry noise at the table precision,
    # so extra evaluation digits cannot push the error below that floor
    noise_dps = table.dps if table.backend == pq.REAL else 10 ** 9
    dps = wd + int(mp.ceil(mp.log10(n_terms + 2))) + 10
    for _ in range(5):
        with mp.workdps(dps):
            val, absval = _horner(coeffs, x, n_terms, alternating)
            rounding = absval * (n_terms + 5) * mpf(10) ** (2 - min(dps, noise_dps))
            if odd_factor:
                zz = mpf(z)
                val, absval = val * zz, absval * abs(zz)
                rounding *= 2 * abs(zz) + 1
        if rounding <= mpf(tol) / 2 or (rel_ok and rounding <= abs(val) * mpf(10) ** (-wd)):
            total = (trunc + rounding) * _SLACK
            return CertifiedValue(val, total), n_terms, absval
        if dps >= noise_dps and rounding > mpf(tol) / 2:
            raise PrecisionExhausted(
                f"table precision ({noise_dps} digits) caps the achievable error "
                f"at {mp.nstr(rounding, 3)} > tol")
        dps = int(dps * 1.6) + 10
    raise PrecisionExhausted(f"rounding would not drop below tol={tol} (dps={dps})")


def eval_series(series: TrigSeries, z, tol) -> CertifiedValue:
    """Evaluate one generalized trigonometric function at real z.

    Postcondition: |value - exact| <= tail_bound <= tol (tail_bound also
    covers rounding).  Raises TableTooShallow or PrecisionExhausted.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    table = series.table
    family = _FAMILY[series.kind]
    odd = _IS_ODD[series.kind]
    wd = table.params.working_digits
    with mp.workdps(wd + 20):
        zz = mpf(z)
        u = zz * zz
    # odd series carry a z prefactor: request the polynomial part to tol/|z|
    ptol = mpf(tol) if not odd or abs(zz) <= 1 else mpf(tol) / abs(zz)
    cv, n_used, _amp = _eval_weighted(table, family, u, ptol, odd, z=zz, degree=series.degree)
    if cv.tail_bound > tol:
        # only reachable with an explicitly pinned, too-small degree
        needed = required_terms(table, family, u, ptol / 2)
        raise TableTooShallow(
            f"degree {series.degree} gives bound {mp.nstr(cv.tail_bound, 3)} > tol;"
            f" need about {needed} terms", required_n_max=2 * needed + 3)
    return cv


def four_values(table: PQTable, z, tol) -> dict:
    """All four series at z: {kind: CertifiedValue}."""
    return {kind: eval_series(TrigSeries(kind, table), z, tol)
            for kind in (SIN_N, SIN_D, COS_N, COS_D)}


def eval_exp(table: PQTable, z, variant: str = "lm", tol=None, imaginary: bool = False):
    """Generalized exponential at x = 1.

    variant "lm": sum z^(2n) p_{2n} + sum z^(2n+1) q_{2n+1}
    variant "ml": sum z^(2n) q_{2n} + sum z^(2n+1) p_{2n+1}

    With ``imaginary`` set, returns the Euler split of exp(i*t) as the pair
    (cos part, sin part): (cosN, sinD) for "lm" and (cosD, sinN) for "ml".
    """
    if variant not in ("lm", "ml"):
        raise ValidationError(f"variant must be 'lm' or 'ml', got {variant!r}")
    wd = table.params.working_digits
    if tol is None:
        tol = mpf(10) ** (10 - wd)
    if imaginary:
        cos_kind = COS_N if variant == "lm" else COS_D
        sin_kind = SIN_D if variant == "lm" else SIN_N
        return (eval_series(TrigSeries(cos_kind, table), z, tol),
                eval_series(TrigSeries(sin_kind, table), z, tol))
    even_fam = P_EVEN if variant == "lm" else Q_EVEN
    odd_fam = Q_ODD if variant == "lm" else P_ODD
    with mp.workdps(wd + 20):
        zz = mpf(z)
        u = zz * zz
    half = mpf(tol) / 2
    ptol = half if abs(zz) <= 1 else half / abs(zz)
    even_cv, _, _ = _eval_weighted(table, even_fam, u, half, False, alternating=False)
    odd_cv, _, _ = _eval_weighted(table, odd_fam, u, ptol, True, z=zz, alternating=False)
    with mp.workdps(wd + 20):
        return CertifiedValue(even_cv.value + odd_cv.value,
                              even_cv.tail_bound + odd_cv.tail_bound)


# ---------------------------------------------------------------------------
# certified pair arithmetic: (value, error) with |true - value| <= error

def cpair(cv: CertifiedValue) -> Tuple[mpf, mpf]:
    return (cv.value, cv.tail_bound)


def cmul(a, b):
    av, ae = a
    bv, be = b
    return (av * bv, abs(av) * be + abs(bv) * ae + ae * be)


def cadd(*terms):
    v = sum(t[0] for t in terms)
    e = sum(t[1] for t in terms)
    return (v, e)


def cneg(a):
    return (-a[0], a[1])


def cscale(c: mpf, a, c_rel_err=None):
    """Scale by a scalar carrying small relative error (default 1e-(dps-3))."""
    if c_rel_err is None:
        c_rel_err = mpf(10) ** (3 - mp.dps)
    err = abs(c) * a[1] + abs(c) * c_rel_err * (abs(a[0]) + a[1])
    return (c * a[0], err)


def pythagorean_residual(table: PQTable, z, tol) -> Tuple[mpf, mpf]:
    """cosD(z)*cosN(z) + sinD(z)*sinN(z) - 1 with a combined bound."""
    vals = four_values(table, z, tol)
    with mp.workdps(table.params.working_digits + 15):
        r = cadd(cmul(cpair(vals[COS_D]), cpair(vals[COS_N])),
                 cmul(cpair(vals[SIN_D]), cpair(vals[SIN_N])),
                 (mpf(-1), mpf(0)))
    return r


def functional_equation_residuals(table: PQTable, z, tol) -> List[Tuple[mpf, mpf]]:
    """Residuals (lhs - rhs, bound) of the four self-similar identities.

    Each identity relates a function at z to the four functions at the
    scaled arguments sqrt(r1*m1)*z and sqrt(r2*m2)*z.
    """
    params = table.params
    wd = params.working_digits
    with mp.workdps(wd + 15):
        r1, r2, m1, m2 = params.as_mpf(wd + 15)
        g = 1 - r1 - r2
        za = mp.sqrt(r1 * m1) * mpf(z)
        zb = mp.sqrt(r2 * m2) * mpf(z)
        zz = mpf(z)
        sub_tol = mpf(tol) / 16
        F = four_values(table, zz, sub_tol)
        Fa = four_values(table, za, sub_tol)
        Fb = four_values(table, zb, sub_tol)
        sN, sD = cpair(F[SIN_N]), cpair(F[SIN_D])
        cN, cD = cpair(F[COS_N]), cpair(F[COS_D])
        sNa, sDa, cNa, cDa = (cpair(Fa[k]) for k in (SIN_N, SIN_D, COS_N, COS_D))
        sNb, sDb, cNb, cDb = (cpair(Fb[k]) for k in (SIN_N, SIN_D, COS_N, COS_D))
        zp = (zz, mpf(0))
        res = []
        # sinN
        rhs = cadd(cscale(mp.sqrt(m1 / r1), cmul(sNa, cDb)),
                   cscale(mp.sqrt(m2 / r2), cmul(cNa, sNb)),
                   cscale(-g * mp.sqrt(m1 * m2 / (r1 * r2)), cmul(zp, cmul(sNa, sNb))))
        res.append(cadd(sN, cneg(rhs)))
        # sinD
        rhs = cadd(cscale(mp.sqrt(r1 / m1), cmul(sDa, cNb)),
                   cscale(mp.sqrt(r2 / m2), cmul(cDa, sDb)),
                   cscale(g, cmul(zp, cmul(cDa, cNb))))
        res.append(cadd(sD, cneg(rhs)))
        # cosN
        rhs = cadd(cmul(cNa, cNb),
                   cscale(-mp.sqrt(r2 * m1 / (r1 * m2)), cmul(sNa, sDb)),
                   cscale(-g * mp.sqrt(m1 / r1), cmul(zp, cmul(sNa, cNb))))
        res.append(cadd(cN, cneg(rhs)))
        # cosD
        rhs = cadd(cmul(cDa, cDb),
                   cscale(-mp.sqrt(r1 * m2 / (r2 * m1)), cmul(sDa, sNb)),
                   cscale(-g * mp.sqrt(m2 / r2), cmul(zp, cmul(cDa, sNb))))
        res.append(cadd(cD, cneg(rhs)))
        return res
