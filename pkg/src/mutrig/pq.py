"""Coefficient sequences p_n = p_n(1), q_n = q_n(1) of the measure.

The sequences generalize 1/n! (to which both reduce for the Lebesgue
measure).  They are built level by level from the self-similar recursion;
level n produces indices 2n and 2n+1 and consumes only lower indices.  With
X = r1*m1, Y = r2*m2 and g = 1 - r1 - r2 the four rules read

  p_{2n}   = [ sum_{1<=i<n} X^i Y^(n-i) p_{2i} p_{2n-2i}
             + (m1/m2) sum_{0<=i<n} X^i Y^(n-i) p_{2i+1} q_{2n-2i-1}
             + g m1    sum_{0<=i<n} X^i Y^(n-1-i) p_{2i+1} p_{2n-2i-2} ] / (1 - X^n - Y^n)
  q_{2n}   = [ sum_{1<=i<n} X^i Y^(n-i) q_{2i} q_{2n-2i}
             + r1 m2   sum_{0<=i<n} X^i Y^(n-1-i) q_{2i+1} p_{2n-2i-1}
             + g m2    sum_{0<=i<n} X^i Y^(n-1-i) q_{2i}   p_{2n-2i-1} ] / (1 - X^n - Y^n)
  p_{2n+1} = [ m1 sum_{0<=i<n} X^i Y^(n-i) p_{2i+1} q_{2n-2i}
             + m2 sum_{1<=i<=n} X^i Y^(n-i) p_{2i} p_{2n-2i+1}
             + g m1 m2 sum_{0<=i<n} X^i Y^(n-1-i) p_{2i+1} p_{2n-2i-1} ] / (1 - m1 X^n - m2 Y^n)
  q_{2n+1} = [ r1 sum_{0<=i<n} X^i Y^(n-i) q_{2i+1} p_{2n-2i}
             + r2 sum_{1<=i<=n} X^i Y^(n-i) q_{2i} q_{2n-2i+1}
             + g  sum_{0<=i<=n} X^i Y^(n-i) q_{2i} p_{2n-2i} ] / (1 - r1 X^n - r2 Y^n)

All denominators are >= min(1-X-Y, 1-m1*X-m2*Y, 1-r1*X-r2*Y) > 0 for
admissible parameters, so the recursion never divides by zero; the real
backend still refuses to continue if a denominator drops below the noise
floor of the precision contract.

Certified truncation bounds for the series built on these coefficients come
in two flavors, and callers take the smaller:

* anchored factorial bound -- iterating the defining integrals one step
  multiplies an upper envelope c*w(x)^j/j! into c*w(x)^(j+1)/(j+1)! where
  w = q_2 for (p_odd, q_even) and w = p_2 for (q_odd, p_even).  Anchoring at
  the last computed coefficient gives
  coef_{N+j} <= coef_N * w^j / j!, hence a tail of the first neglected term
  times exp(w*x).

* quadratic-factorial envelope -- a machine-verified induction on the
  recursion itself shows coef_n <= A*sigma^n/(n!)^2 for all n, provided
  theta = 2*(X+Y) < 1 and a closure inequality holds past the directly
  verified range.  The tail then closes with the much smaller factor
  exp(2*sqrt(sigma*x)).  For the Lebesgue measure (theta = 1) the envelope
  (A, sigma) = (1, 1/4) holds because coef_n = 1/n! <= (1/4)^n/(n!)^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Optional, Tuple

from mpmath import mp, mpf

from .errors import PrecisionExhausted, ValidationError
from .measure import EXACT, REAL, MeasureParams, classify, parse_rational, validate

P_ODD = "p_odd"
Q_ODD = "q_odd"
P_EVEN = "p_even"
Q_EVEN = "q_even"

# guard digits carried through the recursion above working_digits
_TABLE_GUARD = 20


@dataclass
class Envelope:
    """Certified coef_n <= A * sigma^n / (n!)^2 for every family and n."""

    A: mpf
    sigma: mpf
    verified_levels: int


@dataclass
class PQTable:
    """Immutable view of p_0..p_{n_max}, q_0..q_{n_max}.

    ``dps`` records the precision the real backend carried; exact tables use
    dps = 0.  ``_aux`` caches derived data (envelope, norm inner sums) and
    never takes part in equality.
    """

    params: MeasureParams
    n_max: int
    p: List
    q: List
    backend: str
    dps: int = 0
    _aux: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def levels(self) -> int:
        """Largest n with both indices 2n and 2n+1 present."""
        return (self.n_max - 1) // 2

    def coeff(self, family: str, n: int):
        if family == P_ODD:
            return self.p[2 * n + 1]
        if family == Q_ODD:
            return self.q[2 * n + 1]
        if family == P_EVEN:
            return self.p[2 * n]
        if family == Q_EVEN:
            return self.q[2 * n]
        raise ValueError(f"unknown family {family!r}")

    def family(self, name: str) -> List:
        return [self.coeff(name, n) for n in range(self.levels + 1)]


def _rec_levels(params: MeasureParams, p, q, n_from, n_to, strict_guard):
    """Run the recursion for levels n_from..n_to, appending to p and q."""
    r1, r2, m1, m2 = params.r1, params.r2, params.m1, params.m2
    X, Y = r1 * m1, r2 * m2
    g = 1 - r1 - r2
    m1dm2 = m1 / m2
    one = p[0]
    Xp = [one]
    Yp = [one]
    for _ in range(n_to):
        Xp.append(Xp[-1] * X)
        Yp.append(Yp[-1] * Y)
    floor = None
    if strict_guard is not None:
        floor = mpf(10) ** (-strict_guard)
    for n in range(n_from, n_to + 1):
        d_even = 1 - Xp[n] - Yp[n]
        d_po = 1 - m1 * Xp[n] - m2 * Yp[n]
        d_qo = 1 - r1 * Xp[n] - r2 * Yp[n]
        if floor is not None and min(d_even, d_po, d_qo) < floor:
            raise PrecisionExhausted(
                f"recursion denominator below 1e-{strict_guard} at level {n}")
        s1 = sum(Xp[i] * Yp[n - i] * p[2 * i] * p[2 * n - 2 * i] for i in range(1, n))
        s2 = sum(Xp[i] * Yp[n - i] * p[2 * i + 1] * q[2 * n - 2 * i - 1] for i in range(n))
        s3 = sum(Xp[i] * Yp[n - 1 - i] * p[2 * i + 1] * p[2 * n - 2 * i - 2] for i in range(n))
        p.append((s1 + m1dm2 * s2 + g * m1 * s3) / d_even)
        s1 = sum(Xp[i] * Yp[n - i] * q[2 * i] * q[2 * n - 2 * i] for i in range(1, n))
        s2 = sum(Xp[i] * Yp[n - 1 - i] * q[2 * i + 1] * p[2 * n - 2 * i - 1] for i in range(n))
        s3 = sum(Xp[i] * Yp[n - 1 - i] * q[2 * i] * p[2 * n - 2 * i - 1] for i in range(n))
        q.append((s1 + r1 * m2 * s2 + g * m2 * s3) / d_even)
        s1 = sum(Xp[i] * Yp[n - i] * p[2 * i + 1] * q[2 * n - 2 * i] for i in range(n))
        s2 = sum(Xp[i] * Yp[n - i] * p[2 * i] * p[2 * n - 2 * i + 1] for i in range(1, n + 1))
        s3 = sum(Xp[i] * Yp[n - 1 - i] * p[2 * i + 1] * p[2 * n - 2 * i - 1] for i in range(n))
        p.append((m1 * s1 + m2 * s2 + g * m1 * m2 * s3) / d_po)
        s1 = sum(Xp[i] * Yp[n - i] * q[2 * i + 1] * p[2 * n - 2 * i] for i in range(n))
        s2 = sum(Xp[i] * Yp[n - i] * q[2 * i] * q[2 * n - 2 * i + 1] for i in range(1, n + 1))
        s3 = sum(Xp[i] * Yp[n - i] * q[2 * i] * p[2 * n - 2 * i] for i in range(n + 1))
        q.append((r1 * s1 + r2 * s2 + g * s3) / d_qo)


def compute_pq(params: MeasureParams, n_max: int, dps: Optional[int] = None,
               backend: str = "auto") -> PQTable:
    """Build the coefficient table up to index n_max (inclusive).

    Exact parameters produce exact rationals (reduced by construction);
    otherwise mpf values at ``dps`` digits, defaulting to
    working_digits + 20 guard digits plus a term-count allowance.  Passing
    backend="real" forces floats even for rational parameters (rational
    arithmetic gets prohibitively wide past a few hundred indices).
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    levels = (n_max + 1) // 2
    if params.exact and backend != REAL:
        p = [Fraction(1), Fraction(1)]
        q = [Fraction(1), Fraction(1)]
        _rec_levels(params, p, q, 1, levels, None)
        return PQTable(params, n_max, p[: n_max + 1], q[: n_max + 1], EXACT, 0)
    if dps is None:
        dps = params.working_digits + _TABLE_GUARD + int(mp.ceil(mp.log10(levels + 2)))
    with mp.workdps(dps):
        rp = MeasureParams(*params.as_mpf(dps), working_digits=params.working_digits)
        one = mpf(1)
        p = [one, one]
        q = [one, one]
        _rec_levels(rp, p, q, 1, levels, params.working_digits // 2)
        return PQTable(params, n_max, p[: n_max + 1], q[: n_max + 1], REAL, dps)


def extend(table: PQTable, n_max: int) -> PQTable:
    """A new table reaching ``n_max``, reusing already computed levels."""
    if n_max <= table.n_max:
        return table
    levels_have = table.levels
    levels = (n_max + 1) // 2
    # keep complete levels only, then resume
    keep = 2 * levels_have + 2
    p = list(table.p[:keep])
    q = list(table.q[:keep])
    if table.backend == EXACT:
        _rec_levels(table.params, p, q, levels_have + 1, levels, None)
        return PQTable(table.params, n_max, p[: n_max + 1], q[: n_max + 1], EXACT, 0)
    with mp.workdps(table.dps):
        rp = MeasureParams(*table.params.as_mpf(table.dps),
                           working_digits=table.params.working_digits)
        _rec_levels(rp, p, q, levels_have + 1, levels,
                    table.params.working_digits // 2)
    return PQTable(table.params, n_max, p[: n_max + 1], q[: n_max + 1], REAL, table.dps)


# ---------------------------------------------------------------------------
# shared table cache (tables are immutable; rebuilding them dominates runtime)

_CACHE: dict = {}


def get_table(params: MeasureParams, n_max: int, dps: Optional[int] = None,
              backend: str = "auto") -> PQTable:
    """Fetch a table from the process-wide cache, extending or rebuilding."""
    if params.exact and backend != REAL:
        key = (params.key(), EXACT)
        cur = _CACHE.get(key)
        if cur is None or cur.n_max < n_max:
            cur = extend(cur, n_max) if cur is not None else compute_pq(params, n_max)
            _CACHE[key] = cur
        return cur
    # bucket precision so nearby requests share one table
    want = dps or (params.working_digits + _TABLE_GUARD)
    bucket = 40 * ((want + 39) // 40)
    key = (params.key(), REAL, bucket)
    cur = _CACHE.get(key)
    if cur is None:
        cur = compute_pq(params, n_max, bucket, backend=REAL)
        _CACHE[key] = cur
    elif cur.n_max < n_max:
        cur = extend(cur, n_max)
        _CACHE[key] = cur
    return cur


def clear_cache():
    _CACHE.clear()


# ---------------------------------------------------------------------------
# certified growth data

def anchored_constants(table: PQTable) -> dict:
    """Per-family w with coef_{N+j} <= coef_N * w^j / j! (see module docs)."""
    p2 = table.p[2]
    q2 = table.q[2]
    return {P_ODD: q2, Q_EVEN: q2, Q_ODD: p2, P_EVEN: p2}


def envelope(table: PQTable) -> Optional[Envelope]:
    """Certify coef_n <= A*sigma^n/(n!)^2 across all four families.

    Returns None when the closure inequality cannot be established (then
    only the anchored factorial bound is available).  The result is cached
    on the table.
    """
    if "envelope" in table._aux:
        return table._aux["envelope"]
    result = _certify_envelope(table)
    table._aux["envelope"] = result
    return result


def _certify_envelope(table: PQTable) -> Optional[Envelope]:
    cls = classify(table.params)
    with mp.workdps(30):
        if cls.is_lebesgue:
            # coef_n is 1/(2n)! or 1/(2n+1)!; binom(2n,n) >= 4^n/(2*sqrt(n))
            # gives (n!)^2/(2n)! <= 2*sqrt(n)/4^n, and 2*sqrt(n)/1.04^n < 4.4
            # for all n, so (A, sigma) = (4.5, 0.26) is a proven envelope.
            return Envelope(A=mpf("4.5"), sigma=mpf("0.26"), verified_levels=table.levels)
        r1, r2, m1, m2 = table.params.as_mpf(40)
        X, Y = r1 * m1, r2 * m2
        theta = 2 * (X + Y)
        if theta >= 1:
            return None
        g = 1 - r1 - r2
        L = table.levels
        n_dec = int(mp.ceil(2 / mp.log(1 / theta)))  # n^2*theta^n decreasing beyond
        if L < max(12, n_dec):
            return None
        fams = [table.family(name) for name in (P_ODD, Q_ODD, P_EVEN, Q_EVEN)]
        if table.backend == EXACT:
            fams = [[mpf(c.numerator) / c.denominator for c in f] for f in fams]
        logfac2 = [mpf(0)]
        for n in range(1, L + 1):
            logfac2.append(logfac2[-1] + 2 * mp.log(n))
        # sigma from the tail of the verified range, A soaks up small n
        j0 = min(12, L // 2)
        log_sigma = max((mp.log(c[n]) + logfac2[n]) / n
                        for c in fams for n in range(j0, L + 1) if c[n] > 0)
        sigma = mp.exp(log_sigma) * mpf("1.02")
        logA = mpf(0)
        for c in fams:
            for n in range(1, L + 1):
                if c[n] > 0:
                    logA = max(logA, mp.log(c[n]) + logfac2[n] - n * mp.log(sigma))
        A = mp.exp(logA) * mpf("1.01")
        K = max(g * m1 * m2, (m1 / m2) * Y + g * m1, r1 * m2 + g * m2)
        D_lb = min(1 - X - Y, 1 - m1 * X - m2 * Y, 1 - r1 * X - r2 * Y)
        n1 = max(L + 1, n_dec)
        cond = A * (theta ** n1 + K * n1 * n1 * theta ** (n1 - 1) / sigma) / D_lb
        if not cond < mpf("0.999"):
            return None
        if n1 > L + 1:
            # closure only proven from n1 on; check L+1..n1 directly
            for n in range(L + 1, n1):
                c = A * (theta ** n + K * n * n * theta ** (n - 1) / sigma) / D_lb
                if not c < mpf("0.999"):
                    return None
        return Envelope(A=A, sigma=sigma, verified_levels=L)


# ---------------------------------------------------------------------------
# consistency checks

def symmetric_even_shortcut(table: PQTable, n: int):
    """p_{2n} for symmetric parameters via the half-alternating convolution.

    Independent of the main even-index rule; must agree with the tabled
    value exactly (exact backend) or to working precision.
    """
    if not classify(table.params).is_symmetric:
        raise ValidationError("shortcut only valid for symmetric parameters (r1=r2, m1=m2)")
    if 2 * n > table.n_max:
        raise ValidationError(f"need indices up to {2 * n}, table has {table.n_max}")
    p, q = table.p, table.q
    half = Fraction(1, 2) if table.backend == EXACT else mpf("0.5")
    return half * sum((-1) ** (k + 1) * p[k] * q[2 * n - k] for k in range(1, 2 * n))


def cross_identity_check(table: PQTable, n: int):
    """sum_{j=0}^{2n} (-1)^j q_j p_{2n-j}; zero for every n >= 1.

    This alternating convolution does not reuse the recursion that built the
    table, which makes it the primary anti-bug oracle.
    """
    if n == 0:
        return table.p[0] * table.q[0] - 1  # degenerate: identity starts at n=1
    if 2 * n > table.n_max:
        raise ValidationError(f"need indices up to {2 * n}, table has {table.n_max}")
    p, q = table.p, table.q
    return sum((-1) ** j * q[j] * p[2 * n - j] for j in range(2 * n + 1))


def binomial_analogue_check(table: PQTable, n: int) -> Tuple:
    """Residuals of the four unsolved self-similar identities at level n.

    Each residual is (right-hand side) - coefficient; all four vanish
    because the recursion is exactly these identities solved for the top
    term.
    """
    if 2 * n + 1 > table.n_max:
        raise ValidationError(f"need indices up to {2 * n + 1}, table has {table.n_max}")
    params = table.params
    r1, r2, m1, m2 = params.r1, params.r2, params.m1, params.m2
    X, Y = r1 * m1, r2 * m2
    g = 1 - r1 - r2
    p, q = table.p, table.q
    one = p[0]
    Xp = [one]
    Yp = [one]
    for _ in range(n + 1):
        Xp.append(Xp[-1] * X)
        Yp.append(Yp[-1] * Y)
    fo1 = (m1 * sum(Xp[i] * Yp[n - i] * p[2 * i + 1] * q[2 * n - 2 * i] for i in range(n + 1))
           + m2 * sum(Xp[i] * Yp[n - i] * p[2 * i] * p[2 * n - 2 * i + 1] for i in range(n + 1))
           + g * m1 * m2 * sum(Xp[i] * Yp[n - 1 - i] * p[2 * i + 1] * p[2 * n - 2 * i - 1]
                               for i in range(n))) - p[2 * n + 1]
    fo3 = (r1 * sum(Xp[i] * Yp[n - i] * q[2 * i + 1] * p[2 * n - 2 * i] for i in range(n + 1))
           + r2 * sum(Xp[i] * Yp[n - i] * q[2 * i] * q[2 * n - 2 * i + 1] for i in range(n + 1))
           + g * sum(Xp[i] * Yp[n - i] * q[2 * i] * p[2 * n - 2 * i] for i in range(n + 1))) - q[2 * n + 1]
    if n >= 1:
        fo2 = (sum(Xp[i] * Yp[n - i] * p[2 * i] * p[2 * n - 2 * i] for i in range(n + 1))
               + (m1 / m2) * sum(Xp[i] * Yp[n - i] * p[2 * i + 1] * q[2 * n - 2 * i - 1]
                                 for i in range(n))
               + g * m1 * sum(Xp[i] * Yp[n - 1 - i] * p[2 * i + 1] * p[2 * n - 2 * i - 2]
                              for i in range(n))) - p[2 * n]
        fo4 = (sum(Xp[i] * Yp[n - i] * q[2 * i] * q[2 * n - 2 * i] for i in range(n + 1))
               + r1 * m2 * sum(Xp[i] * Yp[n - 1 - i] * q[2 * i + 1] * p[2 * n - 2 * i - 1]
                               for i in range(n))
               + g * m2 * sum(Xp[i] * Yp[n - 1 - i] * q[2 * i] * p[2 * n - 2 * i - 1]
                              for i in range(n))) - q[2 * n]
    else:
        fo2 = fo4 = one - one
    return (fo1, fo2, fo3, fo4)


# ---------------------------------------------------------------------------
# brute-force oracle

def quadrature_oracle(params: MeasureParams, n: int, level: int) -> Tuple[float, float]:
    """Approximate (p_n, q_n) by atomizing mu at depth ``level``.

    The measure is replaced by 2^level atoms, one per cylinder cell
    S_w([0,1]), sitting at the image of the measure barycenter
    b = m2*(1-r2)/(1 - m1*r1 - m2*r2) with weight m_w.  Each cell also
    contributes its endpoints as quadrature nodes so the Lebesgue steps
    integrate the gap segments (where the integrands are affine) exactly.
    mu-integrals are cumulative sums with half weight at the evaluation
    node; Lebesgue integrals are trapezoidal over the node grid.

    Deliberately independent of the recursion: float arithmetic, no shared
    code path.  Converges at roughly O(max(r1,r2)^level).
    """
    if level < 1:
        raise ValidationError("level must be >= 1")
    if n < 0:
        raise ValidationError("n must be >= 0")
    r1, r2, m1, m2 = (float(v) for v in params.as_mpf(30))
    b = m2 * (1 - r2) / (1 - m1 * r1 - m2 * r2)
    cells = [(0.0, b, 1.0, 1.0)]
    for _ in range(level):
        left = [(r1 * lo, r1 * a, r1 * hi, m1 * w) for (lo, a, hi, w) in cells]
        right = [(r2 * lo + 1 - r2, r2 * a + 1 - r2, r2 * hi + 1 - r2, m2 * w)
                 for (lo, a, hi, w) in cells]
        cells = left + right
    grid = [0.0]
    wg = [0.0]
    for (lo, a, hi, w) in cells:
        grid.extend((lo, a, hi))
        wg.extend((0.0, w, 0.0))
    grid.append(1.0)
    wg.append(0.0)
    M = len(grid)

    def mu_step(f):
        out = [0.0] * M
        acc = 0.0
        for i in range(M):
            out[i] = acc + 0.5 * wg[i] * f[i]
            acc += wg[i] * f[i]
        return out

    def leb_step(f):
        out = [0.0] * M
        acc = 0.0
        for i in range(1, M):
            acc += 0.5 * (f[i] + f[i - 1]) * (grid[i] - grid[i - 1])
            out[i] = acc
        return out

    pv = [1.0] * M
    qv = [1.0] * M
    p_at_1, q_at_1 = 1.0, 1.0
    for k in range(1, n + 1):
        pv = mu_step(pv) if k % 2 == 1 else leb_step(pv)
        qv = leb_step(qv) if k % 2 == 1 else mu_step(qv)
        p_at_1, q_at_1 = pv[-1], qv[-1]
    return p_at_1, q_at_1


# ---------------------------------------------------------------------------
# serialization (on-disk cache format)

def table_to_json(table: PQTable) -> str:
    if table.backend == EXACT:
        p = [str(v) for v in table.p]
        q = [str(v) for v in table.q]
    else:
        with mp.workdps(table.dps):
            p = [mp.nstr(v, table.dps, strip_zeros=False) for v in table.p]
            q = [mp.nstr(v, table.dps, strip_zeros=False) for v in table.q]
    doc = {
        "params": {
            "values": table.params.text().split(","),
            "working_digits": table.params.working_digits,
        },
        "backend": table.backend,
        "n_max": table.n_max,
        "dps": table.dps,
        "p": p,
        "q": q,
    }
    return json.dumps(doc)


def table_from_json(text: str) -> PQTable:
    doc = json.loads(text)
    params = validate(doc["params"]["values"], doc["params"]["working_digits"],
                      backend="exact" if doc["backend"] == EXACT else "real")
    if doc["backend"] == EXACT:
        p = [parse_rational(v) for v in doc["p"]]
        q = [parse_rational(v) for v in doc["q"]]
        return PQTable(params, doc["n_max"], p, q, EXACT, 0)
    with mp.workdps(doc["dps"]):
        p = [mpf(v) for v in doc["p"]]
        q = [mpf(v) for v in doc["q"]]
    return PQTable(params, doc["n_max"], p, q, REAL, doc["dps"])
