"""Eigenvalues of -(d/dmu)(d/dx) under N, D, ND and DN boundary conditions.

For a boundary condition bc the eigenvalues are the roots of a power series
in lam (the "characteristic" function): coefficients p_{2n+1} for Neumann,
q_{2n+1} for Dirichlet, p_{2n} for (ND) and q_{2n} for (DN), each with signs
(-1)^n.  Roots are located by a certified scan whose intervals are examined
recursively: a sign change isolates a root, and a derivative sign change
without a value sign change marks a dip that may hide a close pair (the
spectra here contain pairs agreeing to 20+ digits).  Refinement is
safeguarded Newton iteration inside the isolating bracket; every reported
digit is backed by a certified sign change across lam*(1 +- 10^-digits).

Index integrity rests on three layers: the recursive examination of every
scan interval, midpoint re-verification between accepted roots, and (for
Neumann spectra with r1*m1 = r2*m2) the exact index-doubling law
lam_{2m} = lam_m / (r1*m1).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

from mpmath import mp, mpf

from . import pq, series
from .errors import (ClusterUnresolved, OverlapUnresolvable, PrecisionExhausted,
                     ScanInconclusive, TableTooShallow, ValidationError,
                     VerificationFailure)
from .measure import MeasureParams, classify
from .pq import P_EVEN, P_ODD, Q_EVEN, Q_ODD

NEUMANN = "N"
DIRICHLET = "D"
MIXED_ND = "ND"
MIXED_DN = "DN"

_FAMILY = {NEUMANN: P_ODD, DIRICHLET: Q_ODD, MIXED_ND: P_EVEN, MIXED_DN: Q_EVEN}

ROOT_FOUND = "root_found"
RENORMALIZED = "renormalized"
SYNTHETIC = "synthetic"

_SCOUT_REL = 14          # relative digits used while scanning
_MAX_REL_EXTRA = 90      # certification ladder headroom beyond requested digits
_VERIFY_PROBES = 8       # midpoints checked between consecutive roots


@dataclass(frozen=True)
class EigenvalueRecord:
    bc: str
    m: int
    lam: mpf
    digits: int
    provenance: str = ROOT_FOUND
    renorm_source: Optional[int] = None
    degree_used: int = 0

    def to_dict(self) -> dict:
        return {
            "bc": self.bc,
            "m": self.m,
            "lambda": mp.nstr(self.lam, self.digits + 2),
            "digits": self.digits,
            "provenance": self.provenance
                          + (f"(from {self.renorm_source})" if self.renorm_source else ""),
            "degree_used": self.degree_used,
        }


def two_adic_valuation(m: int) -> int:
    """Largest v with 2^v dividing m."""
    if m < 1:
        raise ValidationError("m must be a positive integer")
    return (m & -m).bit_length() - 1


def characteristic(bc: str, table: pq.PQTable, lam, tol) -> series.CertifiedValue:
    """Certified value of the characteristic series of ``bc`` at lam >= 0."""
    if bc not in _FAMILY:
        raise ValidationError(f"unknown boundary condition {bc!r}")
    if not lam >= 0:
        raise ValidationError("lam must be >= 0")
    cv, _n, _amp = series._eval_weighted(table, _FAMILY[bc], lam, tol, False)
    return cv


class _CharEvaluator:
    """Adaptive scale-aware evaluator of one characteristic series.

    Evaluations target an error of 10^-rel_digits relative to the
    alternating sum's own amplitude, which is what certified sign
    determination needs; the table is extended (in degree, and in precision
    when its coefficient noise becomes the limit) on demand.
    """

    def __init__(self, bc: str, params: MeasureParams, digits: int):
        self.bc = bc
        self.family = _FAMILY[bc]
        self.params = params
        self.digits = digits
        self.table_dps = params.working_digits + 20
        # root finding is numeric work: always use the float backend
        self.table = pq.get_table(params, 64, self.table_dps, backend=pq.REAL)
        self._amps: dict = {}  # (kind, lam octave) -> last seen series amplitude
        self.evals = 0
        self.max_degree = 0

    def _grow(self, n_max=None, more_dps=0):
        if more_dps:
            self.table_dps += more_dps
        self.table = pq.get_table(self.params, n_max or self.table.n_max,
                                  self.table_dps, backend=pq.REAL)

    @staticmethod
    def _octave(lam) -> int:
        x = float(lam)
        return max(-40, min(60, int(x).bit_length())) if x >= 1 else 0

    def value(self, lam, rel_digits) -> Tuple[mpf, mpf]:
        """(value, certified total error) of the series at lam."""
        return self._eval(lam, rel_digits, derivative=False)

    def derivative(self, lam, rel_digits) -> Tuple[mpf, mpf]:
        return self._eval(lam, rel_digits, derivative=True)

    def _eval(self, lam, rel_digits, derivative):
        rel_digits = min(rel_digits, self.params.working_digits + 40)
        key = (derivative, self._octave(lam))
        for _ in range(24):
            with mp.workdps(20):
                tol = self._amps.get(key, mpf(1)) * mpf(10) ** (-rel_digits)
            try:
                if derivative:
                    cv, n, amp = self._eval_deriv(lam, tol)
                else:
                    cv, n, amp = series._eval_weighted(self.table, self.family, lam, tol,
                                                       False, rel_ok=True)
            except TableTooShallow as exc:
                need = exc.required_n_max or 2 * self.table.n_max
                self._grow(n_max=max(need, self.table.n_max + 32))
                continue
            except PrecisionExhausted:
                self._grow(more_dps=60)
                continue
            self.evals += 1
            self.max_degree = max(self.max_degree, n)
            with mp.workdps(20):
                amp = max(mpf(1), amp)
                old = self._amps.get(key)
                self._amps[key] = amp
                stale = old is None or amp > old * 2 or amp < old / 2
                ok = (cv.tail_bound <= amp * mpf(10) ** (-rel_digits) * 2
                      or cv.tail_bound <= abs(cv.value)
                      * mpf(10) ** (-max(8, rel_digits // 3)))
            if ok:
                return cv.value, cv.tail_bound
            if stale:
                continue  # the target came from a stale amplitude guess
            self._grow(more_dps=60)
        raise PrecisionExhausted(f"evaluator did not stabilize at lam={mp.nstr(mpf(lam), 8)}")

    def _eval_deriv(self, lam, tol):
        table = self.table
        n_terms = series.required_terms(table, self.family, lam, mpf(tol) / 2, weight=1)
        if n_terms > table.levels:
            raise TableTooShallow("derivative needs deeper table",
                                  required_n_max=2 * n_terms + 3)
        trunc = series.tail_bound(table, self.family, n_terms, lam, weight=1)
        key = ("dcoeffs", self.family)
        dco = table._aux.get(key)
        if dco is None:
            co = series._mpf_coeffs(table, self.family)
            dco = [n * co[n] for n in range(1, len(co))]
            table._aux[key] = dco
        noise_dps = table.dps if table.backend == pq.REAL else 10 ** 9
        wd = self.params.working_digits
        dps = wd + 12
        for _ in range(6):
            with mp.workdps(dps):
                val, absval = series._horner(dco, mpf(lam), n_terms - 1, True)
                val = -val  # d/dlam sum c_n (-lam)^n = -sum (n c_n) (-lam)^(n-1)
                rounding = absval * (n_terms + 5) * mpf(10) ** (2 - min(dps, noise_dps))
            if rounding <= mpf(tol) / 2 or rounding <= abs(val) * mpf(10) ** (-wd):
                cv = series.CertifiedValue(val, (trunc + rounding) * series._SLACK)
                return cv, n_terms, absval
            if dps >= noise_dps:
                raise PrecisionExhausted("table precision caps derivative accuracy")
            dps = int(dps * 1.6) + 10
        raise PrecisionExhausted("derivative rounding did not stabilize")

    def sign(self, lam, rel_digits) -> int:
        v, e = self.value(lam, rel_digits)
        if abs(v) <= e:
            return 0
        return 1 if v > 0 else -1

    def sign_hard(self, lam, start_rel=None) -> int:
        """Sign with a precision ladder; 0 only after the ladder is spent."""
        rel = start_rel or _SCOUT_REL
        top = self.digits + _MAX_REL_EXTRA
        while True:
            s = self.sign(lam, rel)
            if s != 0:
                return s
            if rel >= top:
                return 0
            rel = min(top, rel * 2 + 10)


@dataclass
class _Probe:
    lam: mpf
    s: int        # certified sign of the value (ladder-backed)
    v: mpf
    err: mpf
    ds: int       # derivative sign at scout precision (0 = undecided)
    dmag: mpf     # |derivative| magnitude estimate


class _Walker:
    """Certified scan: recursive interval examination over probe nodes."""

    # relative widths: flips isolated down to _COARSE before refinement;
    # same-sign dips chased down to res_floor before giving up
    _COARSE = mpf("1e-3")

    def __init__(self, ev: _CharEvaluator, digits: int):
        self.ev = ev
        self.digits = digits
        self.res_floor = mpf(10) ** (-digits - 6)
        self._probes: dict = {}

    def probe(self, lam) -> _Probe:
        got = self._probes.get(lam)
        if got is not None:
            return got
        ev = self.ev
        v, e = ev.value(lam, _SCOUT_REL)
        if abs(v) <= e:
            s = ev.sign_hard(lam)
            v, e = ev.value(lam, _SCOUT_REL * 2)
        else:
            s = 1 if v > 0 else -1
        # the derivative sign steers the dip search, so ladder it a bit too
        rel = _SCOUT_REL
        while True:
            dv, de = ev.derivative(lam, rel)
            if abs(dv) > de or rel >= self.digits + 40:
                break
            rel = rel * 2 + 8
        ds = 0 if abs(dv) <= de else (1 if dv > 0 else -1)
        got = _Probe(lam, s, v, e, ds, abs(dv) + de)
        self._probes[lam] = got
        return got

    def examine(self, a: _Probe, b: _Probe, depth: int = 0) -> List[Tuple]:
        """Brackets of all roots detectable in [a.lam, b.lam].

        Evidence is node-based: the interval is split until each returned
        bracket shows a certified sign change across an interval of relative
        width <= _COARSE with consistent derivative signs, and every
        discarded interval either shows no sign activity or carries a
        certified value too large to reach zero under the locally observed
        slope.
        """
        width = b.lam - a.lam
        rel = width / a.lam
        flip = a.s != 0 and b.s != 0 and a.s != b.s
        dquiet = a.ds != 0 and b.ds != 0 and a.ds == b.ds
        if flip and dquiet and rel <= self._COARSE:
            return [(a.lam, b.lam, a.s)]
        if not flip and dquiet:
            return []
        if not flip:
            # same sign at both ends: a pair can only hide if the value can
            # actually descend to zero at the observed slope scale
            slope = max(a.dmag, b.dmag)
            low = min(abs(a.v) - a.err, abs(b.v) - b.err)
            if low > 4 * slope * width:
                return []
        if rel <= self.res_floor:
            if flip:
                return [(a.lam, b.lam, a.s)]
            raise ClusterUnresolved(
                f"unresolved dip near {mp.nstr(a.lam, self.digits)}",
                bracket=(a.lam, b.lam))
        if depth > 140:
            raise ScanInconclusive(f"interval examination too deep near {mp.nstr(a.lam, 10)}")
        mid = self.probe((a.lam + b.lam) / 2)
        if mid.s == 0:
            raise ClusterUnresolved(
                f"sign undecidable at {mp.nstr(mid.lam, self.digits)}",
                bracket=(a.lam, b.lam))
        return (self.examine(a, mid, depth + 1)
                + self.examine(mid, b, depth + 1))

    def collect(self, count: Optional[int], lam_max=None) -> List[Tuple]:
        """Ordered brackets of the first roots (count, or all below lam_max)."""
        ev = self.ev
        with mp.workdps(ev.params.working_digits + 20):
            x = mpf("1e-8")
            px = self.probe(x)
            if px.s == 0:
                raise ScanInconclusive("sign at the left end of the scan undecidable")
            step = mpf("0.25")
            brackets: List[Tuple] = []
            last_root_hi = None
            last_gap = None
            for _ in range(200000):
                if lam_max is not None and x >= lam_max:
                    break
                if lam_max is None and len(brackets) >= count:
                    break
                y = x + step
                if lam_max is not None and y > mpf(lam_max) * mpf("1.03"):
                    y = mpf(lam_max) * mpf("1.03")
                py = self.probe(y)
                found = self.examine(px, py)
                if found:
                    brackets.extend(found)
                    hi = found[-1][1]
                    if last_root_hi is not None:
                        last_gap = hi - last_root_hi
                    else:
                        last_gap = hi
                    last_root_hi = hi
                    step = max(last_gap / 4, y * mpf("1e-7"))
                else:
                    growth = 2 if last_root_hi is None else mpf("1.35")
                    cap = y / 3 if last_gap is None else max(3 * last_gap, y * mpf("0.002"))
                    step = min(step * growth, cap)
                x, px = y, py
            else:
                raise ScanInconclusive("scan exhausted its node budget")
            return brackets

    def verify_gaps(self, roots: List[mpf], lo) -> List[Tuple]:
        """Probe between consecutive roots; return brackets of missed roots."""
        found: List[Tuple] = []
        with mp.workdps(self.ev.params.working_digits + 20):
            u = mpf(10) ** (-self.digits)
            edges = [mpf(lo)] + list(roots)
            for k in range(len(edges) - 1):
                a = edges[k] * (1 + u) if k > 0 else edges[k]
                b = edges[k + 1] * (1 - u)
                if not b > a:
                    continue
                xs = [a + (b - a) * j / (_VERIFY_PROBES + 1)
                      for j in range(_VERIFY_PROBES + 2)]
                probes = [self.probe(t) for t in xs]
                for j in range(len(xs) - 1):
                    found.extend(self.examine(probes[j], probes[j + 1]))
        return found


def _bisect_refine(ev: _CharEvaluator, a, b, sa, digits) -> Tuple[mpf, int]:
    """Safeguarded Newton/bisection inside a certified sign-change bracket."""
    wd = ev.params.working_digits
    hi_rel = digits + 10
    with mp.workdps(wd + 20):
        a, b = mpf(a), mpf(b)
        target = mpf(10) ** (-digits - 2)
        newton_from = mpf("1e-2")
        for _ in range(int(3.4 * (digits + 8)) + 40):
            width = (b - a) / a
            if width <= target:
                break
            cand = None
            if width < newton_from:
                x0 = (a + b) / 2
                fv, fe = ev.value(x0, hi_rel)
                drel = 25 if width > mpf("1e-18") else hi_rel
                dv, de = ev.derivative(x0, min(hi_rel, drel))
                if abs(dv) > de:
                    x1 = x0 - fv / dv
                    if a < x1 < b:
                        cand = x1
            if cand is None:
                cand = (a + b) / 2
            s = ev.sign_hard(cand)
            if s == 0:
                raise ClusterUnresolved(
                    f"sign at {mp.nstr(cand, digits)} undecidable", bracket=(a, b))
            if s == sa:
                a = cand
            else:
                b = cand
        x = (a + b) / 2
        # final certification across x*(1 +- 10^-digits)
        u = mpf(10) ** (-digits)
        lo, hi = x * (1 - u), x * (1 + u)
        if lo > a:
            s_lo = ev.sign_hard(lo, start_rel=digits + 8)
        else:
            s_lo = sa
        if hi < b:
            s_hi = ev.sign_hard(hi, start_rel=digits + 8)
        else:
            s_hi = -sa
        if s_lo == 0 or s_hi == 0 or s_lo == s_hi:
            raise ClusterUnresolved(
                f"could not certify {digits} digits at {mp.nstr(x, digits)}",
                bracket=(a, b))
        return x, ev.max_degree


def find_eigenvalues(bc: str, params: MeasureParams, count: Optional[int],
                     digits: int, lam_max=None,
                     use_renorm: bool = False) -> List[EigenvalueRecord]:
    """First ``count`` positive eigenvalues (or all below ``lam_max``).

    Each record carries >= ``digits`` certified significant digits.  Index
    integrity is enforced by midpoint verification between consecutive
    roots plus, for Neumann spectra with r1*m1 = r2*m2, the index-doubling
    cross-check.
    """
    if bc not in _FAMILY:
        raise ValidationError(f"unknown boundary condition {bc!r}")
    if lam_max is None and (count is None or count < 1):
        raise ValidationError("count must be >= 1")
    if digits > params.working_digits:
        raise ValidationError(
            f"digits={digits} exceeds working_digits={params.working_digits}")
    cls = classify(params)
    ev = _CharEvaluator(bc, params, digits)
    walker = _Walker(ev, digits)
    brackets = walker.collect(count, lam_max)
    if not brackets:
        raise ScanInconclusive("no eigenvalues found in the requested range")
    lams = []
    degs = []
    for (a, b, sa) in brackets:
        x, d = _bisect_refine(ev, a, b, sa, digits)
        lams.append(x)
        degs.append(d)

    for _round in range(3):
        missing = walker.verify_gaps(lams, lams[0] / 64)
        renorm_ok = True
        if not missing and bc == NEUMANN and cls.has_renormalization:
            renorm_ok = _renorm_consistent(params, lams, digits)
        if not missing and renorm_ok:
            break
        if missing:
            for (a, b, sa) in missing:
                x, d = _bisect_refine(ev, a, b, sa, digits)
                lams.append(x)
                degs.append(d)
            order = sorted(range(len(lams)), key=lambda i: lams[i])
            lams = [lams[i] for i in order]
            degs = [degs[i] for i in order]
        else:
            raise ScanInconclusive(
                "renormalization cross-check failed: an eigenvalue was missed")
    else:
        raise ScanInconclusive("eigenvalue index verification did not stabilize")

    if lam_max is not None:
        keep = [i for i, x in enumerate(lams) if x <= lam_max]
        if count is not None:
            keep = keep[:count]
    else:
        keep = list(range(count))
    records = [EigenvalueRecord(bc, j + 1, lams[i], digits, ROOT_FOUND,
                                degree_used=degs[i])
               for j, i in enumerate(keep)]
    if use_renorm and bc == NEUMANN and cls.has_renormalization:
        records = [_renormalized_record(params, records, rec) for rec in records]
    return records


def _renorm_consistent(params: MeasureParams, lams: List[mpf], digits: int) -> bool:
    with mp.workdps(params.working_digits + 20):
        r1, r2, m1, m2 = params.as_mpf()
        X = r1 * m1
        tol = mpf(10) ** (-min(digits, 14) + 2)
        for m in range(1, len(lams) // 2 + 1):
            if abs(X * lams[2 * m - 1] - lams[m - 1]) > tol * lams[m - 1]:
                return False
    return True


def _renormalized_record(params, records, rec) -> EigenvalueRecord:
    if rec.m % 2 == 1:
        return rec
    src = records[rec.m // 2 - 1]
    with mp.workdps(params.working_digits + 20):
        r1, r2, m1, m2 = params.as_mpf()
        derived = src.lam / (r1 * m1)
        u = mpf(10) ** (-rec.digits)
        if abs(derived - rec.lam) > u * rec.lam * 10:
            raise ScanInconclusive(
                f"renormalized value for m={rec.m} disagrees with the root found")
    return replace(rec, lam=derived, provenance=RENORMALIZED,
                   renorm_source=src.m, degree_used=src.degree_used)


def neumann_ground(params: MeasureParams) -> EigenvalueRecord:
    """The synthetic (N, 0) record: lam = 0, eigenfunction identically 1."""
    return EigenvalueRecord(NEUMANN, 0, mpf(0), params.working_digits, SYNTHETIC)


def renormalize_up(params: MeasureParams, rec: EigenvalueRecord) -> EigenvalueRecord:
    """Map the (N, m) record to (N, 2m) via lam_{2m} = lam_m / (r1*m1)."""
    cls = classify(params)
    if not cls.has_renormalization:
        raise ValidationError("renormalization requires r1*m1 = r2*m2")
    if rec.bc != NEUMANN:
        raise ValidationError("the index-doubling law holds for Neumann eigenvalues only")
    if rec.m < 1:
        raise ValidationError("need a positive index")
    with mp.workdps(params.working_digits + 20):
        r1, r2, m1, m2 = params.as_mpf()
        lam2 = rec.lam / (r1 * m1)
    return EigenvalueRecord(NEUMANN, 2 * rec.m, lam2, rec.digits, RENORMALIZED,
                            renorm_source=rec.m, degree_used=rec.degree_used)


def dn_lift_symmetric(params: MeasureParams, lam, digits: int = 13) -> mpf:
    """(2/r) * lam for a mixed-boundary eigenvalue of a symmetric measure.

    Certifies that the lifted value is a Dirichlet eigenvalue by a sign
    change of the Dirichlet characteristic across it.
    """
    cls = classify(params)
    if not cls.is_symmetric:
        raise ValidationError("the lift requires a symmetric measure (r1=r2, m1=m2)")
    with mp.workdps(params.working_digits + 20):
        r1, _, _, _ = params.as_mpf()
        lifted = 2 * mpf(lam) / r1
        ev = _CharEvaluator(DIRICHLET, params, digits)
        u = mpf(10) ** (-digits)
        s_lo = ev.sign_hard(lifted * (1 - u), start_rel=digits + 8)
        s_hi = ev.sign_hard(lifted * (1 + u), start_rel=digits + 8)
    if s_lo == 0 or s_hi == 0 or s_lo == s_hi:
        raise VerificationFailure(
            f"lifted value {mp.nstr(lifted, digits)} shows no Dirichlet sign change")
    return lifted


@dataclass
class InterlacingReport:
    """Descriptive check of the N,N,D,D,N,N,... ordering conjecture."""

    entries: List[dict]
    verdict: str                 # "holds" | "violated" | "degenerate"
    violations: List[str]
    ties: List[str]

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "violations": self.violations,
                "ties": self.ties, "entries": self.entries}


def interlacing_report(neumann: List[EigenvalueRecord],
                       dirichlet: List[EigenvalueRecord]) -> InterlacingReport:
    """Merge the two sequences and compare with the conjectured pattern.

    The verdict is informational: "violated" is a legitimate outcome (the
    ordering is only conjectured for r1*m1 = r2*m2).  Coinciding N/D values
    (within certified uncertainty) are reported as degenerate ties.
    """
    if not neumann or not dirichlet:
        raise ValidationError("need at least one eigenvalue of each kind")
    cut = min(neumann[-1].lam, dirichlet[-1].lam)
    recs = [r for r in neumann + dirichlet if r.lam <= cut and r.m > 0]
    recs.sort(key=lambda r: r.lam)
    ties = []
    for i in range(len(recs) - 1):
        a, b = recs[i], recs[i + 1]
        if a.bc != b.bc:
            tol = a.lam * (mpf(10) ** (-a.digits) + mpf(10) ** (-b.digits))
            gap = abs(b.lam - a.lam)
            if gap <= tol:
                ties.append(f"{a.bc}{a.m} ~ {b.bc}{b.m} at {mp.nstr(a.lam, 10)}")
            elif gap <= 10 * tol:
                raise OverlapUnresolvable(
                    f"{a.bc}{a.m} and {b.bc}{b.m} too close to order at "
                    f"{a.digits} certified digits")
    entries = [{"bc": r.bc, "m": r.m, "lambda": mp.nstr(r.lam, min(r.digits, 15))}
               for r in recs]
    if ties:
        return InterlacingReport(entries, "degenerate", [], ties)
    expected = []
    k = 1
    while len(expected) < len(recs):
        expected.extend([(NEUMANN, 2 * k - 1), (DIRICHLET, 2 * k - 1),
                         (DIRICHLET, 2 * k), (NEUMANN, 2 * k)])
        k += 1
    violations = []
    full = 4 * (len(recs) // 4)
    for i in range(full):
        got = (recs[i].bc, recs[i].m)
        if got != expected[i]:
            violations.append(
                f"position {i + 1}: expected {expected[i][0]}{expected[i][1]}, "
                f"found {got[0]}{got[1]}")
    verdict = "holds" if not violations else "violated"
    return InterlacingReport(entries, verdict, violations, [])
