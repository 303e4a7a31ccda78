"""Parameter model for two-map self-similar measures on [0,1].

A measure is specified by contraction ratios r1, r2 and weights m1, m2 with
r1 + r2 <= 1 and m1 + m2 = 1.  The maps are S1(x) = r1*x and
S2(x) = r2*x + 1 - r2; the invariant measure satisfies
mu = m1*(S1 mu) + m2*(S2 mu).

Two numeric backends exist: exact rationals (``fractions.Fraction``) when all
four parameters are rational and satisfy the constraints exactly, and mpmath
floats at a caller-chosen number of working digits otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

from mpmath import mp, mpf

from .errors import ValidationError

Rational = Fraction
Scalar = Union[Fraction, mpf]

EXACT = "exact"
REAL = "real"

# extra digits carried above working_digits when storing real parameters
_PARAM_GUARD = 40


def parse_rational(value) -> Optional[Fraction]:
    """Parse ``value`` as an exact rational, or return None.

    Accepts Fraction, int, and strings of the form "1/3" or "0.625".
    Floats and mpf values are rejected here on purpose: a binary float is
    almost never the rational the caller meant.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            return None
    return None


@dataclass(frozen=True)
class MeasureParams:
    """Validated (r1, r2, m1, m2) quadruple plus the precision contract."""

    r1: Scalar
    r2: Scalar
    m1: Scalar
    m2: Scalar
    working_digits: int = 50

    @property
    def backend(self) -> str:
        return EXACT if isinstance(self.r1, Fraction) else REAL

    @property
    def exact(self) -> bool:
        return self.backend == EXACT

    @property
    def gap(self) -> Scalar:
        """1 - (r1 + r2), the Lebesgue measure of the central gap."""
        return 1 - self.r1 - self.r2

    def as_mpf(self, dps: Optional[int] = None) -> tuple:
        """The quadruple as mpf values at ``dps`` digits (default: stored)."""
        with mp.workdps(dps or self.working_digits + _PARAM_GUARD):
            if self.exact:
                return tuple(mpf(v.numerator) / v.denominator
                             for v in (self.r1, self.r2, self.m1, self.m2))
            return tuple(+mpf(v) for v in (self.r1, self.r2, self.m1, self.m2))

    def text(self) -> str:
        """Canonical comma-separated form, round-trippable through validate."""
        if self.exact:
            return ",".join(str(v) for v in (self.r1, self.r2, self.m1, self.m2))
        with mp.workdps(self.working_digits + _PARAM_GUARD):
            return ",".join(mp.nstr(v, self.working_digits + 20)
                            for v in (self.r1, self.r2, self.m1, self.m2))

    def key(self) -> str:
        """Stable identity string (used for caching)."""
        return f"{self.backend}:{self.text()}:wd{self.working_digits}"

    def __repr__(self):  # keep reprs short; mpf reprs are long
        return f"MeasureParams({self.text()}, wd={self.working_digits})"


@dataclass(frozen=True)
class MeasureClass:
    """Structural flags deciding which spectral theorems apply."""

    is_lebesgue: bool
    is_symmetric: bool
    has_renormalization: bool
    dirichlet_equals_neumann: bool
    renorm_factor: Optional[Scalar]  # 1/(r1*m1), present iff has_renormalization


def validate(raw, working_digits: int = 50, backend: str = "auto") -> MeasureParams:
    """Validate a parameter quadruple and choose the numeric backend.

    ``raw`` is an iterable of four entries (strings, Fractions, ints, floats
    or mpf).  The exact backend is chosen when every entry parses as a
    rational and the constraints hold exactly; otherwise the quadruple is
    treated as a decimal approximation and checked within
    10^(1 - working_digits).
    """
    items = list(raw)
    if len(items) != 4:
        raise ValidationError(f"need exactly 4 parameters, got {len(items)}")
    if working_digits < 1:
        raise ValidationError("working_digits must be positive")
    if backend not in ("auto", EXACT, REAL):
        raise ValidationError(f"unknown backend {backend!r}")

    rats = [parse_rational(v) for v in items]
    have_exact = all(r is not None for r in rats)
    if backend == EXACT and not have_exact:
        raise ValidationError("exact backend requested but parameters are not rational")

    if have_exact and backend != REAL:
        r1, r2, m1, m2 = rats
        _check_positive(r1, r2, m1, m2)
        if r1 + r2 > 1:
            raise ValidationError(f"r1 + r2 = {r1 + r2} > 1 (overlapping maps are out of scope)")
        if m1 + m2 == 1:
            return MeasureParams(r1, r2, m1, m2, working_digits)
        # rational but m1+m2 != 1 exactly: fall through and treat the input
        # as a decimal approximation of real parameters
    with mp.workdps(working_digits + _PARAM_GUARD):
        vals = []
        for v, r in zip(items, rats):
            if r is not None:
                vals.append(mpf(r.numerator) / r.denominator)
            else:
                try:
                    vals.append(mpf(v))
                except (TypeError, ValueError) as exc:
                    raise ValidationError(f"cannot parse parameter {v!r}") from exc
        r1, r2, m1, m2 = vals
        _check_positive(r1, r2, m1, m2)
        tol = mpf(10) ** (1 - working_digits)
        if r1 + r2 > 1 + tol:
            raise ValidationError(f"r1 + r2 = {mp.nstr(r1 + r2, 8)} > 1 (overlapping maps are out of scope)")
        if abs(m1 + m2 - 1) > tol:
            raise ValidationError(f"m1 + m2 = {mp.nstr(m1 + m2, 8)} != 1")
        return MeasureParams(r1, r2, m1, m2, working_digits)


def _check_positive(r1, r2, m1, m2):
    for name, v in (("r1", r1), ("r2", r2), ("m1", m1), ("m2", m2)):
        if not v > 0:
            raise ValidationError(f"{name} = {v} must be positive")


def classify(params: MeasureParams) -> MeasureClass:
    """Compute the structural flags of a validated parameter set.

    Exact backend: all comparisons are exact.  Real backend: equalities hold
    within 10^(5 - working_digits), so decimal renderings of exact values
    classify correctly.
    """
    r1, r2, m1, m2 = params.r1, params.r2, params.m1, params.m2
    if params.exact:
        def eq(a, b):
            return a == b
    else:
        with mp.workdps(params.working_digits + _PARAM_GUARD):
            tol = mpf(10) ** (5 - params.working_digits)

        def eq(a, b):
            return abs(a - b) <= tol * max(1, abs(a), abs(b))

    is_lebesgue = eq(r1, m1) and eq(r2, m2) and eq(r1 + r2, 1)
    is_symmetric = eq(r1, r2) and eq(m1, m2)
    has_renorm = eq(r1 * m1, r2 * m2)
    d_eq_n = eq(r1, m2) and eq(r2, m1)
    if has_renorm:
        factor = 1 / (r1 * m1) if params.exact else None
        if factor is None:
            with mp.workdps(params.working_digits + _PARAM_GUARD):
                factor = 1 / (r1 * m1)
    else:
        factor = None
    return MeasureClass(
        is_lebesgue=is_lebesgue,
        is_symmetric=is_symmetric,
        has_renormalization=has_renorm,
        dirichlet_equals_neumann=d_eq_n,
        renorm_factor=factor,
    )
