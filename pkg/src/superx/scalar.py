"""Arbitrary-precision scalars and the special functions used by the builders.

``BigReal`` wraps an ``mpmath`` float together with an explicit precision in
bits.  Arithmetic is performed at the larger precision of the two operands
(correctly rounded by the mpmath backend); composite functions run with guard
bits internally and round once at the end, so results stay within 1 ulp of the
true value at the stated precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import mpmath
from mpmath import mp

DEFAULT_PRECISION = 256

# Extra working bits inside composite functions; the final result is rounded
# back to the stated precision.
GUARD_BITS = 32


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


ScalarLike = Union["BigReal", int, float, str, Fraction]


# ---------------------------------------------------------------------------
# exact decimal <-> binary conversion
# ---------------------------------------------------------------------------

def parse_decimal(text: str, precision: int) -> mpmath.mpf:
    """Parse a decimal literal to a correctly rounded mpf at ``precision``.

    Goes through an exact rational so the only rounding is the final one;
    a value that is exactly representable in ``precision`` bits is recovered
    bit-for-bit (the guarantee behind save/load round-trips).
    """
    s = text.strip()
    if not s:
        raise ValueError("empty decimal literal")
    frac = _decimal_to_fraction(s)
    with mp.workprec(precision):
        return +mpmath.mpmathify(frac)


def _decimal_to_fraction(s: str) -> Fraction:
    try:
        return Fraction(s)
    except ValueError as exc:
        raise ValueError(f"bad decimal literal: {s!r}") from exc


def decimal_str(x: mpmath.mpf) -> str:
    """Exact decimal representation of a binary float.

    Every finite mpf is a dyadic rational man*2**exp, hence has a *finite*
    decimal expansion; this emits it with trailing zeros stripped.  Parsing
    the string back at the original precision recovers the value exactly.
    """
    sign, man, exp, _ = x._mpf_
    if man == 0:
        if x == 0:
            return "0"
        raise ValueError(f"non-finite value cannot be serialized: {x!r}")
    man = int(man)
    prefix = "-" if sign else ""
    if exp >= 0:
        return prefix + str(man << exp)
    k = -exp
    digits = str(man * 5**k)
    if len(digits) <= k:
        digits = "0" * (k - len(digits) + 1) + digits
    int_part, frac_part = digits[:-k], digits[-k:]
    frac_part = frac_part.rstrip("0")
    if frac_part:
        return f"{prefix}{int_part}.{frac_part}"
    return prefix + int_part


# ---------------------------------------------------------------------------
# BigReal
# ---------------------------------------------------------------------------

def _coerce(x: ScalarLike, precision: int) -> mpmath.mpf:
    if isinstance(x, BigReal):
        return x.value
    if isinstance(x, str):
        return parse_decimal(x, precision)
    if isinstance(x, Fraction):
        with mp.workprec(precision):
            return +mpmath.mpmathify(x)
    with mp.workprec(precision):
        return +mpmath.mpf(x)


@dataclass(frozen=True)
class BigReal:
    """Immutable arbitrary-precision real with explicit precision in bits."""

    value: mpmath.mpf
    precision: int = DEFAULT_PRECISION

    def __post_init__(self):
        if self.precision <= 0:
            raise ValueError("precision_bits must be positive")

    # -- constructors -----------------------------------------------------
    @staticmethod
    def of(x: ScalarLike, precision: int = DEFAULT_PRECISION) -> "BigReal":
        if isinstance(x, BigReal):
            return x
        return BigReal(_coerce(x, precision), precision)

    @staticmethod
    def pi(precision: int = DEFAULT_PRECISION) -> "BigReal":
        with mp.workprec(precision):
            return BigReal(+mp.pi, precision)

    @staticmethod
    def sqrt_of(n: int, precision: int = DEFAULT_PRECISION) -> "BigReal":
        with mp.workprec(precision):
            return BigReal(mpmath.sqrt(n), precision)

    # -- conversions -------------------------------------------------------
    def to_decimal(self) -> str:
        return decimal_str(self.value)

    def as_fraction(self) -> Fraction:
        sign, man, exp, _ = self.value._mpf_
        if man == 0 and self.value != 0:
            raise ValueError("non-finite value")
        f = Fraction(int(man), 1)
        f = f * Fraction(2) ** exp
        return -f if sign else f

    def __float__(self) -> float:
        return float(self.value)

    def __repr__(self) -> str:
        with mp.workprec(min(self.precision, 64)):
            short = mpmath.nstr(self.value, 17)
        return f"BigReal({short}, bits={self.precision})"

    # -- arithmetic ---------------------------------------------------------
    def _bin(self, other: ScalarLike, op) -> "BigReal":
        prec = self.precision
        if isinstance(other, BigReal):
            prec = max(prec, other.precision)
        o = _coerce(other, prec)
        with mp.workprec(prec):
            return BigReal(op(self.value, o), prec)

    def __add__(self, other):
        return self._bin(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._bin(other, lambda a, b: a - b)

    def __rsub__(self, other):
        return self._bin(other, lambda a, b: b - a)

    def __mul__(self, other):
        return self._bin(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._bin(other, lambda a, b: a / b)

    def __rtruediv__(self, other):
        return self._bin(other, lambda a, b: b / a)

    def __neg__(self):
        return BigReal(-self.value, self.precision)

    def __abs__(self):
        return BigReal(abs(self.value), self.precision)

    # comparisons are exact on the underlying dyadic values
    def _cmp_val(self, other: ScalarLike) -> mpmath.mpf:
        return _coerce(other, self.precision)

    def __eq__(self, other):
        if isinstance(other, BigReal):
            return self.value == other.value
        if isinstance(other, (int, float, str, Fraction)):
            return self.value == self._cmp_val(other)
        return NotImplemented

    def __hash__(self):
        return hash(self.value)

    def __lt__(self, other):
        return self.value < self._cmp_val(other)

    def __le__(self, other):
        return self.value <= self._cmp_val(other)

    def __gt__(self, other):
        return self.value > self._cmp_val(other)

    def __ge__(self, other):
        return self.value >= self._cmp_val(other)

    # -- functions -----------------------------------------------------------
    def sin(self) -> "BigReal":
        with mp.workprec(self.precision):
            return BigReal(mpmath.sin(self.value), self.precision)

    def arcsin(self) -> "BigReal":
        if abs(self.value) > 1:
            raise DomainError(f"arcsin argument {mpmath.nstr(self.value, 12)} outside [-1, 1]")
        with mp.workprec(self.precision):
            return BigReal(mpmath.asin(self.value), self.precision)

    def sqrt(self) -> "BigReal":
        if self.value < 0:
            raise DomainError("sqrt of negative value")
        with mp.workprec(self.precision):
            return BigReal(mpmath.sqrt(self.value), self.precision)

    def exp(self) -> "BigReal":
        with mp.workprec(self.precision):
            return BigReal(mpmath.exp(self.value), self.precision)

    def floor(self) -> "BigReal":
        return BigReal(mpf_floor(self.value), self.precision)

    def is_integer(self) -> bool:
        return mpf_floor(self.value) == self.value


def mpf_floor(x: mpmath.mpf) -> mpmath.mpf:
    """Floor computed exactly regardless of the current context precision."""
    need = max(mpmath.mag(x), 8) + 8
    with mp.workprec(int(need)):
        return mpmath.floor(x)


# ---------------------------------------------------------------------------
# special functions of the constructions
# ---------------------------------------------------------------------------

def _wrap(fn, x: BigReal) -> BigReal:
    """Run ``fn`` on the raw mpf with guard bits, round to the input precision."""
    prec = x.precision
    with mp.workprec(prec + GUARD_BITS):
        raw = fn(x.value)
    with mp.workprec(prec):
        return BigReal(+raw, prec)


def frac(x: BigReal) -> BigReal:
    """Fractional part x - floor(x), in [0, 1)."""
    return _wrap(_frac_raw, x)


def _frac_raw(v: mpmath.mpf) -> mpmath.mpf:
    return v - mpf_floor(v)


def _mod2_raw(v: mpmath.mpf) -> mpmath.mpf:
    # v - 2*floor(v/2); division and multiplication by 2 are exact in binary
    return v - 2 * mpf_floor(v / 2)


def _theta_raw(v: mpmath.mpf) -> mpmath.mpf:
    r = _mod2_raw(v)
    half = mpmath.mpf(1) / 2
    if r <= half:
        return r
    if r <= 3 * half:
        return 1 - r
    return r - 2


def theta(x: BigReal) -> BigReal:
    """(1/pi) * arcsin(sin(pi*x)): the 2-periodic triangle wave with range [-1/2, 1/2].

    Evaluated through its closed piecewise-linear form, which is exact up to
    the single rounding of the mod-2 reduction.
    """
    return _wrap(_theta_raw, x)


def _nu_raw(v: mpmath.mpf) -> mpmath.mpf:
    return v + _theta_raw(v)


def nu(x: BigReal) -> BigReal:
    """x + theta(x); constant (= k) on [k - 1/2, k + 1/2] for odd integers k."""
    return _wrap(_nu_raw, x)


def _psi_raw(v: mpmath.mpf) -> mpmath.mpf:
    # nu(theta(v) - 1/2) + 1 collapses to a tent on [0,1] and 0 on [1,2], period 2.
    r = _mod2_raw(v)
    if r >= 1:
        return mpmath.mpf(0)
    half = mpmath.mpf(1) / 2
    if r <= half:
        return 2 * r
    return 2 - 2 * r


def psi(x: BigReal) -> BigReal:
    """nu(theta(x) - 1/2) + 1: range [0, 1], period 2, identically 0 on [1, 2] mod 2."""
    return _wrap(_psi_raw, x)


def _sigma3_raw(v: mpmath.mpf) -> mpmath.mpf:
    if v < -1:
        return -1 / v
    if v <= 1:
        inner = 1 - v * v
        if inner < 0:
            inner = mpmath.mpf(0)
        return (v * mpmath.asin(v) + mpmath.sqrt(inner)) / mp.pi + 3 * v / 2 + 2
    return 7 - 3 / v + mpmath.sinpi(v) / (mp.pi * v * v)


def sigma3(x: BigReal) -> BigReal:
    """Bounded, strictly increasing C^1 sigmoid built from arcsin and sin.

    Branches: -1/x on (-inf,-1); (x*arcsin x + sqrt(1-x^2))/pi + 3x/2 + 2 on
    [-1,1]; 7 - 3/x + sin(pi*x)/(pi*x^2) on (1,inf).  The +2 offset and the
    sin(pi*x) argument make the three branches glue C^1 at x = +-1, with
    limits 0 at -inf and 7 at +inf.
    """
    return _wrap(_sigma3_raw, x)


def _sigma3_deriv_raw(v: mpmath.mpf) -> mpmath.mpf:
    if v < -1:
        return 1 / (v * v)
    if v <= 1:
        return mpmath.asin(v) / mp.pi + mpmath.mpf(3) / 2
    v2 = v * v
    return 3 / v2 + mpmath.cospi(v) / v2 - 2 * mpmath.sinpi(v) / (mp.pi * v2 * v)


def sigma3_deriv(x: BigReal) -> BigReal:
    """Exact branchwise derivative of sigma3; equals arcsin(x)/pi + 3/2 on [-1, 1]."""
    return _wrap(_sigma3_deriv_raw, x)


def _sigma3_second_raw(v: mpmath.mpf) -> mpmath.mpf:
    if v < -1:
        return -2 / (v * v * v)
    if v <= 1:
        inner = 1 - v * v
        if inner <= 0:
            raise DomainError("sigma3 second derivative is unbounded at x = +-1")
        return 1 / (mp.pi * mpmath.sqrt(inner))
    v2 = v * v
    v3 = v2 * v
    v4 = v2 * v2
    return (-6 / v3 - mp.pi * mpmath.sinpi(v) / v2
            - 4 * mpmath.cospi(v) / v3 + 6 * mpmath.sinpi(v) / (mp.pi * v4))


def sigma3_second_deriv(x: BigReal) -> BigReal:
    """Branchwise second derivative of sigma3 (1/pi at 0; undefined at +-1)."""
    return _wrap(_sigma3_second_raw, x)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

SIN = "sin"
ARCSIN = "arcsin"
FLOOR = "floor"
SIGMA3 = "sigma3"
RELU = "relu"
LEAKY_RELU = "leaky_relu"
STEP = "step"
IDENTITY = "identity"
EXP = "exp"

_KINDS = (SIN, ARCSIN, FLOOR, SIGMA3, RELU, LEAKY_RELU, STEP, IDENTITY, EXP)

#: activations closed under exact rational arithmetic (the auditable set)
PWL_KINDS = (RELU, LEAKY_RELU, STEP, IDENTITY)


@dataclass(frozen=True)
class Activation:
    """A hidden-neuron activation tag; leaky_relu carries its negative slope."""

    kind: str
    slope: Optional[BigReal] = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown activation kind: {self.kind!r}")
        if self.kind == LEAKY_RELU and self.slope is None:
            raise ValueError("leaky_relu needs a slope")
        if self.kind != LEAKY_RELU and self.slope is not None:
            raise ValueError(f"{self.kind} takes no slope")

    # -- constructors -------------------------------------------------------
    @staticmethod
    def sin() -> "Activation":
        return Activation(SIN)

    @staticmethod
    def arcsin() -> "Activation":
        return Activation(ARCSIN)

    @staticmethod
    def floor() -> "Activation":
        return Activation(FLOOR)

    @staticmethod
    def sigma3() -> "Activation":
        return Activation(SIGMA3)

    @staticmethod
    def relu() -> "Activation":
        return Activation(RELU)

    @staticmethod
    def leaky_relu(slope: ScalarLike, precision: int = DEFAULT_PRECISION) -> "Activation":
        return Activation(LEAKY_RELU, BigReal.of(slope, precision))

    @staticmethod
    def step() -> "Activation":
        return Activation(STEP)

    @staticmethod
    def identity() -> "Activation":
        return Activation(IDENTITY)

    @staticmethod
    def exp() -> "Activation":
        return Activation(EXP)

    # -- (de)serialization ----------------------------------------------------
    def token(self) -> str:
        if self.kind == LEAKY_RELU:
            return f"{LEAKY_RELU}:{self.slope.to_decimal()}"
        return self.kind

    @staticmethod
    def from_token(token: str, precision: int = DEFAULT_PRECISION) -> "Activation":
        if token.startswith(LEAKY_RELU + ":"):
            return Activation.leaky_relu(token.split(":", 1)[1], precision)
        return Activation(token)

    @property
    def is_pwl(self) -> bool:
        return self.kind in PWL_KINDS

    # -- evaluation -----------------------------------------------------------
    def apply(self, x: BigReal) -> BigReal:
        k = self.kind
        if k == SIN:
            return x.sin()
        if k == ARCSIN:
            return x.arcsin()
        if k == FLOOR:
            return x.floor()
        if k == SIGMA3:
            return sigma3(x)
        if k == RELU:
            return x if x.value > 0 else BigReal.of(0, x.precision)
        if k == LEAKY_RELU:
            return x if x.value >= 0 else x * self.slope
        if k == STEP:
            return BigReal.of(1 if x.value >= 0 else 0, x.precision)
        if k == IDENTITY:
            return x
        if k == EXP:
            return x.exp()
        raise AssertionError(k)

    def apply_fraction(self, x: Fraction) -> Fraction:
        """Exact evaluation for the piecewise-linear kinds."""
        k = self.kind
        if k == RELU:
            return x if x > 0 else Fraction(0)
        if k == LEAKY_RELU:
            return x if x >= 0 else x * self.slope.as_fraction()
        if k == STEP:
            return Fraction(1 if x >= 0 else 0)
        if k == IDENTITY:
            return x
        raise DomainError(f"activation {k} has no exact rational evaluation")
