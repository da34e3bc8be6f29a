"""Non-negative floats with a 64-bit binary exponent.

Atom masses such as ``2**-(2**n)`` underflow ordinary doubles long before
``n`` gets interesting, so every probability flowing through the measure
queries and the exact engines is a :class:`WideFloat`: a double mantissa in
``[1, 2)`` (or exactly ``0``) times ``2**exponent``.

Only non-negative values are representable. Subtraction that would go
negative raises; use :meth:`WideFloat.monus` for truncated subtraction.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

import mpmath

EXP_MIN = -(2**63)
EXP_MAX = 2**63 - 1

# working precision (decimal digits) for logs and powers; m * log(1 - p)
# must keep ~1e-13 absolute accuracy when |m * log(1 - p)| is ~1e5
_DPS = 40
_LN2 = math.log(2.0)


class WideFloat:
    __slots__ = ("mantissa", "exponent")

    def __init__(self, mantissa: float = 0.0, exponent: int = 0):
        if mantissa < 0 or math.isnan(mantissa) or math.isinf(mantissa):
            raise ValueError(f"WideFloat mantissa must be finite and >= 0, got {mantissa!r}")
        if mantissa == 0.0:
            self.mantissa = 0.0
            self.exponent = 0
            return
        frac, e = math.frexp(mantissa)  # frac in [0.5, 1)
        exponent = int(exponent) + e - 1
        if exponent < EXP_MIN:
            # underflow flushes to zero, as with IEEE doubles
            self.mantissa = 0.0
            self.exponent = 0
            return
        if exponent > EXP_MAX:
            raise OverflowError(f"WideFloat exponent {exponent} outside 64-bit range")
        self.mantissa = frac * 2.0
        self.exponent = exponent

    # -- construction -----------------------------------------------------

    @classmethod
    def coerce(cls, value) -> "WideFloat":
        if isinstance(value, WideFloat):
            return value
        if isinstance(value, float):
            return cls(value, 0)
        if isinstance(value, (int, Rational)):
            return cls.from_fraction(Fraction(value))
        raise TypeError(f"cannot convert {type(value).__name__} to WideFloat")

    @classmethod
    def from_fraction(cls, q: Fraction) -> "WideFloat":
        q = Fraction(q)
        if q < 0:
            raise ValueError("WideFloat cannot hold negative values")
        if q == 0:
            return cls()
        num, den = q.numerator, q.denominator
        # scale so the integer quotient carries 64+ significant bits
        shift = den.bit_length() - num.bit_length() + 64
        if shift >= 0:
            quot = (num << shift) // den
        else:
            quot = num // (den << -shift)
        qb = quot.bit_length()
        top = quot >> (qb - 54) if qb > 54 else quot << (54 - qb)
        # round on the dropped bit
        mant_int = (top + 1) >> 1
        return cls(float(mant_int), qb - 53 - shift)

    @classmethod
    def pow2(cls, exponent: int) -> "WideFloat":
        return cls(1.0, exponent)

    @classmethod
    def exp(cls, y: float) -> "WideFloat":
        """``e**y`` for any finite double ``y``, without overflow or underflow."""
        return cls.exp2(y / _LN2)

    @classmethod
    def exp2(cls, y: float) -> "WideFloat":
        if math.isinf(y):
            if y < 0:
                return cls()
            raise OverflowError("exp2 of +inf")
        whole = math.floor(y)
        return cls(2.0 ** (y - whole), int(whole))

    # -- conversion -------------------------------------------------------

    def __float__(self) -> float:
        if self.mantissa == 0.0:
            return 0.0
        if self.exponent > 1024:
            return math.inf
        if self.exponent < -1100:
            return 0.0
        return math.ldexp(self.mantissa, self.exponent)

    def to_fraction(self) -> Fraction:
        return Fraction(self.mantissa) * (Fraction(2) ** self.exponent)

    def is_zero(self) -> bool:
        return self.mantissa == 0.0

    def log(self) -> float:
        """Natural logarithm as a double (``-inf`` for zero)."""
        if self.mantissa == 0.0:
            return -math.inf
        return math.log(self.mantissa) + self.exponent * _LN2

    def log2(self) -> float:
        if self.mantissa == 0.0:
            return -math.inf
        return math.log2(self.mantissa) + self.exponent

    def sqrt(self) -> "WideFloat":
        if self.mantissa == 0.0:
            return WideFloat()
        if self.exponent % 2:
            return WideFloat(math.sqrt(2.0 * self.mantissa), (self.exponent - 1) // 2)
        return WideFloat(math.sqrt(self.mantissa), self.exponent // 2)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        try:
            other = WideFloat.coerce(other)
        except TypeError:
            return NotImplemented
        if other.mantissa == 0.0:
            return self
        if self.mantissa == 0.0:
            return other
        a, b = (self, other) if self.exponent >= other.exponent else (other, self)
        gap = a.exponent - b.exponent
        if gap > 60:
            return a
        return WideFloat(a.mantissa + math.ldexp(b.mantissa, -gap), a.exponent)

    __radd__ = __add__

    def __sub__(self, other):
        try:
            other = WideFloat.coerce(other)
        except TypeError:
            return NotImplemented
        if other.mantissa == 0.0:
            return self
        if other > self:
            raise ArithmeticError("WideFloat subtraction would be negative")
        gap = self.exponent - other.exponent
        if gap > 60:
            return self
        return WideFloat(self.mantissa - math.ldexp(other.mantissa, -gap), self.exponent)

    def __rsub__(self, other):
        try:
            return WideFloat.coerce(other) - self
        except TypeError:
            return NotImplemented

    def monus(self, other) -> "WideFloat":
        """``max(self - other, 0)``."""
        other = WideFloat.coerce(other)
        if other >= self:
            return WideFloat()
        return self - other

    def __mul__(self, other):
        try:
            other = WideFloat.coerce(other)
        except TypeError:
            return NotImplemented
        if self.mantissa == 0.0 or other.mantissa == 0.0:
            return WideFloat()
        return WideFloat(self.mantissa * other.mantissa, self.exponent + other.exponent)

    __rmul__ = __mul__

    def __truediv__(self, other):
        try:
            other = WideFloat.coerce(other)
        except TypeError:
            return NotImplemented
        if other.mantissa == 0.0:
            raise ZeroDivisionError("WideFloat division by zero")
        if self.mantissa == 0.0:
            return WideFloat()
        return WideFloat(self.mantissa / other.mantissa, self.exponent - other.exponent)

    def __rtruediv__(self, other):
        try:
            return WideFloat.coerce(other) / self
        except TypeError:
            return NotImplemented

    def __pow__(self, m):
        if not isinstance(m, int) or m < 0:
            return NotImplemented
        if m == 0:
            return WideFloat(1.0)
        if self.mantissa == 0.0:
            return WideFloat()
        with mpmath.workdps(_DPS):
            return from_mpf(to_mpf(self) ** m)

    # -- ordering ---------------------------------------------------------

    def _cmp(self, other) -> int:
        other = WideFloat.coerce(other)
        if self.mantissa == 0.0 or other.mantissa == 0.0:
            return (self.mantissa > 0.0) - (other.mantissa > 0.0)
        if self.exponent != other.exponent:
            return 1 if self.exponent > other.exponent else -1
        return (self.mantissa > other.mantissa) - (self.mantissa < other.mantissa)

    def __eq__(self, other):
        try:
            return self._cmp(other) == 0
        except TypeError:
            return NotImplemented

    def __lt__(self, other):
        try:
            return self._cmp(other) < 0
        except TypeError:
            return NotImplemented

    def __le__(self, other):
        try:
            return self._cmp(other) <= 0
        except TypeError:
            return NotImplemented

    def __gt__(self, other):
        try:
            return self._cmp(other) > 0
        except TypeError:
            return NotImplemented

    def __ge__(self, other):
        try:
            return self._cmp(other) >= 0
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((self.mantissa, self.exponent))

    def __bool__(self):
        return self.mantissa != 0.0

    def __repr__(self):
        if self.mantissa == 0.0:
            return "WideFloat(0)"
        if -1000 < self.exponent < 1000:
            return f"WideFloat({float(self)!r})"
        return f"WideFloat({self.mantissa!r} * 2**{self.exponent})"


ZERO = WideFloat()
ONE = WideFloat(1.0)


def to_mpf(w) -> mpmath.mpf:
    w = WideFloat.coerce(w)
    return mpmath.ldexp(mpmath.mpf(w.mantissa), w.exponent)


def from_mpf(x) -> WideFloat:
    if x < 0:
        raise ValueError("WideFloat cannot hold negative values")
    if x == 0:
        return WideFloat()
    mant, e = mpmath.frexp(x)
    return WideFloat(float(mant), int(e))


def log1p(x) -> WideFloat:
    """``log(1 + x)`` for ``x >= 0``; tiny arguments keep their wide exponent."""
    with mpmath.workdps(_DPS):
        return from_mpf(mpmath.log1p(to_mpf(x)))


def expm1(y) -> WideFloat:
    """``exp(y) - 1`` for ``y >= 0``; the result may exceed the double range."""
    with mpmath.workdps(_DPS):
        return from_mpf(mpmath.expm1(to_mpf(y)))


def log_one_minus(p) -> float:
    """``log(1 - p)`` as a double (``-inf`` at ``p = 1``)."""
    p = WideFloat.coerce(p)
    if p > ONE:
        raise ValueError("log_one_minus needs p <= 1")
    if p == ONE:
        return -math.inf
    with mpmath.workdps(_DPS):
        return float(mpmath.log1p(-to_mpf(p)))


def pow_one_minus(p, m: int) -> WideFloat:
    """``(1 - p)**m`` as ``exp(m * log1p(-p))``, carried at extended precision."""
    p = WideFloat.coerce(p)
    if m == 0:
        return ONE
    if p > ONE:
        raise ValueError("pow_one_minus needs p <= 1")
    if p == ONE:
        return WideFloat()
    with mpmath.workdps(_DPS):
        return from_mpf(mpmath.exp(m * mpmath.log1p(-to_mpf(p))))


def power_gap(outside, gap, m: int, inside=None) -> WideFloat:
    """``(outside + gap)**m - outside**m`` without cancellation.

    ``inside`` is ``1 - outside`` when the caller knows it more precisely than
    ``outside`` itself (``outside`` close to one).
    """
    outside = WideFloat.coerce(outside)
    gap = WideFloat.coerce(gap)
    if m == 0 or gap.is_zero():
        return WideFloat()
    with mpmath.workdps(_DPS):
        g = to_mpf(gap)
        if outside.is_zero():
            return from_mpf(g**m)
        if inside is not None and WideFloat.coerce(inside) < WideFloat(0.5):
            log_out = mpmath.log1p(-to_mpf(inside))
        else:
            log_out = mpmath.log(to_mpf(outside))
        base = mpmath.exp(m * log_out)
        return from_mpf(base * mpmath.expm1(m * mpmath.log1p(g / to_mpf(outside))))


def wsum(values) -> WideFloat:
    """Sum non-negative values, smallest first, to limit rounding."""
    items = sorted((WideFloat.coerce(v) for v in values), key=lambda w: (w.mantissa != 0.0, w.exponent, w.mantissa))
    total = WideFloat()
    for w in items:
        total = total + w
    return total
