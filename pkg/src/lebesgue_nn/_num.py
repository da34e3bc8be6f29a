"""Number parsing and conversion shared by every module."""

from __future__ import annotations

import math
import re
from fractions import Fraction
from numbers import Rational

from .wide import WideFloat

_POW_RE = re.compile(r"^\s*2\s*\^\s*\(?\s*(-?\d+)\s*\)?\s*$")


def parse_number(text: str) -> Fraction:
    """Parse ``"0.25"``, ``"1/4"`` or ``"2^-2"`` into an exact rational."""
    text = text.strip()
    m = _POW_RE.match(text)
    if m:
        return Fraction(2) ** int(m.group(1))
    return Fraction(text)


def exact_number(x):
    """Ints and rationals pass through; floats become their shortest decimal."""
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, (int, Fraction)):
        return x
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite value {x!r}")
        q = Fraction(repr(x))
        return q.numerator if q.denominator == 1 else q
    if isinstance(x, str):
        q = parse_number(x)
        return q.numerator if q.denominator == 1 else q
    raise TypeError(f"unsupported number {x!r}")


def to_fraction(x) -> Fraction:
    """Exact rational value (binary-exact for floats)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, WideFloat):
        return x.to_fraction()
    if isinstance(x, str):
        return parse_number(x)
    return Fraction(x)


def to_wide(x) -> WideFloat:
    if isinstance(x, WideFloat):
        return x
    if isinstance(x, float):
        return WideFloat(x)
    return WideFloat.from_fraction(Fraction(x))


def to_float(x) -> float:
    return float(x)
