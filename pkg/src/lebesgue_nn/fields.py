"""Bounded scalar fields (the function being estimated) with an anchor value."""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Sequence

from ._num import exact_number, to_fraction


class ScalarField:
    """A bounded measurable function plus the reference value it is compared to.

    ``anchor`` is the value errors are measured against. When it is ``None``
    the field's own value at the query point is used (Lebesgue-point mode);
    setting it to a candidate ``l`` gives Lebesgue-value mode.
    """

    def __init__(self, fn: Callable, bound, anchor=None, name: str = "field"):
        self._fn = fn
        self.bound = exact_number(bound)
        self.anchor = None if anchor is None else exact_number(anchor)
        self.name = name

    def __call__(self, p):
        return self.evaluate(p)

    def evaluate(self, p):
        return self._fn(p)

    def anchor_at(self, x):
        """Reference value at ``x``: the explicit anchor if set, else ``eta(x)``."""
        return self.evaluate(x) if self.anchor is None else self.anchor

    def with_anchor(self, value) -> "ScalarField":
        clone = self._clone()
        clone.anchor = None if value is None else exact_number(value)
        return clone

    def with_override(self, point, value) -> "ScalarField":
        """The same field, redefined at a single point."""
        value = exact_number(value)
        base = self.evaluate

        def fn(p):
            return value if p == point else base(p)

        bound = max(abs(self.bound), abs(value))
        return ScalarField(fn, bound, self.anchor, f"{self.name}|{point}->{value}")

    def check_bound(self, value) -> None:
        if abs(value) > self.bound:
            raise ValueError(f"{self.name}: |{value}| exceeds declared bound {self.bound}")

    def _clone(self) -> "ScalarField":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        return clone

    def __repr__(self):
        return f"<ScalarField {self.name} bound={self.bound} anchor={self.anchor}>"


class PiecewiseConstantField(ScalarField):
    """Finite union of intervals carrying constant values; zero (``default``) elsewhere.

    Intervals are ``(lo, hi]`` and must be disjoint. Integrals against
    Lebesgue measure are exact rationals.
    """

    def __init__(self, pieces: Iterable[tuple], default=0, anchor=None, name: str = "piecewise"):
        self.pieces = sorted((to_fraction(lo), to_fraction(hi), exact_number(v)) for lo, hi, v in pieces)
        for (lo, hi, _), nxt in zip(self.pieces, self.pieces[1:] + [None]):
            if hi <= lo:
                raise ValueError(f"empty interval ({lo}, {hi}]")
            if nxt is not None and nxt[0] < hi:
                raise ValueError("intervals overlap")
        self.default = exact_number(default)
        bound = max([abs(self.default)] + [abs(v) for _, _, v in self.pieces])
        super().__init__(self._lookup, bound, anchor, name)

    def _lookup(self, p):
        q = to_fraction(p)
        for lo, hi, v in self.pieces:
            if lo < q <= hi:
                return v
        return self.default

    def abs_dev_integral(self, lo, hi, center) -> Fraction:
        """Exact ``int_lo^hi |eta(t) - center| dt``."""
        lo, hi, c = to_fraction(lo), to_fraction(hi), to_fraction(center)
        if hi <= lo:
            return Fraction(0)
        covered = Fraction(0)
        total = Fraction(0)
        for a, b, v in self.pieces:
            a, b = max(a, lo), min(b, hi)
            if b > a:
                covered += b - a
                total += (b - a) * abs(to_fraction(v) - c)
        return total + (hi - lo - covered) * abs(to_fraction(self.default) - c)

    def breakpoints(self) -> list[Fraction]:
        return sorted({e for lo, hi, _ in self.pieces for e in (lo, hi)})


def constant(c, anchor=None) -> ScalarField:
    c = exact_number(c)
    return PiecewiseConstantField([], default=c, anchor=anchor, name=f"const({c})")


def positive_indicator(anchor=None) -> ScalarField:
    """``eta(p) = 1`` for ``p > 0``, else ``0``."""
    return ScalarField(lambda p: 1 if p > 0 else 0, 1, anchor, "positive")


def table_field(values: dict, default=0, anchor=None, name: str = "table") -> ScalarField:
    """Field given pointwise on finitely many points."""
    table = {k: exact_number(v) for k, v in values.items()}
    default = exact_number(default)
    bound = max([abs(default)] + [abs(v) for v in table.values()])
    return ScalarField(lambda p: table.get(p, default), bound, anchor, name)


def dyadic_field(thresholds: Sequence[Fraction], depth: int) -> PiecewiseConstantField:
    """Indicator of ``(theta_2n, theta_2n-1]`` for ``n = 1..depth`` (1-based thresholds)."""
    pieces = [(thresholds[2 * n - 1], thresholds[2 * n - 2], 1) for n in range(1, depth + 1)]
    return PiecewiseConstantField(pieces, name=f"dyadic(D={depth})")


def linear_field(slope=1, intercept=0) -> ScalarField:
    """``eta(t) = intercept + slope * t`` on ``[0, 1]``."""
    slope, intercept = exact_number(slope), exact_number(intercept)
    bound = abs(intercept) + abs(slope)
    return ScalarField(lambda p: intercept + slope * p, bound, None, f"linear({slope},{intercept})")


def field_from_spec(text: str, space=None, anchor=None) -> ScalarField:
    """Build a field from ``positive``, ``const:c=1/2``, ``dyadic``,
    ``linear:slope=1,intercept=0`` or ``table:-1=0.2;1=1`` (default ``0``)."""
    from ._num import parse_number

    kind, _, rest = text.strip().partition(":")
    if kind == "positive":
        return positive_indicator(anchor)
    if kind == "const":
        params = dict(p.split("=", 1) for p in rest.split(",") if p)
        return constant(parse_number(params.get("c", "0")), anchor)
    if kind == "dyadic":
        if space is None or not hasattr(space, "canonical_field"):
            raise ValueError("field 'dyadic' needs a dyadic space")
        return space.canonical_field().with_anchor(anchor)
    if kind == "linear":
        params = dict(p.split("=", 1) for p in rest.split(",") if p)
        return linear_field(parse_number(params.get("slope", "1")), parse_number(params.get("intercept", "0"))).with_anchor(anchor)
    if kind == "table":
        values = {}
        for part in filter(None, (s.strip() for s in rest.split(";"))):
            k, _, v = part.partition("=")
            values[parse_number(k)] = parse_number(v)
        return table_field(values, anchor=anchor)
    raise ValueError(f"unknown field '{text}' (expected positive|const|dyadic|linear|table)")
