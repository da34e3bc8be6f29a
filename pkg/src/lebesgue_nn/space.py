"""Metric probability spaces with exact ball and sphere measure queries.

Atomic spaces (finitely many weighted points) answer every query by summing
atom masses, either as exact rationals or as :class:`~lebesgue_nn.wide.WideFloat`.
Interval spaces carry Lebesgue measure on ``[0, 1]`` (optionally restricted to
a ball) and integrate piecewise-constant fields in closed form.

Points are plain values: ``Fraction`` coordinates or hashable labels for
atomic spaces, floats (or rationals) for interval spaces.
"""

from __future__ import annotations

import functools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np

from ._num import exact_number, parse_number, to_fraction, to_wide
from .fields import PiecewiseConstantField, ScalarField, dyadic_field
from .wide import ONE, WideFloat, wsum

# SignedHarmonicSpace keeps exact rational weights up to this many spheres;
# beyond it denominators (2**(2**N) bits) make rational arithmetic useless.
EXACT_SPHERE_LIMIT = 12

TOTAL_MASS_RTOL = 2.0**-40


class UnsupportedOperation(Exception):
    """The space cannot answer this query (e.g. sphere tables on a continuum)."""


class UndefinedRatio(ValueError):
    """A conditional quantity was requested on a null set."""


@dataclass(frozen=True)
class SphereRow:
    """One radius of a sphere table around a fixed centre.

    ``outside`` is the mass strictly beyond ``radius``, summed directly so it
    stays accurate when ``closed`` is close to one.
    """

    radius: Fraction
    sphere: object
    open: object
    closed: object
    outside: object
    atoms: tuple  # ((point, mass), ...) on this sphere, mass > 0


class MetricMeasureSpace(ABC):
    """Metric space carrying a Borel probability measure."""

    kind = "abstract"
    is_atomic = False

    @abstractmethod
    def distance(self, p, q): ...

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: int | None = None): ...

    @abstractmethod
    def measure_open_ball(self, x, r) -> WideFloat: ...

    @abstractmethod
    def measure_sphere(self, x, r) -> WideFloat: ...

    def measure_closed_ball(self, x, r) -> WideFloat:
        return self.measure_open_ball(x, r) + self.measure_sphere(x, r)

    def sphere_radii(self, x) -> list:
        raise UnsupportedOperation(f"{self.kind} space has no atoms to enumerate")

    @abstractmethod
    def ball_integral(self, x, r, field: ScalarField, center, closed: bool = True, exact: bool = False):
        """``E[1_ball(X) |eta(X) - center|]`` over the closed (or open) ball."""

    def sphere_conditional_mean(self, x, r, field: ScalarField, center, exact: bool = False):
        raise UndefinedRatio(f"spheres are null sets in {self.kind} space")

    def describe(self) -> dict:
        return {"kind": self.kind}


# ---------------------------------------------------------------------------
# atomic spaces


def _as_probability(p):
    """Exact rational when possible (decimal reading of floats), else WideFloat."""
    if isinstance(p, WideFloat):
        return None, p
    q = to_fraction(exact_number(p))
    if q < 0:
        raise ValueError(f"negative probability {p!r}")
    return q, WideFloat.from_fraction(q)


class AtomicSpace(MetricMeasureSpace):
    """Finitely many points, some carrying positive mass.

    Subclasses set ``points``, ``_wide`` (WideFloat masses) and ``_exact``
    (rational masses, or ``None`` when unavailable) and implement ``distance``.
    """

    is_atomic = True
    points: tuple
    _wide: tuple
    _exact: tuple | None

    def _finish(self) -> None:
        self._index = {p: i for i, p in enumerate(self.points)}
        if len(self._index) != len(self.points):
            raise ValueError("duplicate points")
        support = [i for i, w in enumerate(self._wide) if not w.is_zero()]
        if not support:
            raise ValueError("space has no mass")
        self._support = tuple(support)
        self.total_mass = wsum(self._wide)
        if abs(float(self.total_mass) - 1.0) > TOTAL_MASS_RTOL:
            raise ValueError(f"probabilities sum to {float(self.total_mass)!r}, not 1")
        if self._exact is not None and sum(self._exact) != 1:
            raise ValueError(f"probabilities sum to {sum(self._exact)}, not 1")
        cdf = np.cumsum([float(self._wide[i]) for i in self._support])
        self._cdf = cdf / cdf[-1]
        self._support_points = [self.points[i] for i in self._support]

    @property
    def has_exact(self) -> bool:
        return self._exact is not None

    def mass(self, p, exact: bool = False):
        i = self._index.get(p)
        if i is None:
            return Fraction(0) if exact else WideFloat()
        return self._mass_at(i, exact)

    def _mass_at(self, i, exact: bool):
        if exact:
            if self._exact is None:
                raise UnsupportedOperation("no exact rational weights for this space")
            return self._exact[i]
        return self._wide[i]

    def atoms(self, exact: bool = False) -> list:
        """``[(point, mass), ...]`` for atoms with positive mass."""
        return [(self.points[i], self._mass_at(i, exact)) for i in self._support]

    def contains(self, p) -> bool:
        return p in self._index

    # -- sampling ---------------------------------------------------------

    def sample_indices(self, rng: np.random.Generator, size) -> np.ndarray:
        """Indices into :attr:`support_points`, drawn i.i.d. from the measure."""
        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, len(self._cdf) - 1)

    @property
    def support_points(self) -> list:
        return self._support_points

    def sample(self, rng, size=None):
        if size is None:
            return self._support_points[int(self.sample_indices(rng, None))]
        return [self._support_points[i] for i in self.sample_indices(rng, size)]

    # -- measure queries --------------------------------------------------

    def _sum(self, values, exact):
        return sum(values, Fraction(0)) if exact else wsum(values)

    def measure_open_ball(self, x, r, exact: bool = False):
        r = to_fraction(r)
        return self._sum((w for p, w in self.atoms(exact) if self.distance(x, p) < r), exact)

    def measure_sphere(self, x, r, exact: bool = False):
        r = to_fraction(r)
        return self._sum((w for p, w in self.atoms(exact) if self.distance(x, p) == r), exact)

    def measure_closed_ball(self, x, r, exact: bool = False):
        return self.measure_open_ball(x, r, exact) + self.measure_sphere(x, r, exact)

    def sphere_radii(self, x) -> list:
        return [row.radius for row in self.sphere_table(x)]

    def sphere_table(self, x, exact: bool = False) -> list[SphereRow]:
        return list(self._sphere_table(x, exact))

    @functools.lru_cache(maxsize=256)
    def _sphere_table(self, x, exact: bool) -> tuple:
        groups: dict = {}
        for p, w in self.atoms(exact):
            groups.setdefault(self.distance(x, p), []).append((p, w))
        radii = sorted(groups)
        spheres = [self._sum((w for _, w in groups[r]), exact) for r in radii]
        zero = Fraction(0) if exact else WideFloat()
        # outside masses summed from the far end: each is a sum of the masses beyond
        outside = [zero] * len(radii)
        acc = zero
        for k in range(len(radii) - 1, -1, -1):
            outside[k] = acc if exact else min(acc, ONE)
            acc = acc + spheres[k]
        rows = []
        inner = zero
        for k, r in enumerate(radii):
            closed = inner + spheres[k]
            rows.append(SphereRow(r, spheres[k], inner, closed, outside[k], tuple(groups[r])))
            inner = closed
        return tuple(rows)

    def ball_integral(self, x, r, field, center, closed: bool = True, exact: bool = False):
        r = to_fraction(r)
        c = exact_number(center) if exact else center
        total = []
        for p, w in self.atoms(exact):
            d = self.distance(x, p)
            if d < r or (closed and d == r):
                dev = abs(to_fraction(field(p)) - to_fraction(c)) if exact else abs(float(field(p)) - float(c))
                total.append(w * dev if exact else w * _dev_wide(field(p), c))
        return self._sum(total, exact)

    def sphere_conditional_mean(self, x, r, field, center, exact: bool = False):
        r = to_fraction(r)
        atoms = [(p, w) for p, w in self.atoms(exact) if self.distance(x, p) == r]
        if not atoms:
            raise UndefinedRatio(f"sphere of radius {r} around {x} carries no mass")
        if exact:
            c = to_fraction(center)
            num = sum((w * abs(to_fraction(field(p)) - c) for p, w in atoms), Fraction(0))
            return num / sum((w for _, w in atoms), Fraction(0))
        num = wsum(w * _dev_wide(field(p), center) for p, w in atoms)
        return float(num / wsum(w for _, w in atoms))

    def expectation_abs_dev(self, field, center, exact: bool = False):
        """``E|eta(X) - center|`` over the whole space."""
        if exact:
            c = to_fraction(center)
            return sum((w * abs(to_fraction(field(p)) - c) for p, w in self.atoms(True)), Fraction(0))
        return wsum(w * _dev_wide(field(p), center) for p, w in self.atoms(False))


def _dev_wide(value, center) -> WideFloat:
    return to_wide(abs(to_fraction(exact_number(value)) - to_fraction(exact_number(center))))


class FiniteAtomicSpace(AtomicSpace):
    """Finitely many atoms with an explicit metric.

    Either a 1-D embedding (``coordinates``; distance ``|p - q|``) or an
    explicit symmetric distance table over labelled points.
    """

    kind = "finite_atomic"

    def __init__(self, points: Sequence[Hashable], probs: Sequence, table: Sequence[Sequence] | None = None):
        if len(points) != len(probs):
            raise ValueError("points and probs differ in length")
        self.points = tuple(exact_number(p) if isinstance(p, (int, float, Fraction)) else p for p in points)
        pairs = [_as_probability(p) for p in probs]
        self._wide = tuple(w for _, w in pairs)
        exact = [q for q, _ in pairs]
        self._exact = None if any(q is None for q in exact) else tuple(exact)
        self._table = None
        if table is not None:
            self._table = self._validate_table(table)
        else:
            for p in self.points:
                if not isinstance(p, (int, Fraction)):
                    raise ValueError("coordinate embedding needs numeric points; pass a distance table")
        self._finish()

    @classmethod
    def from_coordinates(cls, atoms) -> "FiniteAtomicSpace":
        """``atoms``: mapping or iterable of ``(coordinate, probability)``."""
        items = list(atoms.items()) if isinstance(atoms, dict) else list(atoms)
        return cls([c for c, _ in items], [p for _, p in items])

    def _validate_table(self, table):
        n = len(self.points)
        d = [[to_fraction(exact_number(v)) for v in row] for row in table]
        if len(d) != n or any(len(row) != n for row in d):
            raise ValueError("distance table must be square over the points")
        for i in range(n):
            if d[i][i] != 0:
                raise ValueError("distance table: nonzero self-distance")
            for j in range(n):
                if d[i][j] != d[j][i]:
                    raise ValueError("distance table is not symmetric")
                if i != j and d[i][j] <= 0:
                    raise ValueError("distance table: distinct points at distance 0")
                for k in range(n):
                    if d[i][k] > d[i][j] + d[j][k]:
                        raise ValueError("distance table violates the triangle inequality")
        return d

    def distance(self, p, q):
        if self._table is not None:
            return self._table[self._index[p]][self._index[q]]
        return abs(to_fraction(p) - to_fraction(q))

    def describe(self) -> dict:
        return {"kind": self.kind, "atoms": len(self.points)}


class SignedHarmonicSpace(AtomicSpace):
    """Atoms at ``+-1/n`` (``n = 1..N``) and ``0``, with super-exponentially small spheres.

    ``mass(-1/n) = (n-1)/n * 2**-(2**n) / R`` and ``mass(+1/n) = 1/n * 2**-(2**n) / R``
    where ``R`` sums ``2**-(2**n)`` over ``n <= N``; ``0`` carries no mass.
    ``tail_bound`` is the relative mass the truncation at ``N`` drops.
    """

    kind = "signed_harmonic"

    def __init__(self, max_index: int = 8):
        if max_index < 2:
            raise ValueError("max_index must be >= 2")
        if 2**max_index > 2**62:
            raise OverflowError("2**-(2**N) needs an exponent beyond 64 bits")
        self.max_index = N = max_index
        pts, wide, exact = [Fraction(0)], [WideFloat()], [Fraction(0)]
        self.normalizer = wsum(WideFloat.pow2(-(2**n)) for n in range(1, N + 1))
        use_exact = N <= EXACT_SPHERE_LIMIT
        if use_exact:
            r_exact = sum((Fraction(1, 2 ** (2**n)) for n in range(1, N + 1)), Fraction(0))
            self.normalizer_exact = r_exact
        for n in range(1, N + 1):
            base = WideFloat.pow2(-(2**n)) / self.normalizer
            for sign, share in ((-1, Fraction(n - 1, n)), (1, Fraction(1, n))):
                pts.append(Fraction(sign, n))
                wide.append(base * float(share) if share else WideFloat())
                if use_exact:
                    exact.append(share * Fraction(1, 2 ** (2**n)) / r_exact)
        self.points = tuple(pts)
        self._wide = tuple(wide)
        self._exact = tuple(exact) if use_exact else None
        self.tail_bound = WideFloat.pow2(-(2 ** (N + 1))) / self.normalizer
        self._finish()

    def distance(self, p, q):
        return abs(to_fraction(p) - to_fraction(q))

    def describe(self) -> dict:
        return {"kind": self.kind, "N": self.max_index}


class NormalizedAtomicSpace(AtomicSpace):
    """An atomic space restricted to a closed ball and renormalized."""

    kind = "normalized_atomic"

    def __init__(self, base: AtomicSpace, center, radius):
        self.base, self.center, self.radius = base, center, to_fraction(radius)
        inside = [i for i, p in enumerate(base.points) if base.distance(center, p) <= self.radius]
        ball_w = wsum(base._wide[i] for i in inside)
        if ball_w.is_zero():
            raise ValueError("normalize_to_ball: ball has zero mass")
        self.points = tuple(base.points[i] for i in inside)
        self._wide = tuple(base._wide[i] / ball_w for i in inside)
        if base._exact is not None:
            ball_q = sum((base._exact[i] for i in inside), Fraction(0))
            self._exact = tuple(base._exact[i] / ball_q for i in inside)
        else:
            self._exact = None
        self._finish()

    def distance(self, p, q):
        return self.base.distance(p, q)

    def sample(self, rng, size=None):
        # rejection sampling from the base measure
        want = 1 if size is None else size
        out = []
        while len(out) < want:
            for p in self.base.sample(rng, max(want - len(out), 16)):
                if self.base.distance(self.center, p) <= self.radius:
                    out.append(p)
        return out[0] if size is None else out[:want]

    def describe(self) -> dict:
        return {"kind": self.kind, "base": self.base.describe(), "center": str(self.center), "R": str(self.radius)}


# ---------------------------------------------------------------------------
# interval spaces


class UnitIntervalSpace(MetricMeasureSpace):
    """Lebesgue measure on ``[lo, hi] ⊂ [0, 1]``, renormalized to a probability."""

    kind = "unit_interval"

    def __init__(self, lo=0, hi=1):
        self.lo, self.hi = to_fraction(lo), to_fraction(hi)
        if not 0 <= self.lo < self.hi <= 1:
            raise ValueError("need 0 <= lo < hi <= 1")
        self.length = self.hi - self.lo

    def distance(self, p, q):
        if isinstance(p, float) or isinstance(q, float):
            return abs(float(p) - float(q))
        return abs(to_fraction(p) - to_fraction(q))

    def sample(self, rng, size=None):
        u = rng.random(size)
        return float(self.lo) + float(self.length) * u

    def _ball_length(self, x, r) -> Fraction:
        x, r = to_fraction(x), to_fraction(r)
        return max(Fraction(0), min(x + r, self.hi) - max(x - r, self.lo))

    def measure_open_ball(self, x, r, exact: bool = False):
        q = self._ball_length(x, r) / self.length
        return q if exact else WideFloat.from_fraction(q)

    def measure_sphere(self, x, r, exact: bool = False):
        return Fraction(0) if exact else WideFloat()

    def measure_closed_ball(self, x, r, exact: bool = False):
        return self.measure_open_ball(x, r, exact) + self.measure_sphere(x, r, exact)

    def ball_integral(self, x, r, field, center, closed: bool = True, exact: bool = False):
        x, r = to_fraction(x), to_fraction(r)
        a, b = max(x - r, self.lo), min(x + r, self.hi)
        if b <= a:
            return Fraction(0) if exact else WideFloat()
        if isinstance(field, PiecewiseConstantField):
            q = field.abs_dev_integral(a, b, center) / self.length
            return q if exact else WideFloat.from_fraction(q)
        if exact:
            raise UnsupportedOperation("exact integrals need a piecewise-constant field")
        return WideFloat(_quad_abs_dev(field, float(a), float(b), float(center)) / float(self.length))

    def describe(self) -> dict:
        return {"kind": self.kind, "lo": str(self.lo), "hi": str(self.hi)}


def _quad_abs_dev(field, a, b, c) -> float:
    from scipy.integrate import quad

    val, _ = quad(lambda t: abs(float(field(t)) - c), a, b, limit=200, epsabs=1e-14, epsrel=1e-12)
    return val


class DyadicIntervalSpace(UnitIntervalSpace):
    """Lebesgue measure on ``[0, 1]`` with thresholds ``theta_n = 2**-(2**n)``.

    ``thresholds[n-1]`` is ``theta_n`` for ``n = 1..2D+2``. The canonical
    field is the indicator of ``(theta_2n, theta_2n-1]`` for ``n <= D``; below
    ``resolution = theta_2D`` it vanishes identically.
    """

    kind = "dyadic"

    # theta_{2D+2} must stay a representable double
    MAX_DEPTH = 4

    def __init__(self, depth: int = 3):
        if not 2 <= depth <= self.MAX_DEPTH:
            raise ValueError(f"depth must be in [2, {self.MAX_DEPTH}]")
        super().__init__(0, 1)
        self.depth = depth
        self.thresholds = tuple(Fraction(1, 2 ** (2**n)) for n in range(1, 2 * depth + 3))
        self.resolution = self.thresholds[2 * depth - 1]

    def theta(self, n: int) -> Fraction:
        return self.thresholds[n - 1]

    def canonical_field(self) -> PiecewiseConstantField:
        return dyadic_field(self.thresholds, self.depth)

    def describe(self) -> dict:
        return {"kind": self.kind, "D": self.depth}


class NormalizedIntervalSpace(UnitIntervalSpace):
    """Lebesgue measure on ``[0, 1] ∩ [x - R, x + R]``, renormalized."""

    kind = "normalized_interval"

    def __init__(self, base: UnitIntervalSpace, center, radius):
        c, R = to_fraction(center), to_fraction(radius)
        lo, hi = max(base.lo, c - R), min(base.hi, c + R)
        if hi <= lo:
            raise ValueError("normalize_to_ball: ball has zero mass")
        self.base, self.center, self.radius = base, c, R
        self._base_lo, self._base_hi = base.lo, base.hi
        super().__init__(lo, hi)

    def sample(self, rng, size=None):
        # rejection sampling from the base measure
        want = 1 if size is None else size
        out = np.empty(0)
        while out.size < want:
            draw = np.atleast_1d(self.base.sample(rng, max(2 * (want - out.size), 16)))
            keep = draw[(draw >= float(self.lo)) & (draw <= float(self.hi))]
            out = np.concatenate([out, keep])
        return float(out[0]) if size is None else out[:want]

    def describe(self) -> dict:
        return {"kind": self.kind, "base": self.base.describe(), "center": str(self.center), "R": str(self.radius)}


# ---------------------------------------------------------------------------
# operations


def normalize_to_ball(space: MetricMeasureSpace, x, R) -> MetricMeasureSpace:
    """Restrict ``space`` to the closed ball ``B̄_R(x)`` and renormalize."""
    mass = space.measure_closed_ball(x, R)
    if mass.is_zero() or math.isinf(float(mass)):
        raise ValueError(f"normalize_to_ball: ball mass {mass!r} is zero or infinite")
    if isinstance(space, AtomicSpace):
        return NormalizedAtomicSpace(space, x, R)
    if isinstance(space, UnitIntervalSpace):
        return NormalizedIntervalSpace(space, x, R)
    raise UnsupportedOperation(f"cannot normalize {space.kind} space")


def support_check(space: MetricMeasureSpace, x, radii: Iterable) -> bool:
    """Probe-based support test: every listed closed ball around ``x`` has mass.

    A finite probe list can only approximate membership in the support.
    """
    return all(not space.measure_closed_ball(x, r).is_zero() for r in radii)


def sphere_table(space: MetricMeasureSpace, x, exact: bool = False) -> list[SphereRow]:
    if not isinstance(space, AtomicSpace):
        raise UnsupportedOperation(f"{space.kind} space has no sphere table")
    return space.sphere_table(x, exact)


# ---------------------------------------------------------------------------
# config parsing


def _kv(text: str) -> dict:
    out = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        key, _, val = part.partition("=")
        out[key.strip()] = val.strip()
    return out


def _atom_table(text: str) -> list[tuple]:
    """``"-1:0.2; 1:0.3; 2:1/2"`` -> ``[(-1, 1/5), ...]``."""
    items = []
    for part in filter(None, (s.strip() for s in text.replace("\n", ";").split(";"))):
        coord, _, prob = part.partition(":")
        items.append((parse_number(coord), parse_number(prob)))
    return items


def space_from_spec(spec: str | dict) -> MetricMeasureSpace:
    """Build a space from ``"kind:key=val,..."`` or a parsed config mapping.

    Kinds: ``signed_harmonic`` (``N``), ``dyadic`` (``D``), ``unit_interval``,
    ``finite_atomic`` (``atoms = "x:p; x:p; ..."`` with decimal, ``p/q`` or
    ``2^-k`` numbers).
    """
    if isinstance(spec, str):
        kind, _, rest = spec.partition(":")
        params = _kv(rest) if "atoms" not in rest else {"atoms": rest.partition("=")[2]}
    else:
        params = dict(spec)
        kind = params.pop("kind")
    kind = kind.strip()
    try:
        if kind == "signed_harmonic":
            return SignedHarmonicSpace(int(params.get("N", 8)))
        if kind == "dyadic":
            return DyadicIntervalSpace(int(params.get("D", 3)))
        if kind == "unit_interval":
            return UnitIntervalSpace()
        if kind == "finite_atomic":
            return FiniteAtomicSpace.from_coordinates(_atom_table(params["atoms"]))
    except KeyError as err:
        raise ValueError(f"space '{kind}': missing parameter {err}") from None
    raise ValueError(f"unknown space kind '{kind}'")


def load_space_config(path) -> MetricMeasureSpace:
    """Read a ``[space]`` section from an INI-style key-value file."""
    import configparser

    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    if "space" not in cp:
        raise ValueError(f"{path}: no [space] section")
    return space_from_spec(dict(cp["space"]))
