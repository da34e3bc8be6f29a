"""Lebesgue ratios, alpha-sequences, sufficient-condition checkers and Lebesgue values.

For a field ``eta``, anchor ``c`` and query point ``x``::

    ratio(r)   = E[1_ball(X) |eta(X) - c|] / P(ball)
    M_alpha(r) = E[1_{B̄_r}(X) |eta(X) - c|]**alpha * P(B̄_r)**(1 - alpha)

``M_alpha`` is non-decreasing and right-continuous in ``r``. On atomic spaces
it is a step function jumping at table radii, so the radius
``r_m = sup{r : M_alpha(r) < 1/m}`` is the smallest table radius with
``M_alpha >= 1/m`` and each radius serves a whole block of consecutive ``m``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import mpmath
import numpy as np

from ._num import to_fraction
from .fields import ScalarField
from .nn import AtomicSampler, block_layout, block_streams, nn_atom_distribution, run_blocks
from .space import AtomicSpace, MetricMeasureSpace, UndefinedRatio, UnitIntervalSpace
from .tiebreak import TieBreakRule, UnsupportedRuleError
from .wide import WideFloat, to_mpf

_DPS = 60


class TrivialCase(Exception):
    """``x`` is an atom or the ball integrals vanish: Lebesgue point for free."""


# ---------------------------------------------------------------------------
# ratios


def _measure(space, x, r, closed: bool, exact: bool):
    if closed:
        return space.measure_closed_ball(x, r, exact=exact)
    return space.measure_open_ball(x, r, exact=exact)


def ball_terms(space, field, x, r, closed: bool = True, exact: bool = False, anchor=None):
    """``(E[1_ball |eta - c|], P(ball))``."""
    c = field.anchor_at(x) if anchor is None else anchor
    return (space.ball_integral(x, r, field, c, closed=closed, exact=exact),
            _measure(space, x, r, closed, exact))


def lebesgue_ratio(space, field, x, r, ball: str = "closed", exact: bool = False, anchor=None):
    """Ball average of ``|eta - anchor|``; a ``Fraction`` when ``exact``."""
    if ball not in ("closed", "open"):
        raise ValueError("ball must be 'closed' or 'open'")
    num, den = ball_terms(space, field, x, r, ball == "closed", exact, anchor)
    if not den:
        raise UndefinedRatio(f"{ball} ball of radius {r} around {x} has zero mass")
    return num / den if exact else float(num / den)


def m_alpha(integral, mass, alpha) -> mpmath.mpf:
    """``integral**alpha * mass**(1 - alpha)`` at high precision."""
    with mpmath.workdps(_DPS):
        e, p = _mpf(integral), _mpf(mass)
        if e == 0 or p == 0:
            return mpmath.mpf(0)
        a = _mpf(alpha)
        return mpmath.exp(a * mpmath.log(e) + (1 - a) * mpmath.log(p))


def _mpf(v):
    if isinstance(v, WideFloat):
        return to_mpf(v)
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def reaches(integral, mass, alpha, m: int) -> bool:
    """``M_alpha >= 1/m``; exact rational comparison when ``alpha = 1/2``."""
    if not integral or not mass:
        return False
    if to_fraction(alpha) == Fraction(1, 2) and isinstance(integral, Fraction) and isinstance(mass, Fraction):
        return integral * mass * m * m >= 1
    with mpmath.workdps(_DPS):
        return m_alpha(integral, mass, alpha) * m >= 1


def _ceil_inverse(integral, mass, alpha) -> int | None:
    """Smallest integer m with ``M_alpha >= 1/m`` (``None`` when ``M = 0``)."""
    if not integral or not mass:
        return None
    if to_fraction(alpha) == Fraction(1, 2) and isinstance(integral, Fraction) and isinstance(mass, Fraction):
        q = 1 / (integral * mass)  # want the least m with m*m >= q
        m = math.isqrt(q.numerator // q.denominator)
        while m * m < q:
            m += 1
        return max(m, 1)
    with mpmath.workdps(_DPS):
        m = max(int(mpmath.ceil(1 / m_alpha(integral, mass, alpha))), 1)
    # guard the last unit against rounding in the transcendental path
    while m > 1 and reaches(integral, mass, alpha, m - 1):
        m -= 1
    while not reaches(integral, mass, alpha, m):
        m += 1
    return m


# ---------------------------------------------------------------------------
# alpha-sequences


@dataclass(frozen=True)
class AlphaBlock:
    """``r_m = radius`` for every ``m`` in ``[m_lo, m_hi]``."""

    m_lo: int
    m_hi: int
    radius: object
    closed_integral: object
    closed_mass: object
    open_integral: object
    open_mass: object


@dataclass
class AlphaSequence:
    alpha: object
    m_start: int
    m_max: int
    blocks: list = dc_field(default_factory=list)  # atomic spaces
    points: list = dc_field(default_factory=list)  # interval spaces: (m, r, M(r))
    exact: bool = False

    def radius(self, m: int):
        if m < self.m_start or m > self.m_max:
            raise KeyError(f"m={m} outside [{self.m_start}, {self.m_max}]")
        if self.blocks:
            k = bisect.bisect_right([b.m_lo for b in self.blocks], m) - 1
            return self.blocks[k].radius
        for mm, r, _ in self.points:
            if mm == m:
                return r
        raise KeyError(f"m={m} not stored")

    def block_of(self, m: int) -> AlphaBlock:
        k = bisect.bisect_right([b.m_lo for b in self.blocks], m) - 1
        return self.blocks[k]

    def radii(self) -> list:
        """Distinct radii in order of increasing m."""
        if self.blocks:
            return [b.radius for b in self.blocks]
        return [r for _, r, _ in self.points]

    def M_value(self, r):
        for b in self.blocks:
            if b.radius == r:
                return m_alpha(b.closed_integral, b.closed_mass, self.alpha)
        for _, rr, M in self.points:
            if rr == r:
                return M
        raise KeyError(r)

    def check_m1(self, m: int) -> bool:
        """``m >= (1/P(B̄)) * closed_ratio**-alpha`` at ``r_m``, i.e. ``M_closed(r_m) >= 1/m``."""
        b = self.block_of(m)
        return reaches(b.closed_integral, b.closed_mass, self.alpha, m)

    def check_m2(self, m: int) -> bool:
        """``m <= (1/E_open) * open_ratio**(1-alpha)`` at ``r_m``, i.e. ``M_open(r_m) <= 1/m``.

        The right-hand side is infinite when the open-ball integral vanishes.
        """
        b = self.block_of(m)
        if not b.open_integral:
            return True
        if to_fraction(self.alpha) == Fraction(1, 2) and self.exact:
            return b.open_integral * b.open_mass * m * m <= 1
        with mpmath.workdps(_DPS):
            return m_alpha(b.open_integral, b.open_mass, self.alpha) * m <= 1


def detect_trivial(space, field, x, anchor=None) -> str | None:
    """Reason string when ``x`` is a Lebesgue point for trivial reasons."""
    if isinstance(space, AtomicSpace):
        if space.mass(x):
            return "atom at x"
        table = space.sphere_table(x)
        total = space.ball_integral(x, table[-1].radius, field, field.anchor_at(x) if anchor is None else anchor)
        if not total:
            return "vanishing integral"
    return None


def alpha_sequence(space, field, x, alpha=Fraction(1, 2), m_max: int = 10**6, anchor=None,
                   m_grid=None, rel_tol: float = 1e-12, exact: bool | None = None) -> AlphaSequence:
    """Build the alpha-sequence at ``x`` up to ``m_max``.

    Atomic spaces: exact block decomposition of all ``m`` in
    ``[m_start, m_max]``. Interval spaces: bisection in ``log r`` to relative
    width ``rel_tol`` at every ``m`` in ``m_grid`` (default: a log grid).
    Raises :class:`TrivialCase` when ``x`` is an atom or the integrals vanish.
    """
    alpha = to_fraction(alpha)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    reason = detect_trivial(space, field, x, anchor)
    if reason:
        raise TrivialCase(reason)
    if isinstance(space, AtomicSpace):
        return _alpha_atomic(space, field, x, alpha, m_max, anchor, space.has_exact if exact is None else exact)
    return _alpha_interval(space, field, x, alpha, m_max, anchor, m_grid, rel_tol)


def _alpha_atomic(space, field, x, alpha, m_max, anchor, exact):
    c = field.anchor_at(x) if anchor is None else anchor
    rows = [row for row in space.sphere_table(x, exact) if row.radius > 0]
    zero = Fraction(0) if exact else WideFloat()
    integ, acc = [], zero
    for row in rows:
        acc = acc + _sphere_integral(row, field, c, exact)
        integ.append(acc)
    top = rows[-1]
    m_start = _ceil_inverse(integ[-1], top.closed, alpha)
    if m_start is None:
        raise TrivialCase("vanishing integral")
    seq = AlphaSequence(alpha, m_start, m_max, exact=exact)
    # radius k serves m in [ceil(1/M_k), ceil(1/M_{k-1}) - 1]; larger radii come first
    for k in range(len(rows) - 1, -1, -1):
        row = rows[k]
        lo = _ceil_inverse(integ[k], row.closed, alpha)
        if lo is None:
            break
        lo = max(lo, m_start)
        below = _ceil_inverse(integ[k - 1], rows[k - 1].closed, alpha) if k else None
        hi = m_max if below is None else min(below - 1, m_max)
        if lo > m_max:
            break
        if lo <= hi:
            open_int = integ[k - 1] if k else zero
            seq.blocks.append(AlphaBlock(lo, hi, row.radius, integ[k], row.closed, open_int, row.open))
        if below is None:
            break
    return seq


def _sphere_integral(row, field, c, exact):
    if exact:
        cq = to_fraction(c)
        return sum((w * abs(to_fraction(field(p)) - cq) for p, w in row.atoms), Fraction(0))
    total = WideFloat()
    for p, w in row.atoms:
        total = total + w * WideFloat.from_fraction(abs(to_fraction(field(p)) - to_fraction(c)))
    return total


def _alpha_interval(space, field, x, alpha, m_max, anchor, m_grid, rel_tol):
    c = field.anchor_at(x) if anchor is None else anchor

    def M(r):
        return m_alpha(space.ball_integral(x, r, field, c, exact=True), space.measure_closed_ball(x, r, exact=True), alpha)

    top = Fraction(1)
    m_start = int(mpmath.ceil(1 / M(top))) if M(top) else None
    if m_start is None:
        raise TrivialCase("vanishing integral")
    floor_r = Fraction(getattr(space, "resolution", Fraction(1, 2**60)))
    if m_grid is None:
        m_grid = sorted({int(round(v)) for v in np.geomspace(m_start, m_max, 25)})
    seq = AlphaSequence(alpha, m_start, m_max)
    for m in (mm for mm in m_grid if m_start <= mm <= m_max):
        target = mpmath.mpf(1) / m
        lo, hi = math.log(float(floor_r)), 0.0
        if M(Fraction(math.exp(lo))) >= target:
            seq.points.append((m, float(floor_r), float(M(floor_r))))
            continue
        while hi - lo > rel_tol:
            mid = 0.5 * (lo + hi)
            if M(Fraction(math.exp(mid))) < target:
                lo = mid
            else:
                hi = mid
        r = math.exp(hi)
        seq.points.append((m, r, float(M(Fraction(r)))))
    return seq


# ---------------------------------------------------------------------------
# sufficient conditions


@dataclass
class ConditionReport:
    kind: str
    constant: float | Fraction
    witness: list
    holds: bool
    details: list = dc_field(default_factory=list)  # (radius, [m,] ratio)
    stderr: float = 0.0


def check_measure_continuity(space: MetricMeasureSpace, x, R=None, probes=None) -> ConditionReport:
    """``K = sup_{r < R} P(S_r) / P(B_r)`` with ``0/0 = 0``; infinite when a
    charged sphere has an empty open ball."""
    if isinstance(space, AtomicSpace):
        table = [row for row in space.sphere_table(x) if row.radius > 0]
        R = table[-1].radius if R is None else to_fraction(R)
        if probes is None:
            cand = [(row.radius, row.sphere, row.open) for row in table if row.radius < R]
        else:
            cand = [(to_fraction(r), space.measure_sphere(x, r), space.measure_open_ball(x, r)) for r in probes]
    else:
        if probes is None:
            raise ValueError("interval spaces need explicit probe radii")
        cand = [(r, space.measure_sphere(x, r), space.measure_open_ball(x, r)) for r in probes]
    details = []
    for r, s, b in cand:
        if not s:
            ratio = 0.0
        elif not b:
            ratio = math.inf
        else:
            ratio = float(s / b)
        details.append((r, ratio))
    K = max((d[1] for d in details), default=0.0)
    witness = [r for r, v in details if v == K]
    return ConditionReport("measure_continuity", K, witness, math.isfinite(K), details)


def check_tie_bias(space: AtomicSpace, field, x, rule: TieBreakRule, ms, exact: bool = False, anchor=None,
                   trials: int = 10**5, seed: int = 0, workers: int = 1) -> ConditionReport:
    """``C = sup`` over spheres and ``m`` of the NN sphere-conditional error
    divided by the measure's sphere-conditional error.

    Spheres of zero mass, and spheres where both conditionals vanish, are
    skipped. Rules without an exact sphere law fall back to Monte Carlo.
    """
    c = field.anchor_at(x) if anchor is None else anchor
    cq = to_fraction(c)
    table = [row for row in space.sphere_table(x, exact) if row.sphere]
    mu_cond = {}
    for row in table:
        tot = sum((w for _, w in row.atoms), Fraction(0) if exact else WideFloat())
        num = sum((w * _dev(field(p), cq, exact) for p, w in row.atoms), Fraction(0) if exact else WideFloat())
        mu_cond[row.radius] = num / tot if exact else float(num / tot)
    details, stderr = [], 0.0
    try:
        for m in ms:
            law = nn_atom_distribution(space, x, rule, m, exact)
            by_r: dict = {}
            for p, r, q in law:
                by_r.setdefault(r, []).append((p, q))
            for row in table:
                pairs = by_r.get(row.radius, [])
                hit = sum((q for _, q in pairs), Fraction(0) if exact else WideFloat())
                if not hit:
                    continue
                num = sum((q * _dev(field(p), cq, exact) for p, q in pairs), Fraction(0) if exact else WideFloat())
                nn_cond = num / hit if exact else float(num / hit)
                details.append((row.radius, m, _ratio(nn_cond, mu_cond[row.radius])))
    except UnsupportedRuleError:
        details, stderr = _tie_bias_mc(space, field, x, rule, ms, c, mu_cond, trials, seed, workers)
    details = [d for d in details if d[2] is not None]
    C = max((d[2] for d in details), default=0)
    witness = [(r, m) for r, m, v in details if v == C]
    return ConditionReport("tie_bias", C, witness, C != math.inf, details, stderr)


def _dev(value, cq, exact):
    d = abs(to_fraction(value) - cq)
    return d if exact else WideFloat.from_fraction(d)


def _ratio(nn_cond, mu_cond):
    if not mu_cond:
        return None if not nn_cond else math.inf
    return nn_cond / mu_cond


def _tie_bias_mc(space, field, x, rule, ms, c, mu_cond, trials, seed, workers):
    sampler = AtomicSampler(space, x)
    dev = np.array([abs(float(field(p)) - float(c)) for p in sampler.points])
    details, worst_se = [], 0.0
    for m in ms:
        def block(b, n, m=m):
            rs, rt = block_streams(seed, b)
            return sampler.draw_nn(rule, m, n, rs, rt)

        nn = np.concatenate(run_blocks(block, block_layout(trials, m), workers))
        ranks = sampler.rank[nn]
        for k, r in enumerate(sorted(mu_cond)):
            level = np.flatnonzero(sampler.level_radius == float(r))
            if level.size == 0:
                continue
            sel = dev[nn][ranks == level[0]]
            if sel.size < 2:
                continue
            mean = float(sel.mean())
            se = float(sel.std(ddof=1) / math.sqrt(sel.size))
            ratio = _ratio(mean, float(mu_cond[r]))
            if ratio is not None and mu_cond[r]:
                worst_se = max(worst_se, se / float(mu_cond[r]))
            details.append((r, m, ratio))
    return details, worst_se


# ---------------------------------------------------------------------------
# Lebesgue values


@dataclass
class ValueEstimate:
    l_hat: float
    method: str
    trace: list  # (r, mean) or (m, mean, error)
    converged: bool
    spread: float


def _ball_mean(space, field, x, r) -> float:
    # E[eta | B̄_r] via |eta + B| = eta + B for the field bound B
    B = field.bound
    num = space.ball_integral(x, r, field, -B)
    den = space.measure_closed_ball(x, r)
    if not den:
        raise UndefinedRatio(f"closed ball of radius {r} has zero mass")
    return float(WideFloat.coerce(num) / den) - float(B)


def lebesgue_value_estimate(space, field, x, method: str = "ratio", radii=None, ms=None,
                            rule: TieBreakRule | None = None, tol: float = 1e-2) -> ValueEstimate:
    """Estimate the Lebesgue value at ``x``.

    ``ratio``: ball means ``E[eta | B̄_r]`` along ``radii`` (decreasing);
    ``nn``: ``E[eta(X^x_m)]`` along ``ms`` from the exact engine (ISIMIN rule).
    The estimate is the last entry; ``converged`` asks that the last three
    entries differ by less than ``tol``, a numerical proxy only.
    """
    if method == "ratio":
        if radii is None:
            if not isinstance(space, AtomicSpace):
                raise ValueError("interval spaces need explicit radii")
            radii = sorted((r for r in space.sphere_radii(x) if r > 0), reverse=True)
        trace = [(r, _ball_mean(space, field, x, r)) for r in radii]
        values = [v for _, v in trace]
    elif method == "nn":
        from .tiebreak import LexicographicRule

        rule = rule or LexicographicRule()
        if not rule.is_isimin:
            raise ValueError("the nn method needs an ISIMIN rule")
        trace = []
        for m in ms or [10, 100, 1000, 10**4]:
            law = nn_atom_distribution(space, x, rule, m)
            mean = math.fsum(float(q) * float(field(p)) for p, _, q in law)
            err = math.fsum(float(q) * abs(float(field(p)) - mean) for p, _, q in law)
            trace.append((m, mean, err))
        values = [t[1] for t in trace]
    else:
        raise ValueError("method must be 'ratio' or 'nn'")
    tail = values[-3:]
    spread = max(tail) - min(tail)
    return ValueEstimate(values[-1], method, trace, len(tail) == 3 and spread < tol, spread)


# ---------------------------------------------------------------------------
# sequences


@dataclass
class SequenceVerdict:
    radii: list
    ratios: list
    lebesgue: bool
    tol: float


def along_sequence_check(space, field, x, radii, tol: float = 1e-2, ball: str = "closed", exact: bool = False) -> SequenceVerdict:
    """Ratios along ``radii``; verdict: last three below ``tol`` and non-increasing.

    A finite probe can only suggest the limit; the verdict is a proxy.
    """
    radii = list(radii)
    if any(to_fraction(r) <= 0 for r in radii):
        raise ValueError("radii must be positive")
    ratios = [lebesgue_ratio(space, field, x, r, ball, exact) for r in radii]
    tail = [float(v) for v in ratios[-3:]]
    ok = len(tail) == 3 and all(v < tol for v in tail) and all(a >= b for a, b in zip(tail, tail[1:]))
    return SequenceVerdict(radii, ratios, ok, tol)


def characterization_experiment(space, field, x, alpha=Fraction(1, 2), m_max: int = 10**6, dense=None, tol: float = 1e-2):
    """Verdicts along the alpha-sequence radii and along a dense grid."""
    seq = alpha_sequence(space, field, x, alpha, m_max)
    along = along_sequence_check(space, field, x, seq.radii(), tol)
    if dense is None:
        dense = sorted((r for r in space.sphere_radii(x) if r > 0), reverse=True)
    grid = along_sequence_check(space, field, x, dense, tol)
    return seq, along, grid
