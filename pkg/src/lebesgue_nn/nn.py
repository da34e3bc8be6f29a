"""1-NN estimation: online updates, exact sphere decomposition and Monte Carlo.

The exact engine works on atomic spaces. For a query point ``x`` it walks
the sphere table: the NN distance equals ``r`` with probability
``(1 - P(B_r))**m - (1 - P(B̄_r))**m`` and the tie-breaking rule decides how
that mass splits over the atoms on the sphere. With ``exact=True`` all of
this runs in rational arithmetic; otherwise in :class:`WideFloat`.

Monte Carlo trials are grouped into fixed-size blocks. Block ``b`` draws its
samples and its tie-breaking randomness from two streams spawned off
``SeedSequence(seed, spawn_key=(b,))``, and block statistics are merged in
block order, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from fractions import Fraction

import numpy as np

from ._csvio import write_csv
from ._num import to_fraction
from .fields import ScalarField
from .space import AtomicSpace, MetricMeasureSpace, UnsupportedOperation
from .tiebreak import TieBreakRule, UnsupportedRuleError, gap_power
from .wide import ONE, WideFloat, wsum

# ~32 MB of float64 per block; the block size depends on m only
BLOCK_ELEMENTS = 1 << 22


# ---------------------------------------------------------------------------
# online NN


@dataclass(frozen=True)
class OnlineNNState:
    R: object = math.inf
    Y: object = 0
    count: int = 0


def online_nn_step(state: OnlineNNState, sample, field: ScalarField, x, space=None) -> OnlineNNState:
    """Feed one sample; only a strictly closer sample replaces the current NN."""
    d = space.distance(x, sample) if space is not None else abs(to_fraction(sample) - to_fraction(x))
    if d < state.R:
        return OnlineNNState(d, field(sample), state.count + 1)
    return OnlineNNState(state.R, state.Y, state.count + 1)


def online_nn(stream, field, x, space=None) -> OnlineNNState:
    state = OnlineNNState()
    for p in stream:
        state = online_nn_step(state, p, field, x, space)
    return state


# ---------------------------------------------------------------------------
# convergence curves


@dataclass
class ConvergenceCurve:
    rows: list = dc_field(default_factory=list)
    metadata: dict = dc_field(default_factory=dict)

    HEADER = ("m", "error", "stderr", "method")

    def add(self, m: int, error: float, stderr: float, method: str) -> None:
        if self.rows and m <= self.rows[-1][0]:
            raise ValueError("m must be strictly increasing")
        if method not in ("exact", "mc"):
            raise ValueError(f"unknown method {method!r}")
        if method == "exact" and stderr != 0:
            raise ValueError("exact rows carry no standard error")
        self.rows.append((int(m), float(error), float(stderr), method))

    def to_csv(self, path=None) -> str:
        return write_csv(path, self.HEADER, self.rows, self.metadata)


# ---------------------------------------------------------------------------
# exact engine


def _require_atomic(space) -> AtomicSpace:
    if not isinstance(space, AtomicSpace):
        raise UnsupportedOperation(f"exact engine needs an atomic space, got {space.kind}")
    return space


def nn_distance_distribution(space: MetricMeasureSpace, x, m: int, exact: bool = False) -> list[tuple]:
    """``[(radius, P(NN distance = radius)), ...]`` over the sphere table."""
    space = _require_atomic(space)
    return [(row.radius, gap_power(row.outside, row.sphere, m, exact, row.closed)) for row in space.sphere_table(x, exact)]


def nn_atom_distribution(space: MetricMeasureSpace, x, rule: TieBreakRule, m: int, exact: bool = False) -> list[tuple]:
    """``[(point, radius, P(NN = point)), ...]`` for every atom of positive mass."""
    space = _require_atomic(space)
    if m < 1:
        raise ValueError("m must be >= 1")
    out = []
    for row in space.sphere_table(x, exact):
        law = rule.sphere_law(x, row.radius, row.atoms, row.open, row.outside, m, exact)
        out.extend((p, row.radius, prob) for p, prob in law)
    return out


def _abs_dev(value, center, exact: bool):
    d = abs(to_fraction(value) - to_fraction(center))
    return d if exact else WideFloat.from_fraction(d)


def _anchor(field: ScalarField, x, anchor):
    return field.anchor_at(x) if anchor is None else anchor


def exact_nn_error(space, field: ScalarField, x, rule: TieBreakRule, m: int, exact: bool = False, anchor=None):
    """``E|eta(X^x_m) - anchor|`` in closed form.

    Returns a ``Fraction`` when ``exact`` and a float otherwise. Raises
    :class:`UnsupportedRuleError` when the rule has no exact sphere law on
    this space (callers fall back to :func:`mc_nn_error`).
    """
    c = _anchor(field, x, anchor)
    dist = nn_atom_distribution(space, x, rule, m, exact)
    terms = [prob * _abs_dev(field(p), c, exact) for p, _, prob in dist]
    if exact:
        return sum(terms, Fraction(0))
    return float(wsum(terms))


def nn_error_split(space, field, x, rule, m: int, r, exact: bool = False, anchor=None) -> tuple:
    """NN error restricted to ``B_r``, ``S_r`` and the complement of ``B̄_r``."""
    c = _anchor(field, x, anchor)
    r = to_fraction(r)
    parts = ([], [], [])
    for p, rad, prob in nn_atom_distribution(space, x, rule, m, exact):
        k = 0 if rad < r else (1 if rad == r else 2)
        parts[k].append(prob * _abs_dev(field(p), c, exact))
    if exact:
        return tuple(sum(v, Fraction(0)) for v in parts)
    return tuple(wsum(v) for v in parts)


def sphere_hit_probability(space, x, rule, m: int, r, exact: bool = False):
    """``P(NN in S_r)``."""
    r = to_fraction(r)
    probs = [prob for _, rad, prob in nn_atom_distribution(space, x, rule, m, exact) if rad == r]
    return sum(probs, Fraction(0)) if exact else wsum(probs)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class _Moments:
    n: int
    mean: float
    m2: float

    @staticmethod
    def of(values: np.ndarray) -> "_Moments":
        n = int(values.size)
        if n == 0:
            return _Moments(0, 0.0, 0.0)
        mean = math.fsum(values) / n
        return _Moments(n, mean, math.fsum((values - mean) ** 2))

    def merge(self, other: "_Moments") -> "_Moments":
        if other.n == 0:
            return self
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        return _Moments(n, self.mean + delta * other.n / n, self.m2 + other.m2 + delta * delta * self.n * other.n / n)


def block_layout(trials: int, m: int) -> list[int]:
    """Trial counts per block; depends only on ``trials`` and ``m``."""
    size = max(1, min(trials, BLOCK_ELEMENTS // max(m, 1)))
    full, rest = divmod(trials, size)
    return [size] * full + ([rest] if rest else [])


def block_streams(seed: int, block: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (sampling, tie-breaking) generators for one block."""
    sample_ss, tie_ss = np.random.SeedSequence(seed, spawn_key=(block,)).spawn(2)
    return np.random.default_rng(sample_ss), np.random.default_rng(tie_ss)


def run_blocks(fn, layout: list[int], workers: int = 1) -> list:
    """``fn(block, size)`` over all blocks, results in block order."""
    jobs = list(enumerate(layout))
    if workers <= 1 or len(jobs) == 1:
        return [fn(b, n) for b, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def choose_columns(rule: TieBreakRule, mask, sign, radius, rng, points, idx, anchors) -> np.ndarray:
    """Tie-broken column per row; rules without a vectorized path go row by row.

    ``points[idx[i, j]]`` is the sampled point and ``anchors[i]`` the query
    point of row ``i``.
    """
    try:
        return rule.batch_choose(mask, sign, radius, rng)
    except NotImplementedError:
        pass
    cols = np.empty(mask.shape[0], dtype=np.int64)
    for i, row in enumerate(mask):
        hits = np.flatnonzero(row)
        if hits.size == 1:
            cols[i] = hits[0]
        else:
            cols[i] = rule.choose(anchors[i], [(int(j), points[idx[i, j]]) for j in hits], rng)
    return cols


class AtomicSampler:
    """Precomputed per-atom arrays for vectorized NN draws around ``x``."""

    def __init__(self, space: AtomicSpace, x):
        self.space = space
        self.x = x
        pts = space.support_points
        dists = [space.distance(x, p) for p in pts]
        levels = sorted(set(dists))
        rank_of = {d: k for k, d in enumerate(levels)}
        self.points = pts
        self.rank = np.array([rank_of[d] for d in dists], dtype=np.int64)
        self.level_radius = np.array([float(d) for d in levels])
        sign = []
        for p in pts:
            try:
                diff = to_fraction(p) - to_fraction(x)
                sign.append((diff > 0) - (diff < 0))
            except (TypeError, ValueError):
                sign.append(0)
        self.sign = np.array(sign, dtype=np.int64)

    def draw_nn(self, rule: TieBreakRule, m: int, n: int, rng_sample, rng_tie) -> np.ndarray:
        """Support-atom index of the NN in each of ``n`` independent m-samples."""
        idx = self.space.sample_indices(rng_sample, (n, m))
        ranks = self.rank[idx]
        best = ranks.min(axis=1)
        mask = ranks == best[:, None]
        col = choose_columns(rule, mask, self.sign[idx], self.level_radius[best], rng_tie,
                             self.points, idx, [self.x] * n)
        return idx[np.arange(n), col]


def mc_nn_error(space, field: ScalarField, x, rule: TieBreakRule, m: int, trials: int, seed: int = 0,
                workers: int = 1, anchor=None) -> tuple[float, float]:
    """``(error, stderr)``: the mean of ``|eta(X^x_m) - anchor|`` over ``trials`` draws."""
    if trials < 1 or m < 1:
        raise ValueError("need trials >= 1 and m >= 1")
    c = float(_anchor(field, x, anchor))
    if isinstance(space, AtomicSpace):
        sampler = AtomicSampler(space, x)
        dev = np.array([abs(float(field(p)) - c) for p in sampler.points])

        def block(b, n):
            rs, rt = block_streams(seed, b)
            return _Moments.of(dev[sampler.draw_nn(rule, m, n, rs, rt)])
    else:
        xf = float(x)

        def block(b, n):
            rs, _ = block_streams(seed, b)
            pts = np.asarray(space.sample(rs, (n, m)), dtype=float)
            nn = pts[np.arange(n), np.argmin(np.abs(pts - xf), axis=1)]
            return _Moments.of(np.array([abs(float(field(p)) - c) for p in nn]))

    total = _Moments(0, 0.0, 0.0)
    for part in run_blocks(block, block_layout(trials, m), workers):
        total = total.merge(part)
    if total.n < 2:
        return total.mean, 0.0
    return total.mean, math.sqrt(total.m2 / (total.n - 1) / total.n)


def nn_error(space, field, x, rule, m: int, trials: int = 10**5, seed: int = 0, workers: int = 1,
             mode: str = "auto", anchor=None) -> tuple[float, float, str]:
    """``(error, stderr, method)`` from the exact engine when possible, else MC."""
    if mode in ("auto", "exact"):
        try:
            return exact_nn_error(space, field, x, rule, m, anchor=anchor), 0.0, "exact"
        except (UnsupportedRuleError, UnsupportedOperation):
            if mode == "exact":
                raise
    err, se = mc_nn_error(space, field, x, rule, m, trials, seed, workers, anchor)
    return err, se, "mc"


# ---------------------------------------------------------------------------
# f_m envelope


@dataclass(frozen=True)
class Envelope:
    m: int
    t_max: float
    f_max: float
    a: float
    b: float


def f_m(m: int, t: float) -> float:
    """``m t (1 - t)**(m - 1)`` on ``[0, 1]``."""
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0 if m == 1 else 0.0
    return m * t * math.exp((m - 1) * math.log1p(-t))


def _bisect(pred, lo: float, hi: float, tol: float) -> float:
    """Boundary of ``pred`` on ``[lo, hi]`` where ``pred(lo) != pred(hi)``."""
    p_lo = pred(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if pred(mid) == p_lo:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fm_envelope(m: int, tol: float = 1e-14) -> Envelope:
    """Maximum of ``f_m`` (at ``1/m``) and the superlevel set ``{f_m >= 1/e}``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    level = math.exp(-1.0)
    t_max = 1.0 / m
    f_max = 1.0 if m == 1 else math.exp((m - 1) * math.log1p(-t_max))
    above = lambda t: f_m(m, t) >= level  # noqa: E731
    a = _bisect(above, 0.0, t_max, tol)
    b = 1.0 if m == 1 else _bisect(above, t_max, 1.0, tol)
    return Envelope(m, t_max, f_max, a, b)


# ---------------------------------------------------------------------------
# the ratio / NN-error inequality


@dataclass
class VsRow:
    r: Fraction
    m: int
    ratio: object
    bound: object
    holds: bool | None
    note: str = ""

    @property
    def margin(self):
        return None if self.holds is None else self.bound - self.ratio


def vs_inequality_check(space, field, x, rule, grid, exact: bool = True) -> list[VsRow]:
    """Check ``ratio(r) <= E|eta(NN) - anchor| / (m P(B̄_r) (1 - P(B̄_r))**(m-1))``.

    Grid points where ``P(B̄_r) = 1`` (or 0) are reported with ``holds=None``.
    """
    c = field.anchor_at(x)
    rows = []
    errors = {}
    for r, m in grid:
        r = to_fraction(r)
        P = space.measure_closed_ball(x, r, exact=exact) if isinstance(space, AtomicSpace) else space.measure_closed_ball(x, r)
        if P == (1 if exact else ONE) or not P:
            rows.append(VsRow(r, m, None, None, None, "ball mass is 0 or 1; skipped"))
            continue
        num = space.ball_integral(x, r, field, c, closed=True, exact=exact)
        if m not in errors:
            errors[m] = exact_nn_error(space, field, x, rule, m, exact=exact)
        if exact:
            ratio = num / P
            bound = errors[m] / (m * P * (1 - P) ** (m - 1))
        else:
            ratio = float(num / P)
            denom = WideFloat.coerce(m) * P * ((ONE - P) ** (m - 1))
            bound = float(WideFloat.coerce(errors[m]) / denom)
        rows.append(VsRow(r, m, ratio, bound, ratio <= bound))
    return rows
