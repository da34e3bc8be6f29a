"""1-NN binary classification with regression function ``eta = P(Y = 1 | X)``.

Exact risks integrate the identity::

    P(Y_NN != Y) = E[eta(NN) (1 - eta(X))] + E[eta(X) (1 - eta(NN))]

over anchor atoms ``x`` with the NN law from the sphere-decomposition
engine. The test point is drawn independently of the training sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._num import to_fraction
from .fields import ScalarField
from .nn import _Moments, block_layout, block_streams, choose_columns, nn_atom_distribution, run_blocks
from .space import AtomicSpace, MetricMeasureSpace
from .tiebreak import TieBreakRule, UnsupportedRuleError
from .wide import WideFloat, wsum


class LabeledModel:
    """A space plus a regression function with values in ``[0, 1]``."""

    def __init__(self, space: MetricMeasureSpace, eta: ScalarField):
        self.space = space
        self.eta = eta
        if isinstance(space, AtomicSpace):
            for p, _ in space.atoms():
                v = eta(p)
                if not 0 <= v <= 1:
                    raise ValueError(f"eta({p}) = {v} outside [0, 1]")

    def sample(self, rng: np.random.Generator, size: int):
        """``(points, labels)`` with one uniform per label."""
        pts = self.space.sample(rng, size)
        u = rng.random(size)
        labels = np.array([ui < float(self.eta(p)) for p, ui in zip(pts, u)], dtype=np.int8)
        return pts, labels


@dataclass
class RiskReport:
    m: int
    risk: float
    stderr: float
    surrogate: float
    bayes: float
    prop_inf_bound: float | None
    method: str = "exact"

    def within_bound(self, k: float = 4.0) -> bool | None:
        """``|risk - surrogate| <= bound (+ k stderr in MC mode)``."""
        if self.prop_inf_bound is None:
            return None
        return abs(self.risk - self.surrogate) <= self.prop_inf_bound + k * self.stderr

    HEADER = ("m", "risk", "stderr", "surrogate", "bayes", "prop_inf_bound")

    def row(self) -> tuple:
        return (self.m, self.risk, self.stderr, self.surrogate, self.bayes,
                "" if self.prop_inf_bound is None else self.prop_inf_bound)


def surrogate_and_bayes(model: LabeledModel, exact: bool = False, samples: int = 10**6, seed: int = 0):
    """``(2 E[eta (1 - eta)], E[min(eta, 1 - eta)])``.

    Atomic spaces are summed directly; other spaces are estimated from
    ``samples`` draws.
    """
    space, eta = model.space, model.eta
    if isinstance(space, AtomicSpace):
        if exact or space.has_exact:
            atoms = space.atoms(exact=True)
            sur = 2 * sum((w * to_fraction(eta(p)) * (1 - to_fraction(eta(p))) for p, w in atoms), Fraction(0))
            bay = sum((w * min(to_fraction(eta(p)), 1 - to_fraction(eta(p))) for p, w in atoms), Fraction(0))
            return (sur, bay) if exact else (float(sur), float(bay))
        atoms = space.atoms()
        sur = 2 * math.fsum(float(w) * float(eta(p)) * (1 - float(eta(p))) for p, w in atoms)
        bay = math.fsum(float(w) * min(float(eta(p)), 1 - float(eta(p))) for p, w in atoms)
        return sur, bay
    pts = space.sample(np.random.default_rng(seed), samples)
    v = np.array([float(eta(p)) for p in pts])
    return float(2 * np.mean(v * (1 - v))), float(np.mean(np.minimum(v, 1 - v)))


def _risk_and_bound(model, rule, m, exact: bool):
    """Exact risk and the averaged NN-error bound, sharing one NN law per anchor."""
    space, eta = model.space, model.eta
    risk_terms, bound_terms = [], []
    for x, px in space.atoms(exact=exact):
        ex = to_fraction(eta(x))
        for a, _, q in nn_atom_distribution(space, x, rule, m, exact):
            ea = to_fraction(eta(a))
            mismatch = ex * (1 - ea) + (1 - ex) * ea
            dev = abs(ea - ex)
            if exact:
                risk_terms.append(px * q * mismatch)
                bound_terms.append(px * q * dev)
            else:
                risk_terms.append(px * q * WideFloat.from_fraction(mismatch))
                bound_terms.append(px * q * WideFloat.from_fraction(dev))
    if exact:
        return sum(risk_terms, Fraction(0)), sum(bound_terms, Fraction(0))
    return float(wsum(risk_terms)), float(wsum(bound_terms))


def prop_inf_bound(model: LabeledModel, rule: TieBreakRule, m: int, exact: bool = False):
    """``sum_x p(x) E|eta(X^x_m) - eta(x)|`` over anchor atoms."""
    return _risk_and_bound(model, rule, m, exact)[1]


def nn_classification_risk(model: LabeledModel, rule: TieBreakRule, m: int, mode: str = "exact",
                           trials: int = 10**5, seed: int = 0, workers: int = 1, exact: bool = False) -> RiskReport:
    """Risk of the 1-NN classifier trained on ``m`` labelled samples.

    ``exact`` mode needs an atomic space and an ISIMIN rule; ``exact=True``
    additionally keeps everything rational (values still reported as floats).
    """
    space = model.space
    if mode == "exact":
        if not isinstance(space, AtomicSpace):
            raise UnsupportedRuleError("exact risk needs an atomic space")
        if not rule.is_isimin:
            raise UnsupportedRuleError(f"exact risk needs an ISIMIN rule, got {rule.name}")
        risk, bound = _risk_and_bound(model, rule, m, exact)
        sur, bay = surrogate_and_bayes(model, exact)
        return RiskReport(m, float(risk), 0.0, float(sur), float(bay), float(bound), "exact")
    if mode != "mc":
        raise ValueError("mode must be 'exact' or 'mc'")
    risk, se = _mc_risk(model, rule, m, trials, seed, workers)
    sur, bay = surrogate_and_bayes(model, seed=seed)
    try:
        bound = float(prop_inf_bound(model, rule, m)) if isinstance(space, AtomicSpace) else None
    except UnsupportedRuleError:
        bound = None
    return RiskReport(m, risk, se, sur, bay, bound, "mc")


class _MultiAnchorSampler:
    """Distance ranks between every pair of support atoms."""

    def __init__(self, space: AtomicSpace, eta):
        pts = space.support_points
        k = len(pts)
        self.space = space
        self.eta = np.array([float(eta(p)) for p in pts])
        self.rank = np.zeros((k, k), dtype=np.int64)
        self.sign = np.zeros((k, k), dtype=np.int64)
        levels = []
        for i, x in enumerate(pts):
            d = [space.distance(x, p) for p in pts]
            lv = sorted(set(d))
            pos = {v: j for j, v in enumerate(lv)}
            self.rank[i] = [pos[v] for v in d]
            levels.append([float(v) for v in lv])
            for j, p in enumerate(pts):
                try:
                    diff = to_fraction(p) - to_fraction(x)
                    self.sign[i, j] = (diff > 0) - (diff < 0)
                except (TypeError, ValueError):
                    pass
        width = max(len(lv) for lv in levels)
        self.level_radius = np.array([lv + [math.inf] * (width - len(lv)) for lv in levels])

    def mismatches(self, rule, m, n, rs, rt) -> np.ndarray:
        xi = self.space.sample_indices(rs, n)
        idx = self.space.sample_indices(rs, (n, m))
        ranks = self.rank[xi[:, None], idx]
        best = ranks.min(axis=1)
        mask = ranks == best[:, None]
        pts = self.space.support_points
        col = choose_columns(rule, mask, self.sign[xi[:, None], idx], self.level_radius[xi, best], rt,
                             pts, idx, [pts[i] for i in xi])
        nn = idx[np.arange(n), col]
        u = rs.random((n, 2))
        y = u[:, 0] < self.eta[xi]
        y_nn = u[:, 1] < self.eta[nn]
        return (y != y_nn).astype(float)


def _mc_risk(model, rule, m, trials, seed, workers):
    space = model.space
    if isinstance(space, AtomicSpace):
        sampler = _MultiAnchorSampler(space, model.eta)

        def block(b, n):
            rs, rt = block_streams(seed, b)
            return _Moments.of(sampler.mismatches(rule, m, n, rs, rt))
    else:
        eta = model.eta

        def block(b, n):
            rs, _ = block_streams(seed, b)
            x = np.asarray(space.sample(rs, n), dtype=float)
            pts = np.asarray(space.sample(rs, (n, m)), dtype=float)
            nn = pts[np.arange(n), np.argmin(np.abs(pts - x[:, None]), axis=1)]
            u = rs.random((n, 2))
            y = u[:, 0] < np.array([float(eta(p)) for p in x])
            y_nn = u[:, 1] < np.array([float(eta(p)) for p in nn])
            return _Moments.of((y != y_nn).astype(float))

    total = _Moments(0, 0.0, 0.0)
    for part in run_blocks(block, block_layout(trials, m), workers):
        total = total.merge(part)
    se = math.sqrt(total.m2 / (total.n - 1) / total.n) if total.n > 1 else 0.0
    return total.mean, se


@dataclass
class RealizabilityReport:
    realizable: bool
    half_mass: bool  # some charged atom has eta = 1/2 (within tolerance)
    offending: list

    def __bool__(self):
        return self.realizable


def realizability_check(model: LabeledModel, tolerance: float = 1e-9) -> RealizabilityReport:
    """Every charged atom has ``eta`` within ``tolerance`` of 0 or 1."""
    if not isinstance(model.space, AtomicSpace):
        raise UnsupportedRuleError("realizability check needs an atomic space")
    bad, half = [], False
    for p, _ in model.space.atoms():
        v = float(model.eta(p))
        if min(v, 1 - v) > tolerance:
            bad.append(p)
        if abs(v - 0.5) <= tolerance:
            half = True
    return RealizabilityReport(not bad, half, bad)
