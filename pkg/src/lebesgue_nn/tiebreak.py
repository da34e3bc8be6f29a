"""Tie-breaking rules for 1-NN selection.

A rule picks one sample index among the samples at minimal distance from the
query point. ISIMIN rules (independent selectors of indices of minimum
numbers) look only at the index set and their own randomness; the biased
rules here also look at which side of the query point a candidate lies on.

Every rule exposes three views of the same behaviour:

* :meth:`TieBreakRule.choose` for a single tie set (used by online and
  reference code),
* :meth:`TieBreakRule.batch_choose` for vectorized Monte Carlo,
* :meth:`TieBreakRule.choice_probabilities` and
  :meth:`TieBreakRule.sphere_law`, the exact laws used by the oracle and the
  sphere-decomposition engine.

Sample indices are 0-based throughout.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from ._num import exact_number, to_fraction
from .wide import WideFloat, power_gap, wsum


class UnsupportedRuleError(Exception):
    """No exact law is available for this rule on this sphere."""


def _sign(x, p) -> int:
    """Side of ``p`` relative to ``x`` on the line, 0 for non-numeric labels."""
    try:
        d = to_fraction(p) - to_fraction(x)
    except (TypeError, ValueError):
        return 0
    return (d > 0) - (d < 0)


def gap_power(base, gap, m: int, exact: bool, inside=None):
    """``(base + gap)**m - base**m``, exact or cancellation-free WideFloat.

    ``inside = 1 - base`` keeps ``base**m`` accurate when ``base`` is within
    rounding of one; the wide path uses it, the exact path does not need it.
    """
    if exact:
        return (base + gap) ** m - base**m
    return power_gap(base, gap, m, inside)


def _zero(exact: bool):
    return Fraction(0) if exact else WideFloat()


def _total(values, exact: bool):
    return sum(values, Fraction(0)) if exact else wsum(values)


class TieBreakRule:
    name = "rule"
    is_isimin = False

    def choose(self, x, candidates: Sequence[tuple], rng: np.random.Generator, radius=None) -> int:
        """Sample index chosen among ``candidates = [(index, point), ...]``."""
        raise NotImplementedError

    def choice_probabilities(self, x, candidates: Sequence[tuple], radius=None) -> dict:
        """Exact law of :meth:`choose` as ``{index: Fraction}``."""
        raise NotImplementedError

    def batch_choose(self, mask: np.ndarray, sign: np.ndarray, radius: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Column chosen in each row of a ``(trials, m)`` tie mask.

        ``sign`` holds the side of each sampled point relative to the query
        point and ``radius`` the (row-wise) NN distance as a float.
        """
        raise NotImplementedError

    def sphere_positive_prob(self, radius) -> Fraction | None:
        """Probability of taking the positive atom of a two-sided tie, if fixed."""
        return None

    def sphere_law(self, x, radius, atoms: Sequence[tuple], open_mass, outside, m: int, exact: bool = False) -> list:
        """``[(point, P(NN = point)), ...]`` for the atoms on one sphere.

        ``atoms`` are ``(point, mass)`` pairs, ``open_mass`` the open-ball
        mass and ``outside`` the mass strictly beyond the sphere.
        """
        raise UnsupportedRuleError(f"{self.name}: no exact sphere law")

    def spec(self) -> str:
        return self.name

    def __repr__(self):
        return f"<{type(self).__name__} {self.spec()}>"


class _IsiminRule(TieBreakRule):
    is_isimin = True

    def sphere_law(self, x, radius, atoms, open_mass, outside, m, exact=False):
        # conditional on hitting the sphere first, an ISIMIN picks each atom
        # in proportion to its mass
        sphere = _total((w for _, w in atoms), exact)
        hit = gap_power(outside, sphere, m, exact, inside=_total([open_mass, sphere], exact))
        if not sphere:
            return [(p, _zero(exact)) for p, _ in atoms]
        return [(p, hit * w / sphere) for p, w in atoms]


class LexicographicRule(_IsiminRule):
    """Smallest sample index among the minimizers; ignores the rng."""

    name = "lex"

    def choose(self, x, candidates, rng=None, radius=None):
        return min(i for i, _ in candidates)

    def choice_probabilities(self, x, candidates, radius=None):
        return {min(i for i, _ in candidates): Fraction(1)}

    def batch_choose(self, mask, sign, radius, rng):
        return np.argmax(mask, axis=1)


class UniformRandomRule(_IsiminRule):
    """Each minimizer with equal probability.

    The batch path draws one uniform key per sample and keeps the minimizer
    with the smallest key, which is uniform over the tie set.
    """

    name = "uniform"

    def choose(self, x, candidates, rng, radius=None):
        return candidates[int(rng.integers(len(candidates)))][0]

    def choice_probabilities(self, x, candidates, radius=None):
        share = Fraction(1, len(candidates))
        return {i: share for i, _ in candidates}

    def batch_choose(self, mask, sign, radius, rng):
        keys = rng.random(mask.shape)
        keys[~mask] = 2.0
        return np.argmin(keys, axis=1)


class PreferenceRule(TieBreakRule):
    """Deterministic preference between points: lowest ``rank(x, p)`` wins.

    Equal ranks fall back to the smallest index. Not ISIMIN: the choice
    depends on where the candidates are.
    """

    def __init__(self, rank: Callable, name: str = "preference"):
        self.rank = rank
        self.name = name

    def _key(self, x, cand):
        i, p = cand
        return (self.rank(x, p), i)

    def choose(self, x, candidates, rng=None, radius=None):
        return min(candidates, key=lambda c: self._key(x, c))[0]

    def choice_probabilities(self, x, candidates, radius=None):
        return {self.choose(x, candidates): Fraction(1)}

    def sphere_law(self, x, radius, atoms, open_mass, outside, m, exact=False):
        # NN = a_j iff the sphere is reached and no more-preferred atom was drawn:
        # P = (base + p_j)^m - base^m with base = outside + less-preferred mass
        ranked = sorted(atoms, key=lambda a: self.rank(x, a[0]))
        ranks = [self.rank(x, p) for p, _ in ranked]
        if len(set(ranks)) != len(ranks):
            raise UnsupportedRuleError(f"{self.name}: equal preference on one sphere depends on sample order")
        law = []
        for j, (p, w) in enumerate(ranked):
            base = _total([outside] + [v for _, v in ranked[j + 1 :]], exact)
            inside = _total([open_mass] + [v for _, v in ranked[: j + 1]], exact)
            law.append((p, gap_power(base, w, m, exact, inside)))
        return law


class PositivePreferenceRule(PreferenceRule):
    """Always take the point on the positive side of the query point."""

    def __init__(self):
        super().__init__(lambda x, p: -_sign(x, p), "positive")

    def batch_choose(self, mask, sign, radius, rng):
        keys = np.where(mask, -sign, 2)
        return np.argmin(keys, axis=1)

    def sphere_positive_prob(self, radius):
        return Fraction(1)


def prefer_point(target, name: str | None = None) -> PreferenceRule:
    """Always take ``target`` when it is among the minimizers."""
    return PreferenceRule(lambda x, p: 0 if p == target else 1, name or f"prefer:{target}")


class BiasedBernoulliRule(TieBreakRule):
    """Bounded-bias rule on two-sided ties.

    When minimizers lie on both sides of the query point at distance ``r``,
    the positive side wins with probability ``min((C - 1) * r, 1)``; on the
    sphere of radius ``1/n`` this is ``(C - 1)/n``. One-sided tie sets are
    resolved by the smallest index, as are ties within one side.
    """

    def __init__(self, C=2):
        self.C = exact_number(C)
        if self.C <= 1:
            raise ValueError("BiasedBernoulliRule needs C > 1")
        self.name = f"bernoulli:C={float(self.C):g}"

    def positive_prob(self, radius) -> Fraction:
        return min((to_fraction(self.C) - 1) * to_fraction(radius), Fraction(1))

    sphere_positive_prob = positive_prob

    def _split(self, x, candidates):
        pos = [c for c in candidates if _sign(x, c[1]) > 0]
        rest = [c for c in candidates if _sign(x, c[1]) <= 0]
        return pos, rest

    def choose(self, x, candidates, rng, radius=None):
        pos, rest = self._split(x, candidates)
        if pos and rest:
            if radius is None:
                radius = abs(to_fraction(candidates[0][1]) - to_fraction(x))
            side = pos if rng.random() < float(self.positive_prob(radius)) else rest
            return min(i for i, _ in side)
        return min(i for i, _ in candidates)

    def choice_probabilities(self, x, candidates, radius=None):
        pos, rest = self._split(x, candidates)
        if pos and rest:
            if radius is None:
                radius = abs(to_fraction(candidates[0][1]) - to_fraction(x))
            w = self.positive_prob(radius)
            out = {min(i for i, _ in pos): w}
            j = min(i for i, _ in rest)
            out[j] = out.get(j, Fraction(0)) + 1 - w
            return {k: v for k, v in out.items() if v}
        return {min(i for i, _ in candidates): Fraction(1)}

    def batch_choose(self, mask, sign, radius, rng):
        pos = mask & (sign > 0)
        rest = mask & (sign <= 0)
        has_pos, has_rest = pos.any(axis=1), rest.any(axis=1)
        p = np.minimum((float(self.C) - 1.0) * radius, 1.0)
        take_pos = rng.random(mask.shape[0]) < p
        first_any = np.argmax(mask, axis=1)
        first_pos = np.argmax(pos, axis=1)
        first_rest = np.argmax(rest, axis=1)
        both = has_pos & has_rest
        return np.where(both, np.where(take_pos, first_pos, first_rest), first_any)

    def sphere_law(self, x, radius, atoms, open_mass, outside, m, exact=False):
        pos = [(p, w) for p, w in atoms if _sign(x, p) > 0]
        rest = [(p, w) for p, w in atoms if _sign(x, p) <= 0]
        if len(pos) > 1 or len(rest) > 1:
            raise UnsupportedRuleError(f"{self.name}: exact law needs at most one atom per side of a sphere")
        if not pos or not rest:
            return _IsiminRule.sphere_law(self, x, radius, atoms, open_mass, outside, m, exact)
        (a_pos, w_pos), (a_neg, w_neg) = pos[0], rest[0]
        inside = _total([open_mass, w_pos, w_neg], exact)
        only_pos = gap_power(outside, w_pos, m, exact, inside)
        only_neg = gap_power(outside, w_neg, m, exact, inside)
        total = gap_power(outside, w_pos + w_neg, m, exact, inside)
        if exact:
            both = total - only_pos - only_neg
        else:
            both = total.monus(only_pos).monus(only_neg)
        w = self.positive_prob(radius)
        if exact:
            return [(a_pos, only_pos + w * both), (a_neg, only_neg + (1 - w) * both)]
        wf = WideFloat.from_fraction(w)
        return [(a_pos, only_pos + wf * both), (a_neg, only_neg + WideFloat.from_fraction(1 - w) * both)]

    def spec(self):
        return self.name


def lexicographic_rule() -> LexicographicRule:
    return LexicographicRule()


def uniform_random_rule() -> UniformRandomRule:
    return UniformRandomRule()


def parse_rule(text: str) -> TieBreakRule:
    """``lex``, ``uniform``, ``positive`` or ``bernoulli:C=2.0``."""
    kind, _, rest = text.strip().partition(":")
    if kind == "lex":
        return LexicographicRule()
    if kind == "uniform":
        return UniformRandomRule()
    if kind == "positive":
        return PositivePreferenceRule()
    if kind == "bernoulli":
        params = dict(part.split("=", 1) for part in rest.split(",") if part)
        return BiasedBernoulliRule(params.get("C", "2"))
    raise ValueError(f"unknown rule '{text}' (expected lex|uniform|positive|bernoulli:C=...)")


def select_nn(x, samples: Sequence, rule: TieBreakRule, rng=None, space=None) -> tuple[int, object]:
    """``(index, point)`` of the nearest sample, ties resolved by ``rule``."""
    if not len(samples):
        raise ValueError("select_nn needs at least one sample")
    dist = space.distance if space is not None else (lambda a, b: abs(to_fraction(a) - to_fraction(b)))
    ds = [dist(x, p) for p in samples]
    best = min(ds)
    candidates = [(i, p) for i, (p, d) in enumerate(zip(samples, ds)) if d == best]
    if len(candidates) == 1:
        return candidates[0]
    i = rule.choose(x, candidates, rng, radius=best)
    return i, samples[i]
