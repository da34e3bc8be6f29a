"""Brute-force enumeration over ordered sample configurations.

Independent ground truth for the sphere-decomposition engine: every one of
the ``k**m`` ordered m-samples is visited, weighted by the product of its
atom masses, and the rule's exact choice law is applied to its tie set.
Nothing here uses sphere tables or closed forms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from ._num import to_fraction
from .space import AtomicSpace
from .tiebreak import TieBreakRule


class BudgetExceeded(Exception):
    def __init__(self, needed: int, budget: int):
        super().__init__(f"enumeration needs {needed} configurations, budget is {budget}")
        self.needed = needed
        self.budget = budget


@dataclass(frozen=True)
class EnumerationBudget:
    max_configurations: int = 10**7
    max_atoms: int | None = None
    max_m: int | None = None

    def check(self, atoms: int, m: int) -> None:
        if self.max_atoms is not None and atoms > self.max_atoms:
            raise BudgetExceeded(atoms**m, self.max_configurations)
        if self.max_m is not None and m > self.max_m:
            raise BudgetExceeded(atoms**m, self.max_configurations)
        if atoms**m > self.max_configurations:
            raise BudgetExceeded(atoms**m, self.max_configurations)


DEFAULT_BUDGET = EnumerationBudget()


def brute_force_nn_distribution(space: AtomicSpace, x, rule: TieBreakRule, m: int,
                                budget: EnumerationBudget = DEFAULT_BUDGET) -> dict:
    """``{point: P(NN = point)}`` as exact rationals."""
    if m < 1:
        raise ValueError("m must be >= 1")
    atoms = space.atoms(exact=True)
    budget.check(len(atoms), m)
    dist = [space.distance(x, p) for p, _ in atoms]
    law: dict = {p: Fraction(0) for p, _ in atoms}
    for config in itertools.product(range(len(atoms)), repeat=m):
        weight = Fraction(1)
        for k in config:
            weight *= atoms[k][1]
        best = min(dist[k] for k in config)
        candidates = [(i, atoms[k][0]) for i, k in enumerate(config) if dist[k] == best]
        for i, prob in rule.choice_probabilities(x, candidates, radius=best).items():
            law[atoms[config[i]][0]] += weight * prob
    return law


def sphere_conditional(law: dict, space: AtomicSpace, x, r) -> dict:
    """``P(NN = a | NN in S_r)`` from an NN law."""
    r = to_fraction(r)
    on = {p: q for p, q in law.items() if space.distance(x, p) == r}
    total = sum(on.values(), Fraction(0))
    if total == 0:
        raise ZeroDivisionError(f"NN never lands on the sphere of radius {r}")
    return {p: q / total for p, q in on.items()}


def brute_force_nn_error(space, field, x, rule, m: int, anchor=None, budget: EnumerationBudget = DEFAULT_BUDGET) -> Fraction:
    c = to_fraction(field.anchor_at(x) if anchor is None else anchor)
    law = brute_force_nn_distribution(space, x, rule, m, budget)
    return sum((q * abs(to_fraction(field(p)) - c) for p, q in law.items()), Fraction(0))


def brute_force_risk(model, rule, m: int, budget: EnumerationBudget = DEFAULT_BUDGET) -> Fraction:
    """Exact ``P(Y_NN != Y)`` with labels integrated analytically."""
    space, eta = model.space, model.eta
    risk = Fraction(0)
    for x, px in space.atoms(exact=True):
        ex = to_fraction(eta(x))
        law = brute_force_nn_distribution(space, x, rule, m, budget)
        for a, q in law.items():
            ea = to_fraction(eta(a))
            risk += px * q * (ex * (1 - ea) + (1 - ex) * ea)
    return risk
