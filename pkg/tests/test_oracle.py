from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lebesgue_nn.classify import LabeledModel, nn_classification_risk
from lebesgue_nn.fields import constant, table_field
from lebesgue_nn.nn import exact_nn_error, mc_nn_error, nn_atom_distribution
from lebesgue_nn.oracle import (
    BudgetExceeded,
    EnumerationBudget,
    brute_force_nn_distribution,
    brute_force_nn_error,
    brute_force_risk,
    sphere_conditional,
)
from lebesgue_nn.space import FiniteAtomicSpace
from lebesgue_nn.tiebreak import (
    BiasedBernoulliRule,
    LexicographicRule,
    PositivePreferenceRule,
    UniformRandomRule,
    prefer_point,
)
from lebesgue_nn.verify import oracle_suite, random_field, random_finite_space, three_atom_space

F = Fraction


@pytest.fixture
def space():
    return three_atom_space()


def two_atoms(e0, e1):
    space = FiniteAtomicSpace.from_coordinates([(0, F(1, 2)), (1, F(1, 2))])
    return LabeledModel(space, table_field({0: e0, 1: e1}))


class TestDistribution:
    def test_uniform_m2(self, space):
        law = brute_force_nn_distribution(space, 0, UniformRandomRule(), 2)
        assert law == {-1: F(3, 10), 1: F(9, 20), 2: F(1, 4)}
        assert sphere_conditional(law, space, 0, 1) == {-1: F(2, 5), 1: F(3, 5)}

    def test_lexicographic_same_conditional(self, space):
        law = brute_force_nn_distribution(space, 0, LexicographicRule(), 2)
        assert sphere_conditional(law, space, 0, 1) == {-1: F(2, 5), 1: F(3, 5)}

    def test_prefer_b_breaks_sphere_law(self, space):
        law = brute_force_nn_distribution(space, 0, prefer_point(1), 2)
        assert sphere_conditional(law, space, 0, 1) == {-1: F(8, 25), 1: F(17, 25)}

    def test_sums_to_one(self, space):
        for m in range(1, 6):
            assert sum(brute_force_nn_distribution(space, 0, UniformRandomRule(), m).values()) == 1

    def test_sphere_never_hit(self, space):
        law = brute_force_nn_distribution(space, 0, LexicographicRule(), 1)
        with pytest.raises(ZeroDivisionError):
            sphere_conditional(law, space, 0, 3)


class TestError:
    def test_single_sample(self, space):
        eta = table_field({-1: F(1, 2), 1: 2, 2: -1})
        want = sum(w * abs(eta(p) - 0) for p, w in space.atoms(exact=True))
        assert brute_force_nn_error(space, eta, 0, UniformRandomRule(), 1, anchor=0) == want

    def test_constant(self, space):
        assert brute_force_nn_error(space, constant(5), 0, UniformRandomRule(), 3) == 0

    def test_three_atoms_m2(self, space):
        eta = table_field({-1: 0, 1: 1, 2: 1})
        assert brute_force_nn_error(space, eta, 0, UniformRandomRule(), 2, anchor=0) == F(7, 10)


class TestRisk:
    def test_one_sample(self):
        # 1/4 (0.42 + 0.62 + 0.62 + 0.32)
        assert brute_force_risk(two_atoms(F(3, 10), F(4, 5)), LexicographicRule(), 1) == F(99, 200)

    def test_realizable_m3(self):
        assert brute_force_risk(two_atoms(0, 1), LexicographicRule(), 3) == F(1, 8)

    @pytest.mark.parametrize("c", [0, F(1, 3), F(1, 2), 1])
    def test_constant_regression(self, c):
        model = two_atoms(c, c)
        for m in (1, 2, 4):
            assert brute_force_risk(model, UniformRandomRule(), m) == 2 * c * (1 - c)


class TestBudget:
    def test_refusal_reports_need(self, space):
        with pytest.raises(BudgetExceeded) as info:
            brute_force_nn_distribution(space, 0, LexicographicRule(), 20)
        assert info.value.needed == 3**20

    def test_custom_limits(self, space):
        with pytest.raises(BudgetExceeded):
            brute_force_nn_distribution(space, 0, LexicographicRule(), 3, EnumerationBudget(max_m=2))
        with pytest.raises(BudgetExceeded):
            brute_force_nn_distribution(space, 0, LexicographicRule(), 2, EnumerationBudget(max_atoms=2))
        with pytest.raises(BudgetExceeded):
            brute_force_nn_distribution(space, 0, LexicographicRule(), 3, EnumerationBudget(max_configurations=26))

    def test_bad_m(self, space):
        with pytest.raises(ValueError):
            brute_force_nn_distribution(space, 0, LexicographicRule(), 0)


RULES = [LexicographicRule(), UniformRandomRule(), PositivePreferenceRule(), BiasedBernoulliRule(2), BiasedBernoulliRule(3)]


@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(2, 5), st.sampled_from(range(len(RULES))), st.booleans())
@settings(max_examples=60, deadline=None)
def test_engine_equals_enumeration(seed, m, atoms, k, at_atom):
    space = random_finite_space(seed, atoms)
    rule = RULES[k]
    x = space.points[0] if at_atom else 0
    engine = {p: q for p, _, q in nn_atom_distribution(space, x, rule, m, exact=True)}
    oracle = {p: q for p, q in brute_force_nn_distribution(space, x, rule, m).items() if q}
    assert {p: q for p, q in engine.items() if q} == oracle


@given(st.integers(0, 10**6), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_classification_risk_equals_enumeration(seed, m):
    space = random_finite_space(seed, 4)
    eta = table_field({p: F(int(v), 4) for p, v in zip(space.points, np.random.default_rng(seed).integers(0, 5, 4))})
    model = LabeledModel(space, eta)
    rep = nn_classification_risk(model, UniformRandomRule(), m, exact=True)
    assert rep.risk == pytest.approx(float(brute_force_risk(model, UniformRandomRule(), m)), abs=1e-15)


def test_monte_carlo_agrees_with_enumeration():
    for k in range(10):
        space = random_finite_space(700 + k, 4)
        field = random_field(space, 700 + k)
        rule, m = RULES[k % len(RULES)], 1 + k % 4
        want = float(brute_force_nn_error(space, field, 0, rule, m, anchor=0))
        err, se = mc_nn_error(space, field, 0, rule, m, 10**6, seed=k, workers=4, anchor=0)
        assert abs(err - want) <= 5 * se + 1e-12


def test_oracle_suite_passes():
    results = oracle_suite()
    assert results and all(r.passed for r in results), [r.line() for r in results]
