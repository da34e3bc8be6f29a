import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from lebesgue_nn.fields import constant, linear_field, positive_indicator
from lebesgue_nn.lebesgue import (
    TrivialCase,
    along_sequence_check,
    alpha_sequence,
    characterization_experiment,
    check_measure_continuity,
    check_tie_bias,
    lebesgue_ratio,
    lebesgue_value_estimate,
    m_alpha,
)
from lebesgue_nn.space import (
    DyadicIntervalSpace,
    FiniteAtomicSpace,
    SignedHarmonicSpace,
    UndefinedRatio,
    UnitIntervalSpace,
)
from lebesgue_nn.tiebreak import BiasedBernoulliRule, LexicographicRule, PositivePreferenceRule, UniformRandomRule

from reference_values import FROZEN

F = Fraction


@pytest.fixture(scope="module")
def harmonic():
    return SignedHarmonicSpace(8)


@pytest.fixture(scope="module")
def dyadic():
    return DyadicIntervalSpace(3)


@pytest.fixture
def eta():
    return positive_indicator(anchor=0)


class TestRatio:
    def test_constant_field(self, harmonic):
        assert lebesgue_ratio(harmonic, constant(2), 0, F(1, 3), exact=True) == 0

    def test_harmonic_half(self, harmonic, eta):
        r = lebesgue_ratio(harmonic, eta, 0, F(1, 2), exact=True)
        assert float(r) == pytest.approx(FROZEN["ratio_half"], rel=1e-11)
        assert r <= F(1, 2)

    @pytest.mark.parametrize("n", range(1, 9))
    def test_harmonic_bounded_by_radius(self, harmonic, eta, n):
        assert lebesgue_ratio(harmonic, eta, 0, F(1, n), exact=True) <= F(1, n)

    def test_dyadic_theta2(self, dyadic):
        r = lebesgue_ratio(dyadic, dyadic.canonical_field(), 0, dyadic.theta(2), exact=True)
        assert float(r) == pytest.approx(0.06226, abs=1e-5)
        assert r <= F(1, 16)

    def test_open_ball_is_next_closed_ball(self, harmonic, eta):
        for n in range(1, 8):
            opened = lebesgue_ratio(harmonic, eta, 0, F(1, n), "open", exact=True)
            assert opened == lebesgue_ratio(harmonic, eta, 0, F(1, n + 1), exact=True)

    def test_empty_ball(self, harmonic, eta):
        with pytest.raises(UndefinedRatio):
            lebesgue_ratio(harmonic, eta, 0, F(1, 8), "open", exact=True)
        with pytest.raises(UndefinedRatio):
            lebesgue_ratio(harmonic, eta, 0, F(1, 100), exact=True)

    def test_wide_matches_exact(self, harmonic, eta):
        for n in range(1, 9):
            exact = lebesgue_ratio(harmonic, eta, 0, F(1, n), exact=True)
            assert float(lebesgue_ratio(harmonic, eta, 0, F(1, n))) == pytest.approx(float(exact), rel=1e-12)


@pytest.fixture(scope="module")
def seq(harmonic):
    return alpha_sequence(harmonic, positive_indicator(anchor=0), 0)


class TestAlphaSequence:
    def test_blocks(self, seq):
        got = [(b.m_lo, b.m_hi, b.radius) for b in seq.blocks]
        assert got == [(2, 6, 1), (7, 139, F(1, 2)), (140, 41473, F(1, 3)), (41474, 10**6, F(1, 4))]

    def test_half_boundary(self, seq):
        assert float(seq.M_value(F(1, 2))) == pytest.approx(FROZEN["M_half"], rel=1e-11)
        m = math.ceil(1 / FROZEN["M_half"])
        assert seq.radius(m) == F(1, 2) and seq.radius(m - 1) == 1

    def test_radii_shrink(self, seq):
        radii = seq.radii()
        assert all(a > b for a, b in zip(radii, radii[1:]))

    @given(st.integers(2, 10**6))
    def test_inequalities_everywhere(self, seq, m):
        assert seq.check_m1(m) and seq.check_m2(m)

    def test_out_of_range(self, seq):
        with pytest.raises(KeyError):
            seq.radius(1)

    def test_trivial_constant(self, harmonic):
        with pytest.raises(TrivialCase):
            alpha_sequence(harmonic, constant(1), 0)

    def test_trivial_atom(self):
        space = FiniteAtomicSpace.from_coordinates([(0, "0.5"), (1, "0.5")])
        with pytest.raises(TrivialCase):
            alpha_sequence(space, positive_indicator(), 0)

    def test_alpha_range(self, harmonic, eta):
        with pytest.raises(ValueError):
            alpha_sequence(harmonic, eta, 0, alpha=1)

    def test_dyadic_residual(self, dyadic):
        field = dyadic.canonical_field()
        seq = alpha_sequence(dyadic, field, 0, m_max=10**6)
        radii = [r for _, r, _ in seq.points]
        assert all(a > b for a, b in zip(radii, radii[1:]))
        for m, r, _ in seq.points:
            below = F(r) - F(1, 10**12)
            M = m_alpha(dyadic.ball_integral(0, below, field, 0, exact=True), dyadic.measure_closed_ball(0, below, exact=True), F(1, 2))
            assert M <= mpmath.mpf(1) / m

    def test_alpha_other_than_half(self, harmonic, eta):
        seq = alpha_sequence(harmonic, eta, 0, alpha=F(1, 3), m_max=10**4)
        assert all(seq.check_m1(m) and seq.check_m2(m) for b in seq.blocks for m in (b.m_lo, b.m_hi))


class TestConditions:
    def test_dyadic_continuous(self, dyadic):
        rep = check_measure_continuity(dyadic, 0, probes=[dyadic.theta(n) for n in range(1, 7)])
        assert rep.constant == 0 and rep.holds

    def test_harmonic_blows_up(self, harmonic):
        rep = check_measure_continuity(harmonic, 0, R=1)
        assert not rep.holds
        ratios = dict(rep.details)
        # the sphere at 1/7 dwarfs everything inside it
        assert ratios[F(1, 7)] >= (2**128 - 1) * (1 - 1e-12)
        assert ratios[F(1, 8)] == math.inf

    def test_harmonic_ratio_grows_with_depth(self):
        r6 = dict(check_measure_continuity(SignedHarmonicSpace(6), 0, R=1).details)[F(1, 5)]
        r8 = dict(check_measure_continuity(SignedHarmonicSpace(8), 0, R=1).details)[F(1, 7)]
        assert r8 > r6 > 2**31

    def test_geometric_masses(self):
        K = 10
        atoms = [(0, F(1, 2**K))] + [(F(1, 2**k), F(1, 2 ** (k + 1))) for k in range(K)]
        rep = check_measure_continuity(FiniteAtomicSpace.from_coordinates(atoms), 0)
        assert rep.constant == 1 and rep.holds

    def test_interval_needs_probes(self):
        with pytest.raises(ValueError):
            check_measure_continuity(UnitIntervalSpace(), F(1, 2))

    @pytest.mark.parametrize("rule", [LexicographicRule(), UniformRandomRule()])
    def test_isimin_constant_one(self, harmonic, eta, rule):
        rep = check_tie_bias(harmonic, eta, 0, rule, range(1, 31), exact=True)
        assert rep.constant == 1 and rep.holds

    def test_bernoulli_bounded(self, harmonic, eta):
        rep = check_tie_bias(harmonic, eta, 0, BiasedBernoulliRule(2), range(1, 101), exact=True)
        assert rep.constant <= 2

    def test_positive_grows(self, eta):
        # sphere 1/n only saturates once m is comparable to 2^(2^n)
        ms = [10**k for k in range(1, 81)]
        for N in (6, 8):
            rep = check_tie_bias(SignedHarmonicSpace(N), eta, 0, PositivePreferenceRule(), ms)
            best = {}
            for r, _, v in rep.details:
                best[r] = max(best.get(r, 0), v)
            for n in range(1, N + 1):
                assert best[F(1, n)] == pytest.approx(n, rel=1e-9)
            assert float(rep.constant) == pytest.approx(N, rel=1e-9)

    def test_monte_carlo_fallback(self, eta):
        from lebesgue_nn.tiebreak import prefer_point

        space = FiniteAtomicSpace.from_coordinates([(-1, "0.25"), (1, "0.25"), (-2, "0.25"), (2, "0.25")])
        rep = check_tie_bias(space, eta, 0, prefer_point(F(1)), [2, 4], trials=20_000, seed=1)
        assert rep.stderr > 0
        # unit sphere at m=4: P(+1 drawn) / P(sphere hit) against the measure's 1/2
        want = (1 - F(3, 4) ** 4) / (1 - F(1, 2) ** 4) / F(1, 2)
        assert abs(rep.constant - float(want)) <= 4 * rep.stderr


class TestValue:
    def test_continuous_point(self):
        est = lebesgue_value_estimate(UnitIntervalSpace(), linear_field(), F(1, 2), "ratio", radii=[F(1, 2**k) for k in range(1, 8)])
        assert est.l_hat == pytest.approx(0.5, abs=1e-9) and est.converged

    def test_dyadic_oscillates(self, dyadic):
        radii = [dyadic.theta(n) for n in range(2, 7)]
        est = lebesgue_value_estimate(dyadic, dyadic.canonical_field(), 0, "ratio", radii=radii)
        means = [v for _, v in est.trace]
        assert not est.converged
        assert min(means) < 0.07 and max(means) > 0.99

    def test_harmonic_nn_trend(self, harmonic, eta):
        est = lebesgue_value_estimate(harmonic, eta, 0, "nn", ms=[10, 100, 10**3, 10**4], rule=LexicographicRule())
        means = [t[1] for t in est.trace]
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_nn_needs_isimin(self, harmonic, eta):
        with pytest.raises(ValueError):
            lebesgue_value_estimate(harmonic, eta, 0, "nn", ms=[10], rule=PositivePreferenceRule())


class TestAlongSequence:
    def test_dyadic_even(self, dyadic):
        v = along_sequence_check(dyadic, dyadic.canonical_field(), 0, [dyadic.theta(2 * m) for m in range(1, 4)], exact=True)
        for m, q in enumerate(v.ratios, start=1):
            assert q <= F(1, 2 ** (2 ** (2 * m)))

    def test_dyadic_odd(self, dyadic):
        v = along_sequence_check(dyadic, dyadic.canonical_field(), 0, [dyadic.theta(2 * m + 1) for m in range(1, 3)], exact=True)
        assert all(q >= 0.996 for q in v.ratios)
        assert not v.lebesgue

    def test_harmonic_both_sequences(self, harmonic, eta):
        seq = alpha_sequence(harmonic, eta, 0, m_max=10**80)
        along = along_sequence_check(harmonic, eta, 0, seq.radii(), tol=0.2, exact=True)
        dense = along_sequence_check(harmonic, eta, 0, [F(1, n) for n in range(1, 9)], tol=0.2, exact=True)
        assert along.lebesgue and dense.lebesgue
        for r, q in zip(dense.radii, dense.ratios):
            assert q <= r

    def test_positive_radii(self, harmonic, eta):
        with pytest.raises(ValueError):
            along_sequence_check(harmonic, eta, 0, [0])

    def test_characterization(self, harmonic, eta):
        out = characterization_experiment(harmonic, eta, 0, m_max=10**80, tol=0.2)
        assert out
