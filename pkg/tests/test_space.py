import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from lebesgue_nn.fields import constant, positive_indicator
from lebesgue_nn.space import (
    DyadicIntervalSpace,
    FiniteAtomicSpace,
    SignedHarmonicSpace,
    UnitIntervalSpace,
    UnsupportedOperation,
    load_space_config,
    normalize_to_ball,
    space_from_spec,
    sphere_table,
    support_check,
)

from reference_values import FROZEN

F = Fraction


@pytest.fixture(scope="module")
def harmonic():
    return SignedHarmonicSpace(8)


@pytest.fixture
def three_atoms():
    return FiniteAtomicSpace.from_coordinates([(-1, "0.2"), (1, "0.3"), (2, "0.5")])


class TestSignedHarmonic:
    def test_normalizer(self, harmonic):
        assert float(harmonic.normalizer) == pytest.approx(FROZEN["R"], rel=1e-11)

    def test_weights_sum_to_one_exactly(self, harmonic):
        assert sum(w for _, w in harmonic.atoms(exact=True)) == 1

    def test_unit_sphere_has_no_negative_mass(self, harmonic):
        assert harmonic.mass(F(-1), exact=True) == 0
        assert harmonic.mass(F(0), exact=True) == 0

    def test_sphere_one_mass(self, harmonic):
        assert float(harmonic.measure_sphere(0, 1)) == pytest.approx(FROZEN["sphere_1"], rel=1e-11)

    def test_half_ball(self, harmonic):
        assert float(harmonic.measure_closed_ball(0, F(1, 2))) == pytest.approx(FROZEN["closed_half"], rel=1e-11)
        assert float(harmonic.measure_open_ball(0, F(1, 2))) == pytest.approx(FROZEN["open_half"], rel=1e-11)

    def test_wide_and_exact_agree(self, harmonic):
        for (p, w), (q, v) in zip(harmonic.atoms(), harmonic.atoms(exact=True)):
            assert p == q
            assert float(w) == pytest.approx(float(v), rel=1e-14)

    def test_deep_spheres_below_double_range(self):
        space = SignedHarmonicSpace(12)
        mass = space.measure_sphere(0, F(1, 12))
        assert float(mass) == 0.0 and not mass.is_zero()
        assert mass.log2() == pytest.approx(-(2**12) - math.log2(space.normalizer), abs=1e-6)


class TestSphereTable:
    def test_three_atom_rows(self, three_atoms):
        rows = sphere_table(three_atoms, 0, exact=True)
        got = [(r.radius, r.sphere, r.open, r.closed) for r in rows]
        assert got == [(1, F(1, 2), 0, F(1, 2)), (2, F(1, 2), F(1, 2), 1)]

    def test_closed_is_open_plus_sphere(self, harmonic):
        for row in harmonic.sphere_table(0, exact=True):
            assert row.closed == row.open + row.sphere
            assert row.outside == 1 - row.closed

    def test_wide_rows_close_to_exact(self, harmonic):
        for a, b in zip(harmonic.sphere_table(0), harmonic.sphere_table(0, exact=True)):
            assert float(a.closed) == pytest.approx(float(b.closed), rel=1e-13)

    def test_needs_atoms(self):
        with pytest.raises(UnsupportedOperation):
            sphere_table(UnitIntervalSpace(), F(1, 2))

    def test_closed_ball_monotone(self, harmonic):
        masses = [harmonic.measure_closed_ball(0, F(1, n), exact=True) for n in range(1, 9)]
        assert all(a >= b for a, b in zip(masses, masses[1:]))


@given(st.lists(st.tuples(st.integers(-8, 8), st.integers(1, 20)), min_size=1, max_size=7, unique_by=lambda t: t[0]))
@settings(max_examples=60, deadline=None)
def test_ball_identities_random_spaces(atoms):
    total = sum(w for _, w in atoms)
    space = FiniteAtomicSpace.from_coordinates([(c, F(w, total)) for c, w in atoms])
    for x in (0, atoms[0][0]):
        for r in [F(k, 2) for k in range(0, 34)]:
            closed = space.measure_closed_ball(x, r, exact=True)
            assert closed == space.measure_open_ball(x, r, exact=True) + space.measure_sphere(x, r, exact=True)
            assert 0 <= closed <= 1
        assert space.measure_closed_ball(x, 100, exact=True) == 1


def test_sampling_frequencies(harmonic):
    n = 10**6
    rng = np.random.default_rng(2024)
    idx = harmonic.sample_indices(rng, n)
    counts = np.bincount(idx, minlength=len(harmonic.support_points))
    for k, (p, w) in enumerate(harmonic.atoms()):
        w = float(w)
        if w < 1e-4:
            continue
        se = math.sqrt(w * (1 - w) / n)
        assert abs(counts[k] / n - w) <= 5 * se, p


def test_sample_points_are_atoms(three_atoms):
    pts = three_atoms.sample(np.random.default_rng(0), 100)
    assert set(pts) <= {-1, 1, 2}


class TestDyadic:
    def test_thresholds(self):
        d = DyadicIntervalSpace(3)
        assert d.theta(1) == F(1, 4) and d.theta(2) == F(1, 16) and d.theta(3) == F(1, 256)
        assert d.resolution == d.theta(6)

    def test_depth_limits(self):
        with pytest.raises(ValueError):
            DyadicIntervalSpace(1)
        with pytest.raises(ValueError):
            DyadicIntervalSpace(5)

    @pytest.mark.parametrize("depth", [2, 3, 4])
    def test_closed_form_against_quadrature(self, depth):
        space = DyadicIntervalSpace(depth)
        field = space.canonical_field()
        for n in range(1, 2 * depth + 1):
            r = space.theta(n)
            exact = space.ball_integral(0, r, field, 0, exact=True)
            # integrate piece by piece so the breakpoints are honoured
            cuts = sorted({0, r} | {b for b in field.breakpoints() if b < r})
            numeric = math.fsum(quad(lambda t: float(field(t)), float(a), float(b))[0] for a, b in zip(cuts, cuts[1:]))
            assert abs(float(exact) - numeric) <= 1e-12 * max(float(r), 1e-300)

    def test_interval_ball_mass(self):
        space = UnitIntervalSpace()
        assert space.measure_closed_ball(F(1, 2), F(1, 4), exact=True) == F(1, 2)
        assert space.measure_closed_ball(0, F(1, 4), exact=True) == F(1, 4)
        assert space.measure_sphere(F(1, 2), F(1, 4), exact=True) == 0

    def test_quadrature_path_for_general_fields(self):
        from lebesgue_nn.fields import linear_field

        space = UnitIntervalSpace()
        got = float(space.ball_integral(F(1, 2), F(1, 2), linear_field(), F(1, 2)))
        assert got == pytest.approx(0.25, rel=1e-10)
        with pytest.raises(UnsupportedOperation):
            space.ball_integral(F(1, 2), F(1, 2), linear_field(), F(1, 2), exact=True)


class TestNormalize:
    def test_whole_space_unchanged(self, harmonic):
        norm = normalize_to_ball(harmonic, 0, 1)
        for p, w in harmonic.atoms():
            assert float(norm.mass(p)) == pytest.approx(float(w), rel=1e-13)

    def test_interval_rescaled(self):
        norm = normalize_to_ball(DyadicIntervalSpace(3), 0, F(1, 2))
        assert norm.measure_closed_ball(0, F(1, 4), exact=True) == F(1, 2)

    def test_harmonic_half_ball(self, harmonic):
        norm = normalize_to_ball(harmonic, 0, F(1, 2))
        assert float(norm.mass(F(1, 2))) == pytest.approx(FROZEN["weight_plus_half_in_ball_half"], rel=1e-11)
        assert float(norm.mass(F(1))) == 0.0

    def test_normalized_sampling_stays_in_ball(self, harmonic):
        norm = normalize_to_ball(harmonic, 0, F(1, 2))
        pts = norm.sample(np.random.default_rng(1), 2000)
        assert all(abs(p) <= F(1, 2) for p in pts)

    def test_empty_ball_rejected(self, three_atoms):
        with pytest.raises(ValueError):
            normalize_to_ball(three_atoms, 0, F(1, 2))


class TestSupport:
    def test_origin_in_support(self, harmonic):
        assert support_check(harmonic, 0, [F(1, n) for n in range(1, 9)])

    def test_atom_at_query(self):
        space = FiniteAtomicSpace.from_coordinates([(3, 1)])
        assert support_check(space, 3, [F(1, 10**6), 1, 5])

    def test_far_atoms(self, three_atoms):
        assert not support_check(three_atoms, 0, [F(1, 2), 1])


class TestConfig:
    def test_specs(self):
        assert isinstance(space_from_spec("signed_harmonic:N=6"), SignedHarmonicSpace)
        assert space_from_spec("dyadic:D=2").depth == 2
        s = space_from_spec("finite_atomic:atoms=-1:0.2;1:3/10;2:2^-1")
        assert s.mass(2, exact=True) == F(1, 2)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            space_from_spec("hilbert:dim=3")
        with pytest.raises(ValueError):
            space_from_spec("finite_atomic:atoms=0:0.5;1:0.6")

    def test_ini_file(self, tmp_path):
        path = tmp_path / "space.ini"
        path.write_text("[space]\nkind = finite_atomic\natoms = -1:0.2; 1:0.3; 2:0.5\n")
        space = load_space_config(path)
        assert space.measure_sphere(0, 1, exact=True) == F(1, 2)

    def test_ini_missing_section(self, tmp_path):
        path = tmp_path / "space.ini"
        path.write_text("[other]\nkind = dyadic\n")
        with pytest.raises(ValueError):
            load_space_config(path)

    def test_bad_distance_table(self):
        with pytest.raises(ValueError):
            FiniteAtomicSpace(["a", "b"], [F(1, 2), F(1, 2)], table={("a", "b"): -1})


def test_ball_integral_constant_field(harmonic):
    assert harmonic.ball_integral(0, F(1, 2), constant(1), 1, exact=True) == 0


def test_conditional_sphere_mean(harmonic):
    # E[eta | S_{1/n}] = 1/n for the positive indicator
    for n in range(2, 9):
        got = harmonic.sphere_conditional_mean(0, F(1, n), positive_indicator(), 0, exact=True)
        assert got == F(1, n)
