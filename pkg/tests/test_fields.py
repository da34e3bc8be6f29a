from fractions import Fraction

import pytest

from lebesgue_nn.fields import (
    PiecewiseConstantField,
    constant,
    dyadic_field,
    field_from_spec,
    positive_indicator,
    table_field,
)
from lebesgue_nn.space import DyadicIntervalSpace

F = Fraction


def test_anchor_modes():
    eta = positive_indicator()
    assert eta.anchor_at(F(1, 3)) == 1
    assert eta.with_anchor(F(1, 2)).anchor_at(F(1, 3)) == F(1, 2)
    assert eta.anchor is None


def test_override_single_point():
    eta = positive_indicator().with_override(0, 5)
    assert eta(0) == 5 and eta(F(1, 2)) == 1 and eta.bound == 5


def test_bound_check():
    with pytest.raises(ValueError):
        table_field({0: 1}).check_bound(2)


def test_piecewise_integral():
    f = PiecewiseConstantField([(0, F(1, 2), 1), (F(1, 2), 1, 3)])
    assert f.abs_dev_integral(0, 1, 1) == 1
    assert f.abs_dev_integral(F(1, 4), F(3, 4), 0) == F(1, 4) * 1 + F(1, 4) * 3
    assert f(F(1, 2)) == 1 and f(0) == 0


def test_overlapping_pieces():
    with pytest.raises(ValueError):
        PiecewiseConstantField([(0, F(1, 2), 1), (F(1, 4), 1, 3)])


def test_dyadic_pieces():
    space = DyadicIntervalSpace(2)
    f = dyadic_field(space.thresholds, 2)
    assert f(F(1, 8)) == 1 and f(F(1, 100)) == 0 and f(F(1, 1000)) == 1 and f(space.resolution) == 0


@pytest.mark.parametrize("spec, point, value", [
    ("positive", F(1, 3), 1),
    ("const:c=1/2", 7, F(1, 2)),
    ("linear:slope=2,intercept=1/4", F(1, 2), F(5, 4)),
    ("table:-1=0.2;1=1", -1, F(1, 5)),
    ("table:-1=0.2;1=1", 3, 0),
])
def test_specs(spec, point, value):
    assert field_from_spec(spec)(point) == value


def test_dyadic_spec_needs_space():
    with pytest.raises(ValueError):
        field_from_spec("dyadic")
    assert field_from_spec("dyadic", DyadicIntervalSpace(3), anchor=0).anchor == 0


def test_unknown_spec():
    with pytest.raises(ValueError):
        field_from_spec("sine")


def test_constant_bound():
    assert constant(-3).bound == 3
