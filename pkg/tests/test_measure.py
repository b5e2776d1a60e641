from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapflow.errors import (
    EmptySupport,
    InvalidLaw,
    InvalidPosition,
    NegativeMass,
    ParseError,
)
from gapflow.measure import (
    SpeedMeasure,
    TargetLaw,
    classify_support,
    initial_split,
    validate_measure,
)


def test_validate_merges_duplicates_and_drops_zeros():
    m = validate_measure([(1.0, 2.0), (0.0, 0.0), (1.0, 0.5), (-2.0, math.inf)])
    assert m.atoms == ((-2.0, math.inf), (1.0, 2.5))


def test_infinite_summand_makes_merged_atom_infinite():
    m = validate_measure([(0.0, 1.0), (0.0, math.inf)])
    assert m.atoms == ((0.0, math.inf),)


@pytest.mark.parametrize(
    "atoms, error",
    [
        ([(0.0, -1.0)], NegativeMass),
        ([(0.0, math.nan)], NegativeMass),
        ([(math.inf, 1.0)], InvalidPosition),
        ([(math.nan, 1.0)], InvalidPosition),
    ],
)
def test_validate_rejects(atoms, error):
    with pytest.raises(error):
        validate_measure(atoms)


def test_constructor_checks_order():
    with pytest.raises(InvalidPosition):
        SpeedMeasure(((1.0, 1.0), (0.0, 1.0)))


def test_json_round_trip_uses_inf_token():
    m = validate_measure([(-1, math.inf), (0, 1.5), (1, math.inf)], right_tail_diverges=True)
    d = m.to_dict()
    assert d["atoms"][0] == [-1.0, "inf"]
    assert SpeedMeasure.from_dict(d) == m


@pytest.mark.parametrize(
    "payload",
    [
        {"atoms": [[0, "lots"]]},
        {"atoms": [[0]]},
        {"atoms": "nope"},
        {"points": []},
        {"atoms": [[0, 1]], "left_tail_diverges": "yes"},
    ],
)
def test_measure_parse_errors(payload):
    with pytest.raises(ParseError):
        SpeedMeasure.from_dict(payload)


def test_target_law_validation():
    with pytest.raises(InvalidLaw):
        TargetLaw(((0.0, 0.5), (1.0, 0.4)))
    with pytest.raises(InvalidLaw):
        TargetLaw(((0.0, 1.2), (1.0, -0.2)))
    with pytest.raises(InvalidPosition):
        TargetLaw(((1.0, 0.5), (0.0, 0.5)))
    with pytest.raises(InvalidLaw):
        TargetLaw(())


def test_target_law_from_dict_sorts():
    law = TargetLaw.from_dict({"points": [[3, 0.25], [-1, 0.75]]})
    assert law.points == ((-1.0, 0.75), (3.0, 0.25))
    assert law.mean == 0.0
    assert law.variance == 3.0


def test_classify_support_three_points():
    cls = classify_support(validate_measure([(-1, math.inf), (0, 2.0), (1, math.inf)]), 0.3)
    assert (cls.xs_minus, cls.xs_plus) == (0.0, 1.0)
    assert (cls.xinf_minus, cls.xinf_plus) == (-1.0, 1.0)
    assert not cls.x0_in_supp


def test_classify_support_ignores_tail_flags():
    m = validate_measure([(0.0, 1.0)], left_tail_diverges=True, right_tail_diverges=True)
    cls = classify_support(m, 2.0)
    assert cls.xs_minus == 0.0 and cls.xs_plus == math.inf
    assert cls.xinf_minus == -math.inf


def test_initial_split_examples():
    m = validate_measure([(-1, math.inf), (3, math.inf)])
    law = initial_split(classify_support(m, 0.0))
    assert law.points == ((-1.0, 0.75), (3.0, 0.25))
    at = initial_split(classify_support(validate_measure([(0, 1.0)]), 0.0))
    assert at.points == ((0.0, 1.0),)
    one_side = initial_split(classify_support(validate_measure([(2, 1.0), (5, 1.0)]), 0.0))
    assert one_side.points == ((2.0, 1.0),)


def test_initial_split_empty_support():
    with pytest.raises(EmptySupport):
        initial_split(classify_support(SpeedMeasure(), 0.0))


@given(
    lo=st.floats(-50, -0.01),
    hi=st.floats(0.01, 50),
    frac=st.floats(0.0, 1.0),
)
def test_initial_split_preserves_mean(lo, hi, frac):
    x0 = lo + frac * (hi - lo)
    m = validate_measure([(lo, 1.0), (hi, 1.0)])
    law = initial_split(classify_support(m, x0))
    assert math.isclose(law.mean, x0, rel_tol=1e-12, abs_tol=1e-12 * (hi - lo))
    assert all(y in (lo, hi) for y, _ in law.points)
