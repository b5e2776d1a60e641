from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import (
    inverse_quartic,
    lebesgue,
    measure_from,
    random_fixture,
    reflected_bm,
    student_like,
)
from hypothesis import given
from hypothesis import strategies as st

from gapflow.chain import forward_G
from gapflow.errors import MissingDeclaration, ValidationError
from gapflow.martingale import classify_local, classify_true
from gapflow.measure import SpeedMeasure, validate_measure


def test_reflected_bm_is_not_local():
    m, x0 = reflected_bm()
    verdict = classify_true(m, x0)
    assert not verdict.local_martingale and not verdict.true_martingale


def test_inverse_quartic_is_strict_local():
    m, x0 = inverse_quartic()
    verdict = classify_true(m, x0, (None, "finite"))
    assert verdict.local_martingale and not verdict.true_martingale
    assert verdict.label == "strict_local_martingale"


def test_student_like_is_strict_local():
    m, x0 = student_like()
    verdict = classify_true(m, x0, ("finite", "finite"))
    assert verdict.local_martingale and not verdict.true_martingale


def test_lebesgue_is_martingale():
    m, x0 = lebesgue()
    verdict = classify_true(m, x0, ("infinite", "infinite"))
    assert verdict.true_martingale


def test_point_at_start_is_martingale():
    verdict = classify_true(SpeedMeasure(((2.0, math.inf),)), 2.0)
    assert verdict.true_martingale and verdict.local_martingale


def test_finite_single_atom_at_start_is_constant():
    ok, reasons = classify_local(SpeedMeasure(((2.0, 0.3),)), 2.0)
    assert ok and reasons


def test_infinite_atoms_on_both_sides_are_local():
    m = validate_measure([(-1, math.inf), (0.5, 1.0), (2, math.inf)])
    assert classify_local(m, 0.0)[0]


def test_empty_measure_is_not_local():
    assert classify_local(SpeedMeasure(), 0.0) == (False, ("measure is empty: no process is defined",))


def test_missing_declaration():
    m, x0 = lebesgue()
    with pytest.raises(MissingDeclaration):
        classify_true(m, x0)
    with pytest.raises(MissingDeclaration):
        classify_true(m, x0, ("infinite", None))


def test_declaration_not_needed_when_verdict_is_settled():
    # a finite left integral settles the verdict whatever the right tail does
    flagged = validate_measure([(-1.0, 2.0), (0.0, 1.0)], True, True)
    verdict = classify_true(flagged, 0.0, ("finite", None))
    assert verdict.local_martingale and not verdict.true_martingale
    # an infinite atom on the left makes only the right declaration matter
    m = validate_measure([(-1.0, math.inf), (0.0, 1.0)], right_tail_diverges=True)
    assert classify_true(m, 0.0, (None, "infinite")).true_martingale


def test_bad_declaration():
    m, x0 = lebesgue()
    with pytest.raises(ValidationError):
        classify_true(m, x0, ("huge", "finite"))


def test_reasons_are_reported():
    m, x0 = student_like()
    verdict = classify_true(m, x0, ("finite", "finite"))
    assert any("finite" in r for r in verdict.reasons)
    assert verdict.to_dict()["verdict"] == "strict_local_martingale"


atom_lists = st.lists(
    st.tuples(
        st.floats(-5, 5, allow_nan=False),
        st.one_of(st.floats(0.01, 10), st.just(math.inf)),
    ),
    max_size=6,
)
tail_decls = st.tuples(st.sampled_from(["finite", "infinite"]), st.sampled_from(["finite", "infinite"]))


@given(atoms=atom_lists, left=st.booleans(), right=st.booleans(), x0=st.floats(-5, 5), decl=tail_decls)
def test_true_implies_local(atoms, left, right, x0, decl):
    m = validate_measure(atoms, left, right)
    verdict = classify_true(m, x0, decl)
    assert classify_local(m, x0)[0] == verdict.local_martingale
    assert not verdict.true_martingale or verdict.local_martingale


@given(atoms=atom_lists, left=st.booleans(), right=st.booleans(), x0=st.floats(-5, 5), decl=tail_decls)
def test_infinite_atom_at_start_forces_martingale(atoms, left, right, x0, decl):
    m = validate_measure([*atoms, (x0, math.inf)], left, right)
    assert classify_true(m, x0, decl).true_martingale


@given(seed=st.integers(0, 2**32 - 1))
def test_absorbing_ends_are_martingales_with_mean_x0(seed):
    grid, b, x0 = random_fixture(np.random.default_rng(seed))
    assert classify_true(measure_from(grid, b), x0).true_martingale
    assert forward_G(b, grid, x0, 1.0, 1e-12).mean == pytest.approx(x0, abs=2e-12)
