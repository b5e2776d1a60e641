from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gapflow.approx import (
    SampledLaw,
    approx_invert,
    discretize,
    discretize_detail,
    wasserstein1,
)
from gapflow.errors import InvalidLaw, UnknownMean, ValidationError
from gapflow.measure import TargetLaw

NORMAL = SampledLaw.from_ppf(stats.norm.ppf, 0.0, 1.0)
EXPON = SampledLaw.from_ppf(stats.expon.ppf, 1.0, 1.0)


def exp_table_on_half_grid() -> SampledLaw:
    # knots exactly where the floor cells start, so the table's CDF is exact there
    x = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 6.0])
    return SampledLaw.from_table(1.0 - np.exp(-x), x, mean=1.0)


def test_exponential_n2_closed_form():
    d = discretize_detail(exp_table_on_half_grid(), 2)
    expected = [math.exp(-k / 2) - math.exp(-(k + 1) / 2) for k in range(4)] + [math.exp(-2)]
    np.testing.assert_allclose(d.law.probabilities, expected, atol=1e-15)
    shift = 1.0 - math.fsum(k / 2 * p for k, p in enumerate(expected))
    assert d.shift == pytest.approx(shift, abs=1e-15)
    np.testing.assert_allclose(d.law.positions, np.arange(5) / 2 + shift, atol=1e-15)


def test_exponential_n2_against_quadrature():
    # E(Y - Y'') with Y ~ Exp(1), Y'' = floor(2 min(Y, 2)) / 2, by direct integration
    def integrand(y):
        return (y - math.floor(2 * min(y, 2.0)) / 2) * math.exp(-y)

    pieces = [(0, 0.5), (0.5, 1), (1, 1.5), (1.5, 2), (2, 60)]
    shift = sum(integrate.quad(integrand, a, b, epsabs=1e-14)[0] for a, b in pieces)
    assert discretize_detail(exp_table_on_half_grid(), 2).shift == pytest.approx(shift, abs=1e-10)


def test_grid_law_is_fixed():
    law = TargetLaw(((-1.0, 0.2), (-0.5, 0.3), (0.0, 0.1), (1.5, 0.4)))
    out = discretize(law, 2)
    np.testing.assert_allclose(out.positions, law.positions, atol=1e-15)
    np.testing.assert_allclose(out.probabilities, law.probabilities, atol=1e-15)
    assert discretize_detail(law, 2).shift == pytest.approx(0.0, abs=1e-15)


def test_point_mass_recentred():
    out = discretize(TargetLaw(((0.5, 1.0),)), 1)
    assert out.points == ((0.5, 1.0),)


def test_unknown_mean():
    with pytest.raises(UnknownMean):
        discretize(SampledLaw.from_table([0.5], [0.0]), 3)


def test_bad_n():
    with pytest.raises(ValidationError):
        discretize(NORMAL, 0)


def test_table_validation():
    with pytest.raises(InvalidLaw):
        SampledLaw.from_table([0.1, 0.2], [1.0, 0.0], 0.0)
    with pytest.raises(InvalidLaw):
        SampledLaw.from_table([0.2, 0.1], [0.0, 1.0], 0.0)
    with pytest.raises(InvalidLaw):
        SampledLaw.from_table([0.5], [0.0], math.inf)


def test_step_table_round_trip():
    law = TargetLaw(((-1.0, 0.75), (3.0, 0.25)))
    table = SampledLaw.from_law(law)
    assert table.table_mean() == pytest.approx(0.0)
    np.testing.assert_allclose(table.cdf_strict(np.array([-1.0, 0.0, 3.0, 3.1])), [0, 0.75, 0.75, 1])


@pytest.mark.parametrize("seed", range(4))
def test_wasserstein_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    a = np.sort(rng.normal(size=6))
    b = np.sort(rng.normal(size=4))
    pa, pb = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(4))
    la, lb = TargetLaw.from_arrays(a, pa), TargetLaw.from_arrays(b, pb)
    assert wasserstein1(la, lb) == pytest.approx(stats.wasserstein_distance(a, b, pa, pb), abs=1e-12)


def test_wasserstein_table_against_quadrature():
    law = discretize(NORMAL, 5)
    cdf_n = np.cumsum(law.probabilities)
    ys = law.positions

    def gap(x):
        k = np.searchsorted(ys, x, side="right")
        return abs((cdf_n[k - 1] if k else 0.0) - float(NORMAL.cdf_strict(x)))

    edges = np.unique(np.concatenate(([NORMAL.q[0]], ys, [NORMAL.q[-1]])))
    quad = sum(integrate.quad(gap, a, b, limit=200)[0] for a, b in zip(edges[:-1], edges[1:]))
    assert wasserstein1(law, NORMAL) == pytest.approx(quad, rel=1e-6)


@pytest.mark.parametrize(
    "mu, abs_mean",
    [(NORMAL, math.sqrt(2 / math.pi)), (EXPON, 1.0)],
    ids=["normal", "exponential"],
)
def test_convergence_along_n(mu, abs_mean):
    w1 = [wasserstein1(discretize(mu, n), mu) for n in (1, 2, 5, 10, 20, 50)]
    assert all(b < a for a, b in zip(w1, w1[1:]))
    assert w1[-1] < 0.01
    gaps = [
        abs(math.fsum(abs(y) * p for y, p in discretize(mu, n).points) - abs_mean)
        for n in (1, 5, 50)
    ]
    assert gaps[2] <= gaps[0] and gaps[2] < 0.01


def test_support_edges_approach_essential_range():
    law = SampledLaw.from_table([0.0, 1.0], [-0.3, 2.7], mean=1.2)
    lo = [discretize(law, n).positions[0] for n in (2, 10, 50)]
    hi = [discretize(law, n).positions[-1] for n in (2, 10, 50)]
    assert abs(lo[-1] + 0.3) < 0.05 and abs(hi[-1] - 2.7) < 0.05
    assert abs(lo[-1] + 0.3) <= abs(lo[0] + 0.3)


def test_variance_converges_for_normal():
    assert discretize(NORMAL, 50).variance == pytest.approx(1.0, rel=0.02)


@given(
    n=st.integers(1, 40),
    loc=st.floats(-3, 3),
    scale=st.floats(0.1, 4),
)
def test_mean_preserved_exactly(n, loc, scale):
    mu = SampledLaw.from_ppf(lambda u: stats.norm.ppf(u, loc, scale), loc, scale**2, knots=400)
    out = discretize(mu, n)
    assert abs(out.mean - loc) <= 1e-12 * max(1.0, abs(loc) + scale)
    spacing = np.diff(out.positions)
    np.testing.assert_allclose(spacing * n, np.round(spacing * n), atol=1e-6)


def test_two_point_bypasses_solver():
    # at n = 4 both atoms sit on the grid inside [-4, 4], so discretizing is the identity
    res = approx_invert(TargetLaw(((-1.0, 0.75), (3.0, 0.25))), 0.0, 4, mc_paths=0)
    assert res.calibration.measure.atoms == ((-1.0, math.inf), (3.0, math.inf))
    assert res.calibration.iterations == 0


def test_gaussian_masses_track_lebesgue():
    n = 10
    res = approx_invert(NORMAL, 0.0, n, mc_paths=0)
    assert res.calibration.converged
    assert res.diagnostics["w1_fit"] <= 1e-8
    bulk = [b for y, b in res.calibration.measure.atoms[1:-1] if abs(y) < 1.5]
    np.testing.assert_allclose(np.array(bulk) / (1 / n), 1.0, rtol=0.2)


@pytest.mark.slow
def test_mc_diagnostic_reports_variance():
    res = approx_invert(NORMAL, 0.0, 2, mc_paths=4000, mc_step=1e-4)
    d = res.diagnostics
    assert abs(d["EA1"] - d["variance_target"]) <= 4 * d["EA1_se"] + 0.02
