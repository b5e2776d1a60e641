from __future__ import annotations

import functools
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

import gapflow
import gapflow.chain
import gapflow.cli
import gapflow.finance
from gapflow.finance import CallCurve, reprice
from gapflow.measure import SpeedMeasure, TargetLaw, validate_measure

settings.register_profile(
    "gapflow",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("gapflow")

MEAN_SLACK = 1e-12

# Every law_at call made anywhere in the suite is checked for the martingale
# mean identity when the chain is a martingale (both extreme atoms absorbing).
FORWARD_LOG = {"checked": 0, "violations": []}
_original_law_at = gapflow.chain.law_at


@functools.wraps(_original_law_at)
def _checked_law_at(chain, t, tol=gapflow.chain.DEFAULT_TOL, **kwargs):
    law = _original_law_at(chain, t, tol, **kwargs)
    if chain.absorbing[0] and chain.absorbing[-1]:
        FORWARD_LOG["checked"] += 1
        gap = abs(math.fsum(law.grid * law.probabilities) - chain.x0)
        if gap > tol + MEAN_SLACK:
            FORWARD_LOG["violations"].append((chain.grid.tolist(), chain.x0, t, gap))
    return law


def pytest_configure(config):
    for module in (gapflow.chain, gapflow.finance, gapflow.cli, gapflow):
        module.law_at = _checked_law_at


# One line per acceptance criterion, echoed in the terminal summary so the
# verdicts are visible without -s.
ACCEPTANCE: list[str] = []


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
    checked, bad = FORWARD_LOG["checked"], len(FORWARD_LOG["violations"])
    if checked:
        terminalreporter.write_line(
            f"{'PASS' if bad == 0 else 'FAIL'} mean invariant over the whole run: "
            f"{checked} absorbing forward solves checked, {bad} violations"
        )


@pytest.fixture(autouse=True)
def _mean_guard():
    before = len(FORWARD_LOG["violations"])
    yield
    new = FORWARD_LOG["violations"][before:]
    assert not new, f"forward solves broke the mean identity: {new[:3]}"


def three_point(b: float = 1.0 / math.log(2.0)) -> SpeedMeasure:
    return SpeedMeasure(((-1.0, math.inf), (0.0, b), (1.0, math.inf)))


def random_fixture(rng: np.random.Generator, n_max: int = 9):
    """Random grid with ``1..n_max`` interior atoms, log-uniform masses, x0 inside."""
    n = int(rng.integers(1, n_max + 1))
    gaps = rng.uniform(0.2, 2.0, size=n + 1)
    grid = np.concatenate(([0.0], np.cumsum(gaps))) - rng.uniform(0.0, 3.0)
    b = np.exp(rng.uniform(math.log(1e-2), math.log(1e2), size=n))
    x0 = float(rng.uniform(grid[0] + 0.05 * gaps[0], grid[-1] - 0.05 * gaps[-1]))
    return grid, b, x0


def random_target(rng: np.random.Generator, n_max: int = 9, p_min: float = 0.01):
    """Random finite law (interior count ``<= n_max``, every p >= p_min) and its mean."""
    while True:
        k = int(rng.integers(3, n_max + 3))
        grid = np.sort(rng.choice(np.arange(-30, 31), size=k, replace=False)) / 4.0
        p = rng.dirichlet(np.ones(k))
        if p.min() >= p_min:
            break
    law = TargetLaw.from_arrays(grid, p)
    return law, law.mean


def measure_from(grid, b) -> SpeedMeasure:
    atoms = [(float(grid[0]), math.inf)]
    atoms += [(float(y), float(m)) for y, m in zip(grid[1:-1], b)]
    atoms.append((float(grid[-1]), math.inf))
    return SpeedMeasure(tuple(atoms))


# Measures with a non-atomic part are represented by atoms on a bounded window
# plus tail flags; the divergence of the tail moment integrals is declared.


def reflected_bm():
    # Lebesgue on [0, inf): finite atom at the reflecting end, right tail unbounded
    return validate_measure([(0.0, 0.5), (0.5, 0.5), (1.0, 0.5)], right_tail_diverges=True), 1.0


def inverse_quartic():
    # x^-4 dx on (0, inf): locally infinite at 0, integrable tail at +inf
    atoms = [(0.0, math.inf)] + [(y, y**-4 * 0.25) for y in (0.25, 0.5, 0.75, 1.0)]
    return validate_measure(atoms, right_tail_diverges=True), 1.0


def student_like():
    # (1 + x^2)^-2 dx on R: both tails reach infinity, both tail moments finite
    atoms = [(y, (1 + y * y) ** -2 * 0.5) for y in np.arange(-2.0, 2.5, 0.5)]
    return validate_measure(atoms, True, True), 0.0


def lebesgue():
    atoms = [(float(y), 0.5) for y in np.arange(-2.0, 2.5, 0.5)]
    return validate_measure(atoms, True, True), 0.0


def random_curve(rng: np.random.Generator, m: int, positive_tail: bool) -> CallCurve:
    """Piecewise-linear convex curve with c(0) = x0 on m + 1 strikes."""
    strikes = np.concatenate(([0.0], np.cumsum(rng.uniform(0.2, 1.5, size=m))))
    masses = rng.dirichlet(np.ones(m + 1))
    if not positive_tail:
        masses[-1] = 0.0
    # slopes s_j = -P(Y > K_j) for the law with these masses at the strikes
    slopes = -(1.0 - np.cumsum(masses[:-1]))
    prices = np.empty(m + 1)
    prices[-1] = masses[-1] * rng.uniform(0.1, 2.0) if positive_tail else 0.0
    for j in range(m - 1, -1, -1):
        prices[j] = prices[j + 1] - slopes[j] * (strikes[j + 1] - strikes[j])
    return CallCurve(strikes, prices)


def synthetic_curve(maturity: float) -> CallCurve:
    grid = np.array([0.0, 1.0, 2.0, 3.0, 5.0, 8.0])
    b = np.array([0.7, 1.3, 0.4, 0.9])
    law = gapflow.chain.forward_G(b * maturity, grid, 2.5, maturity, 1e-14)
    k = np.array([0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.5, 8.0])
    return CallCurve(k, reprice(TargetLaw.from_arrays(grid, law.probabilities), k), maturity)
