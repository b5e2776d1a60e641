"""Birth-death realisation of a gap diffusion on an atomic speed measure.

Between atoms the Brownian motion accrues no clock, so the time-changed
process jumps between neighbouring atoms.  At a finite atom of mass ``b``
with gaps ``d_down`` and ``d_up`` to its neighbours the local time collected
before the Brownian motion reaches a neighbour is exponential with mean
``2 * d_down * d_up / (d_down + d_up)`` (occupation-density normalisation),
which gives

    rate_up   = 1 / (2 * b * d_up)
    rate_down = 1 / (2 * b * d_down)

and the zero-drift balance ``rate_up * d_up == rate_down * d_down``.  A
missing neighbour counts as an infinite gap, so a finite extreme atom
reflects.  Infinite atoms absorb.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import stats

from gapflow.errors import (
    EmptyMeasure,
    InvalidPosition,
    NonAtomicMeasure,
    RateOverflow,
    StartOutsideHull,
    ValidationError,
)
from gapflow.measure import (
    SpeedMeasure,
    classify_support,
    initial_split,
    validate_measure,
)

RATE_CONSTANT = 0.5
STIFF_MASS_REL = 1e-12
DEFAULT_TOL = 1e-10
DEFAULT_RATE_BUDGET = 1e8
MAX_SQUARING_LEVELS = 40
# Poisson mean above which the transition matrix is built and squared
# instead of iterating the vector.
DIRECT_POISSON_MEAN = 2048.0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GapChain:
    grid: np.ndarray
    masses: np.ndarray
    rates_up: np.ndarray
    rates_down: np.ndarray
    absorbing: np.ndarray
    initial: np.ndarray
    x0: float

    @property
    def size(self) -> int:
        return len(self.grid)

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates_up + self.rates_down

    def generator(self) -> np.ndarray:
        """Dense generator matrix (rows sum to zero)."""
        n = self.size
        q = np.zeros((n, n))
        idx = np.arange(n)
        q[idx[:-1], idx[1:]] = self.rates_up[:-1]
        q[idx[1:], idx[:-1]] = self.rates_down[1:]
        q[idx, idx] = -self.exit_rates
        return q


@dataclass(frozen=True)
class LawAtTime:
    grid: np.ndarray
    probabilities: np.ndarray
    time: float
    truncation_error_bound: float
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def mean(self) -> float:
        return math.fsum(self.grid * self.probabilities)

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(self.probabilities * (self.grid - m) ** 2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "time": self.time,
            "grid": self.grid.tolist(),
            "probabilities": self.probabilities.tolist(),
            "mean": self.mean,
            "truncation_error_bound": self.truncation_error_bound,
        }


def _drop_stiff_atoms(measure: SpeedMeasure) -> list[tuple[float, float]]:
    atoms = list(measure.atoms)
    ys = [y for y, _ in atoms]
    kept = []
    for i, (y, b) in enumerate(atoms):
        if math.isinf(b):
            kept.append((y, b))
            continue
        gaps = []
        if i > 0:
            gaps.append(y - ys[i - 1])
        if i + 1 < len(ys):
            gaps.append(ys[i + 1] - y)
        scale = sum(gaps) / len(gaps) if gaps else 1.0
        if b >= STIFF_MASS_REL * scale:
            kept.append((y, b))
    return kept


def build_chain(measure: SpeedMeasure, x0: float) -> GapChain:
    """Birth-death chain whose law at time t is that of the gap diffusion."""
    if measure.has_tails:
        raise NonAtomicMeasure("forward solves need a purely atomic measure (tail flags set)")
    if not measure.atoms:
        raise EmptyMeasure("the speed measure has no atoms")
    x0 = float(x0)
    if not math.isfinite(x0):
        raise InvalidPosition("x0 must be finite")
    atoms = _drop_stiff_atoms(measure)
    if not atoms:
        raise EmptyMeasure("every atom fell below the stiffness floor")
    (y_first, b_first), (y_last, b_last) = atoms[0], atoms[-1]
    if math.isinf(b_first) and math.isinf(b_last) and not (y_first <= x0 <= y_last):
        raise StartOutsideHull(f"x0={x0!r} lies outside the absorbing hull [{y_first}, {y_last}]")

    grid = np.array([y for y, _ in atoms])
    masses = np.array([b for _, b in atoms])
    n = len(grid)
    gaps = np.diff(grid)
    d_down = np.concatenate(([np.inf], gaps))
    d_up = np.concatenate((gaps, [np.inf]))
    absorbing = np.isinf(masses)
    with np.errstate(divide="ignore"):
        up = np.where(absorbing, 0.0, RATE_CONSTANT / (masses * d_up))
        down = np.where(absorbing, 0.0, RATE_CONSTANT / (masses * d_down))

    start = initial_split(classify_support(validate_measure(atoms), x0), x0)
    initial = np.zeros(n)
    for y, p in start.points:
        initial[np.searchsorted(grid, y)] += p
    return GapChain(
        grid=_frozen(grid),
        masses=_frozen(masses),
        rates_up=_frozen(up),
        rates_down=_frozen(down),
        absorbing=_frozen(absorbing),
        initial=_frozen(initial),
        x0=x0,
    )


def _poisson_weights(mean: float, tol: float) -> tuple[np.ndarray, float]:
    guess = stats.poisson.isf(tol, mean)
    # isf gives up (nan) for very small tails
    right = int(guess) if math.isfinite(guess) else int(mean + 12.0 * math.sqrt(mean) + 40.0)
    stride = max(1, int(math.sqrt(mean)) // 4)
    while stats.poisson.sf(right, mean) > tol:
        right += stride
    weights = stats.poisson.pmf(np.arange(right + 1), mean)
    return weights, float(stats.poisson.sf(right, mean))


def _uniformized_terms(chain: GapChain, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    stay = 1.0 - chain.exit_rates / lam
    return stay, chain.rates_up / lam, chain.rates_down / lam


def _step(v: np.ndarray, stay: np.ndarray, up: np.ndarray, down: np.ndarray) -> np.ndarray:
    # one application of the uniformised kernel to row vector(s) along the last axis
    out = v * stay
    out[..., 1:] += v[..., :-1] * up[:-1]
    out[..., :-1] += v[..., 1:] * down[1:]
    return out


def _poisson_mix(v: np.ndarray, terms, weights: np.ndarray) -> np.ndarray:
    acc = weights[0] * v
    for w in weights[1:]:
        v = _step(v, *terms)
        acc += w * v
    return acc / weights.sum()


def law_at(
    chain: GapChain,
    t: float,
    tol: float = DEFAULT_TOL,
    *,
    rate_budget: float = DEFAULT_RATE_BUDGET,
    max_levels: int = MAX_SQUARING_LEVELS,
) -> LawAtTime:
    """Transient law ``initial @ expm(t Q)`` by uniformisation.

    The Poisson series is cut once its tail drops below ``tol``; the kept
    weights are renormalised so the output is an exact probability vector and
    the dropped tail mass is reported as ``truncation_error_bound``.  Large
    ``max_rate * t`` is handled by halving the horizon and squaring the
    transition matrix.
    """
    t = float(t)
    if not (t >= 0.0 and math.isfinite(t)):
        raise ValidationError(f"time must be finite and nonnegative, got {t!r}")
    if not (0.0 < tol <= 1e-3):
        raise ValidationError(f"tol must lie in (0, 1e-3], got {tol!r}")
    lam = float(chain.exit_rates.max(initial=0.0))
    if t == 0.0 or lam == 0.0:
        return LawAtTime(chain.grid, chain.initial.copy(), t, 0.0)

    mean = lam * t
    segment_cap = min(rate_budget, DIRECT_POISSON_MEAN)
    levels = 0
    while mean / 2.0**levels > segment_cap:
        levels += 1
    if levels > max_levels or mean / 2.0**max_levels > rate_budget:
        raise RateOverflow(
            f"max exit rate * t = {mean:.3g} exceeds the budget even after {max_levels} halvings"
        )
    terms = _uniformized_terms(chain, lam)
    if levels == 0:
        weights, err = _poisson_weights(mean, tol)
        probs = _poisson_mix(chain.initial.astype(float), terms, weights)
    else:
        seg_tol = tol / 2.0**levels
        weights, seg_err = _poisson_weights(mean / 2.0**levels, seg_tol)
        m = _poisson_mix(np.eye(chain.size), terms, weights)
        for _ in range(levels):
            m = m @ m
            m /= m.sum(axis=1, keepdims=True)
        probs = chain.initial @ m
        err = min(1.0, seg_err * 2.0**levels)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return LawAtTime(chain.grid, _frozen(probs), t, err, {"poisson_mean": mean, "levels": levels})


def forward_G(
    b: np.ndarray,
    grid: np.ndarray,
    x0: float,
    t: float = 1.0,
    tol: float = DEFAULT_TOL,
) -> LawAtTime:
    """Law at time ``t`` for interior masses ``b`` on ``grid`` with absorbing ends.

    Zero (or stiff) masses remove their grid point; removed points get
    probability zero in the returned full-grid law.
    """
    grid = np.asarray(grid, dtype=float)
    b = np.asarray(b, dtype=float)
    if grid.ndim != 1 or len(grid) < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidPosition("grid must be strictly increasing with at least two points")
    if b.shape != (len(grid) - 2,):
        raise ValidationError(f"expected {len(grid) - 2} interior masses, got shape {b.shape}")
    if np.any(np.isnan(b)) or np.any(b < 0):
        raise ValidationError("interior masses must lie in [0, inf]")
    if not (grid[0] < x0 < grid[-1]):
        raise StartOutsideHull(f"x0={x0!r} must lie strictly inside ({grid[0]}, {grid[-1]})")
    atoms = [(grid[0], math.inf)]
    atoms += [(y, m) for y, m in zip(grid[1:-1], b) if m > 0.0]
    atoms.append((grid[-1], math.inf))
    chain = build_chain(SpeedMeasure(tuple((float(y), float(m)) for y, m in atoms)), x0)
    law = law_at(chain, t, tol)
    full = np.zeros(len(grid))
    full[np.searchsorted(grid, chain.grid)] = law.probabilities
    return LawAtTime(_frozen(grid.copy()), _frozen(full), law.time, law.truncation_error_bound, law.meta)


def forward_measure(
    measure: SpeedMeasure, grid: np.ndarray, x0: float, t: float = 1.0, tol: float = DEFAULT_TOL
) -> LawAtTime:
    """Law at time ``t`` of ``measure`` reported on ``grid`` (atoms must be grid points)."""
    law = law_at(build_chain(measure, x0), t, tol)
    grid = np.asarray(grid, dtype=float)
    full = np.zeros(len(grid))
    idx = np.searchsorted(grid, law.grid)
    if np.any(idx >= len(grid)) or np.any(grid[np.minimum(idx, len(grid) - 1)] != law.grid):
        raise ValidationError("measure atoms are not all on the reporting grid")
    full[idx] = law.probabilities
    return LawAtTime(grid, full, law.time, law.truncation_error_bound, law.meta)
