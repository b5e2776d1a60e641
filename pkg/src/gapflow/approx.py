"""Finite-support approximation of general finite-mean laws.

A law enters as a quantile table: knots ``(u_k, q_k)`` with ``u`` and ``q``
nondecreasing, linear interpolation between knots and flat extension to
``u = 0`` and ``u = 1``.  Repeated ``u`` values encode jumps of the quantile
function (atoms of the law), so a finite-support law is a step table.

``discretize`` applies three steps to a random variable ``Y`` with that law:
clip to ``[-n, n]``, floor to the grid ``Z / n``, then shift by the constant
that restores the declared mean.  All three are computed exactly on the table.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from gapflow.errors import InvalidLaw, UnknownMean, ValidationError
from gapflow.invert import CalibrationResult, invert_discrete
from gapflow.measure import TargetLaw
from gapflow.simulate import estimate_EA1, simulate_timechange

DEFAULT_KNOTS = 10_000
DEFAULT_MC_PATHS = 2_000


@dataclass(frozen=True)
class SampledLaw:
    """A law given by its quantile table plus declared moments."""

    u: np.ndarray
    q: np.ndarray
    declared_mean: float | None
    declared_variance: float | None = None

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if u.ndim != 1 or u.shape != q.shape or len(u) == 0:
            raise InvalidLaw("quantile table needs matching non-empty u and q columns")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(q))):
            raise InvalidLaw("quantile table entries must be finite")
        if u[0] < 0.0 or u[-1] > 1.0:
            raise InvalidLaw("u values must lie in [0, 1]")
        if np.any(np.diff(u) < 0.0) or np.any(np.diff(q) < 0.0):
            raise InvalidLaw("quantile table must be nondecreasing in u and in q")
        if self.declared_mean is not None and not math.isfinite(self.declared_mean):
            raise InvalidLaw("declared mean must be finite")
        if self.declared_variance is not None and not self.declared_variance >= 0.0:
            raise InvalidLaw("declared variance must be nonnegative")
        u.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_table(
        cls,
        u: Sequence[float],
        q: Sequence[float],
        mean: float | None = None,
        variance: float | None = None,
    ) -> SampledLaw:
        return cls(np.asarray(u, dtype=float), np.asarray(q, dtype=float), mean, variance)

    @classmethod
    def from_law(cls, law: TargetLaw) -> SampledLaw:
        """Step table of a finite-support law; moments are taken from the law."""
        probs = law.probabilities
        keep = probs > 0.0
        ys = law.positions[keep]
        cdf = np.cumsum(probs[keep])
        cdf[-1] = 1.0
        left = np.concatenate(([0.0], cdf[:-1]))
        u = np.column_stack((left, cdf)).ravel()
        q = np.repeat(ys, 2)
        return cls(u, q, law.mean, law.variance)

    @classmethod
    def from_ppf(
        cls,
        ppf: Callable[[np.ndarray], np.ndarray],
        mean: float | None,
        variance: float | None = None,
        knots: int = DEFAULT_KNOTS,
    ) -> SampledLaw:
        """Tabulate ``ppf`` at the midpoints ``(i + 1/2) / knots``."""
        if knots < 1:
            raise ValidationError("knots must be at least 1")
        u = (np.arange(knots) + 0.5) / knots
        return cls(u, np.asarray(ppf(u), dtype=float), mean, variance)

    def table_mean(self) -> float:
        """Exact mean of the interpolated table (which may differ from the declared one)."""
        u, q = self.u, self.q
        inner = np.sum(np.diff(u) * (q[1:] + q[:-1]) / 2.0)
        return float(u[0] * q[0] + inner + (1.0 - u[-1]) * q[-1])

    def cdf_strict(self, x: np.ndarray | float) -> np.ndarray:
        """``P(Y < x)`` for the interpolated table."""
        x = np.asarray(x, dtype=float)
        u, q = self.u, self.q
        idx = np.searchsorted(q, x, side="left")
        out = np.empty(x.shape)
        lo = idx == 0
        hi = idx == len(q)
        mid = ~(lo | hi)
        out[lo] = 0.0
        out[hi] = 1.0
        k = idx[mid]
        # q[k-1] < x <= q[k], so the segment is strictly increasing
        frac = (x[mid] - q[k - 1]) / (q[k] - q[k - 1])
        out[mid] = u[k - 1] + frac * (u[k] - u[k - 1])
        return out

    def quantile(self, v: np.ndarray | float, side: str = "right") -> np.ndarray:
        """Interpolated quantile; ``side`` picks the one-sided limit at jumps."""
        v = np.asarray(v, dtype=float)
        u, q = self.u, self.q
        idx = np.searchsorted(u, v, side=side)
        out = np.empty(v.shape)
        lo = idx == 0
        hi = idx == len(u)
        mid = ~(lo | hi)
        out[lo] = q[0]
        out[hi] = q[-1]
        k = idx[mid]
        width = u[k] - u[k - 1]
        frac = np.where(width > 0.0, (v[mid] - u[k - 1]) / np.where(width > 0.0, width, 1.0), 0.0)
        out[mid] = q[k - 1] + frac * (q[k] - q[k - 1])
        return out


def _as_sampled(law: SampledLaw | TargetLaw) -> SampledLaw:
    return SampledLaw.from_law(law) if isinstance(law, TargetLaw) else law


def wasserstein1(a: SampledLaw | TargetLaw, b: SampledLaw | TargetLaw) -> float:
    """Exact ``W_1 = int_0^1 |Q_a(u) - Q_b(u)| du`` for two quantile tables."""
    a, b = _as_sampled(a), _as_sampled(b)
    knots = np.unique(np.concatenate(([0.0, 1.0], a.u, b.u)))
    left, right = knots[:-1], knots[1:]
    d0 = a.quantile(left, "right") - b.quantile(left, "right")
    d1 = a.quantile(right, "left") - b.quantile(right, "left")
    w = right - left
    same = d0 * d1 >= 0.0
    abs0, abs1 = np.abs(d0), np.abs(d1)
    denom = np.where(same, 1.0, abs0 + abs1)
    # the difference is linear on each piece; integrate |.| exactly
    pieces = np.where(same, 0.5 * (abs0 + abs1), 0.5 * (d0**2 + d1**2) / denom) * w
    return float(np.sum(pieces))


@dataclass(frozen=True)
class Discretization:
    law: TargetLaw
    n: int
    shift: float


def discretize_detail(mu: SampledLaw | TargetLaw, n: int) -> Discretization:
    """``discretize`` that also reports the recentring shift."""
    mu = _as_sampled(mu)
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    n = int(n)
    if mu.declared_mean is None:
        raise UnknownMean("discretize needs the declared mean of the law")
    # only grid cells the table can reach carry mass
    k_lo = max(-n * n, math.floor(mu.q[0] * n))
    k_hi = min(n * n, math.floor(mu.q[-1] * n))
    k = np.arange(k_lo, k_hi + 1)
    grid = k / n
    # P(Y'' = k/n) = P(k/n <= Y' < (k+1)/n); the ends pick up the clipped tails
    upper = mu.cdf_strict((k + 1) / n)
    lower = mu.cdf_strict(grid)
    probs = upper - lower
    # the end cells collect everything clipped (or nothing, if the table stops short)
    probs[0] = upper[0]
    probs[-1] = 1.0 - lower[-1]
    if len(probs) == 1:
        probs[0] = 1.0
    probs = np.clip(probs, 0.0, None)
    keep = probs > 0.0
    grid, probs = grid[keep], probs[keep]
    probs = probs / math.fsum(probs)
    shift = mu.declared_mean - math.fsum(grid * probs)
    law = TargetLaw(tuple((float(y + shift), float(p)) for y, p in zip(grid, probs)))
    return Discretization(law, n, shift)


def discretize(mu: SampledLaw | TargetLaw, n: int) -> TargetLaw:
    """Clip to ``[-n, n]``, floor to ``Z / n`` and recentre to the declared mean."""
    return discretize_detail(mu, n).law


@dataclass(frozen=True)
class ApproxResult:
    calibration: CalibrationResult
    target: TargetLaw
    shift: float
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "calibration": self.calibration.to_dict(),
            "target": self.target.to_dict(),
            "shift": self.shift,
            "diagnostics": dict(self.diagnostics),
        }


def approx_invert(
    mu: SampledLaw | TargetLaw,
    x0: float,
    n: int,
    tol: float = 1e-9,
    max_iter: int = 200,
    *,
    mc_paths: int = DEFAULT_MC_PATHS,
    mc_step: float = 1e-5,
    seed: int = 42,
) -> ApproxResult:
    """Discretize ``mu`` at level ``n`` and invert the result.

    Diagnostics hold ``W_1`` between the fitted law and the discretized target,
    ``W_1`` between the discretized target and ``mu`` and, when the variance
    is declared and ``mc_paths > 0``, a Monte Carlo estimate of ``E A_1``.
    """
    mu = _as_sampled(mu)
    if mu.declared_mean is None:
        raise UnknownMean("approx_invert needs the declared mean of the law")
    detail = discretize_detail(mu, n)
    target = detail.law
    calib = invert_discrete(target, x0, tol, max_iter)
    fitted = TargetLaw.from_arrays(calib.law.grid, calib.law.probabilities, drop_zeros=True)
    diagnostics: dict[str, Any] = {
        "n": detail.n,
        "support_size": len(target.points),
        "w1_fit": wasserstein1(fitted, target),
        "w1_to_law": wasserstein1(target, mu),
        "mean_abs_target": math.fsum(abs(y) * p for y, p in target.points),
        "variance_target": target.variance,
        "declared_variance": mu.declared_variance,
    }
    if mu.declared_variance is not None and mc_paths > 0 and len(calib.measure) > 1:
        bundle = simulate_timechange(calib.measure, x0, 1.0, mc_paths, step=mc_step, seed=seed)
        ea1, se = estimate_EA1(bundle)
        diagnostics.update(EA1=ea1, EA1_se=se, mc_paths=mc_paths)
    return ApproxResult(calib, target, detail.shift, diagnostics)
