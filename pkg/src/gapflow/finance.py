"""Single-maturity call-price calibration with zero interest rates.

A convex call curve sampled on strikes ``0 = K_0 < ... < K_m`` determines a
discrete law through forward-difference slopes ``s_j``: mass ``1 + s_0`` at
zero and ``s_j - s_{j-1}`` at interior strikes.  Past the last strike a
positive price is completed by one atom carrying the remaining mass ``-s_{m-1}``
and placed so that the mean stays equal to the spot.  The law is then
realised by a gap diffusion at horizon 1 and the clock is rescaled to ``T``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from gapflow.chain import build_chain, law_at
from gapflow.errors import ConvexityViolation, InvalidCurve, NegativeTailMass
from gapflow.invert import CalibrationResult, invert_discrete
from gapflow.measure import SpeedMeasure, TargetLaw

CONVEXITY_TOL = 1e-12
MIN_SOLVER_TOL = 1e-13


@dataclass(frozen=True)
class CallCurve:
    strikes: np.ndarray
    prices: np.ndarray
    maturity: float = 1.0

    def __post_init__(self) -> None:
        k = np.asarray(self.strikes, dtype=float)
        c = np.asarray(self.prices, dtype=float)
        if k.ndim != 1 or k.shape != c.shape or len(k) < 2:
            raise InvalidCurve("a call curve needs at least two (strike, price) pairs")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(c))):
            raise InvalidCurve("strikes and prices must be finite")
        if k[0] != 0.0:
            raise InvalidCurve("the first strike must be 0 (its price is the spot)")
        if np.any(np.diff(k) <= 0.0):
            raise InvalidCurve("strikes must be strictly increasing")
        if np.any(c < 0.0):
            raise InvalidCurve("prices must be nonnegative")
        if not (self.maturity > 0.0 and math.isfinite(self.maturity)):
            raise InvalidCurve("maturity must be positive and finite")
        slopes = np.diff(c) / np.diff(k)
        if np.any(slopes > CONVEXITY_TOL):
            raise InvalidCurve("prices must be nonincreasing in strike")
        if np.any(np.diff(slopes) < -CONVEXITY_TOL):
            j = int(np.argmin(np.diff(slopes))) + 1
            raise ConvexityViolation(f"call curve is not convex at strike {k[j]!r}")
        if np.any(c < np.maximum(c[0] - k, 0.0) - CONVEXITY_TOL):
            raise InvalidCurve("prices must dominate the intrinsic value (x0 - K)^+")
        k.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "prices", c)
        object.__setattr__(self, "maturity", float(self.maturity))

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, float]], maturity: float = 1.0) -> CallCurve:
        pairs = sorted(pairs)
        return cls(np.array([k for k, _ in pairs]), np.array([c for _, c in pairs]), maturity)

    @property
    def spot(self) -> float:
        return float(self.prices[0])


def _clamp(mass: float, what: str) -> float:
    if mass < -CONVEXITY_TOL:
        raise ConvexityViolation(f"negative implied mass {mass!r} at {what}")
    return max(float(mass), 0.0)


def implied_law(curve: CallCurve) -> TargetLaw:
    """Law whose call prices match ``curve`` at every strike."""
    k, c = curve.strikes, curve.prices
    slopes = np.diff(c) / np.diff(k)
    points = [(0.0, _clamp(1.0 + slopes[0], "strike 0"))]
    for j in range(1, len(k) - 1):
        points.append((float(k[j]), _clamp(slopes[j] - slopes[j - 1], f"strike {k[j]!r}")))
    q = -float(slopes[-1])
    if c[-1] > 0.0:
        if q <= 0.0:
            raise NegativeTailMass(
                "last price is positive but the curve is flat: mass would sit at infinity"
            )
        points.append((float(k[-1] + c[-1] / q), q))
    else:
        points.append((float(k[-1]), _clamp(q, f"strike {k[-1]!r}")))
    points = [(y, p) for y, p in points if p > 0.0]
    total = math.fsum(p for _, p in points)
    return TargetLaw(tuple((y, p / total) for y, p in points))


def reprice(law: TargetLaw, strikes: Sequence[float] | np.ndarray) -> np.ndarray:
    """``E (Y - K)^+`` for each strike, summed exactly over the atoms."""
    out = np.empty(len(strikes))
    for i, strike in enumerate(np.asarray(strikes, dtype=float)):
        out[i] = math.fsum((y - strike) * p for y, p in law.points if y > strike)
    return out


@dataclass(frozen=True)
class CallCalibration:
    calibration: CalibrationResult
    law: TargetLaw
    maturity: float
    repriced: np.ndarray
    max_pricing_error: float
    within_tolerance: bool
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def measure(self) -> SpeedMeasure:
        return self.calibration.measure

    def to_dict(self) -> dict[str, Any]:
        return {
            "measure": self.calibration.measure.to_dict(),
            "maturity": self.maturity,
            "implied_law": self.law.to_dict(),
            "solver": {
                "residual": self.calibration.residual,
                "iterations": self.calibration.iterations,
                "converged": self.calibration.converged,
            },
            "repricing": {
                "prices": self.repriced.tolist(),
                "max_error": self.max_pricing_error,
                "within_tolerance": self.within_tolerance,
            },
        }


def calibrate_calls(curve: CallCurve, tol: float = 1e-9, max_iter: int = 200) -> CallCalibration:
    """Gap diffusion whose time-``T`` call prices reproduce ``curve``.

    The implied law is inverted at horizon 1 and every finite mass is then
    multiplied by ``T``, which stretches the clock from 1 to ``T``.  The
    solver tolerance is tightened so that the repricing error stays below
    ``tol * x0``.
    """
    law = implied_law(curve)
    x0 = curve.spot
    span = law.positions[-1] - law.positions[0]
    solver_tol = max(MIN_SOLVER_TOL, tol * x0 / (max(span, 1.0) * len(law.points)))
    solver_tol = min(solver_tol, tol)
    unit = invert_discrete(law, x0, solver_tol, max_iter)
    measure = unit.measure.scaled(curve.maturity)
    final = law_at(build_chain(measure, x0), curve.maturity, 1e-13)
    fitted = TargetLaw.from_arrays(final.grid, final.probabilities)
    repriced = reprice(fitted, curve.strikes)
    err = float(np.abs(repriced - curve.prices).max())
    calibration = CalibrationResult(
        measure, unit.residual, unit.iterations, unit.converged, unit.trace, final, unit.meta
    )
    return CallCalibration(
        calibration, law, curve.maturity, repriced, err, err <= tol * max(x0, 0.0) or err == 0.0,
        {"solver_tol": solver_tol},
    )
