"""Numerical inversion of the forward map: find interior masses that reproduce a law.

Unknowns are ``z = log b`` for the interior support points; the two extreme
support points carry infinite mass.  The solver is a damped Newton iteration
on ``G(exp z) - p`` with a finite-difference Jacobian, falling back to a
homotopy in the target when Newton stalls.  It returns the first solution it
finds; nothing is claimed about uniqueness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import optimize

from gapflow.chain import LawAtTime, forward_G
from gapflow.errors import GapflowError, MeanMismatch, ValidationError
from gapflow.measure import SpeedMeasure, TargetLaw

MEAN_TOL = 1e-9
FORWARD_TOL = 1e-13
H_REL = 1e-5
MAX_LOG_STEP = 5.0
Z_BOUND = 35.0


@dataclass(frozen=True)
class CalibrationResult:
    measure: SpeedMeasure
    residual: float
    iterations: int
    converged: bool
    trace: tuple[float, ...] = ()
    law: LawAtTime | None = None
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "measure": self.measure.to_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "trace": list(self.trace),
        }
        if self.law is not None:
            out["law"] = self.law.to_dict()
        if self.meta:
            out["solver"] = dict(self.meta)
        return out


def jacobian_fd(
    b: np.ndarray,
    grid: np.ndarray,
    x0: float,
    h_rel: float = H_REL,
    tol: float = FORWARD_TOL,
    t: float = 1.0,
) -> np.ndarray:
    """Central differences of the forward map in log-mass coordinates.

    Returns the ``(len(grid), len(b))`` matrix ``d p_k / d log b_i``.
    """
    b = np.asarray(b, dtype=float)
    if not (0.0 < h_rel <= 1e-2):
        raise ValidationError("h_rel must lie in (0, 1e-2]")
    if np.any(~np.isfinite(b)) or np.any(b <= 0.0):
        raise ValidationError("finite-difference Jacobian needs finite positive masses")
    z = np.log(b)
    jac = np.empty((len(grid), len(b)))
    for i in range(len(b)):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h_rel
        zm[i] -= h_rel
        gp = forward_G(np.exp(zp), grid, x0, t, tol).probabilities
        gm = forward_G(np.exp(zm), grid, x0, t, tol).probabilities
        jac[:, i] = (gp - gm) / (2.0 * h_rel)
    return jac


class _Problem:
    def __init__(self, grid: np.ndarray, x0: float, forward_tol: float, h_rel: float):
        self.grid = grid
        self.x0 = x0
        self.forward_tol = forward_tol
        self.h_rel = h_rel
        self.evaluations = 0

    def forward(self, z: np.ndarray) -> np.ndarray | None:
        self.evaluations += 1
        try:
            return forward_G(np.exp(z), self.grid, self.x0, 1.0, self.forward_tol).probabilities
        except GapflowError:
            return None

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        self.evaluations += 2 * len(z)
        return jacobian_fd(np.exp(z), self.grid, self.x0, self.h_rel, self.forward_tol)


def _variance(grid: np.ndarray, probs: np.ndarray) -> float:
    m = float(grid @ probs)
    return float(probs @ (grid - m) ** 2)


def _scale_to_variance(prob: _Problem, shape: np.ndarray, target_var: float) -> np.ndarray:
    """Multiply ``shape`` by the constant that matches the target variance."""
    base = np.log(shape)

    def gap(logc: float) -> float:
        g = prob.forward(np.clip(base + logc, -Z_BOUND, Z_BOUND))
        if g is None:  # too stiff: the chain is as spread out as it gets
            return math.inf
        return _variance(prob.grid, g) - target_var

    lo, hi = -2.0, 2.0
    f_lo, f_hi = gap(lo), gap(hi)
    for _ in range(12):
        if f_lo > 0.0 >= f_hi:
            break
        if f_lo <= 0.0:
            lo -= 3.0
            f_lo = gap(lo)
        if f_hi > 0.0:
            hi += 3.0
            f_hi = gap(hi)
    if not (f_lo > 0.0 >= f_hi) or math.isinf(f_lo):
        best = lo if abs(f_lo) < abs(f_hi) else hi
        return np.clip(base + best, -Z_BOUND, Z_BOUND)
    logc = optimize.brentq(gap, lo, hi, xtol=1e-4)
    return np.clip(base + logc, -Z_BOUND, Z_BOUND)


def warm_start(grid: np.ndarray, probs: np.ndarray, x0: float, prob: _Problem | None = None) -> np.ndarray:
    """Starting log-masses for the Newton iteration.

    Two shapes are tried, mass proportional to ``p_i * (d_down + d_up) / 2``
    and plain spacing ``(d_down + d_up) / 2``; each is rescaled so that the
    forward law has the target variance, and the better fit is kept.
    """
    prob = prob or _Problem(grid, x0, FORWARD_TOL, H_REL)
    half_span = 0.5 * (grid[2:] - grid[:-2])
    interior = probs[1:-1]
    target_var = _variance(grid, probs)
    best_z, best_res = None, math.inf
    for shape in (np.maximum(interior, 1e-300) * half_span, half_span):
        z = _scale_to_variance(prob, shape, target_var)
        g = prob.forward(z)
        res = math.inf if g is None else float(np.abs(g - probs).max())
        if res < best_res:
            best_z, best_res = z, res
    if best_z is None:
        best_z = np.log(half_span)
    return best_z


@dataclass
class _NewtonState:
    z: np.ndarray
    g: np.ndarray
    iterations: int = 0
    trace: list[float] = field(default_factory=list)


def _newton(
    prob: _Problem,
    state: _NewtonState,
    target: np.ndarray,
    tol: float,
    budget: int,
) -> bool:
    """Damped Newton on ``G(exp z) = target``; updates ``state`` in place."""
    r = state.g - target
    stalled = 0
    for _ in range(budget):
        res_inf = float(np.abs(r).max())
        if res_inf <= tol:
            return True
        jac = prob.jacobian(state.z)
        dz, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        big = float(np.abs(dz).max())
        if big > MAX_LOG_STEP:
            dz *= MAX_LOG_STEP / big
        norm0 = float(np.linalg.norm(r))
        alpha = 1.0
        accepted = False
        for _ in range(25):
            z_new = np.clip(state.z + alpha * dz, -Z_BOUND, Z_BOUND)
            g_new = prob.forward(z_new)
            if g_new is not None:
                r_new = g_new - target
                if np.linalg.norm(r_new) <= (1.0 - 1e-4 * alpha) * norm0:
                    accepted = True
                    break
            alpha *= 0.5
        state.iterations += 1
        if not accepted:
            state.trace.append(res_inf)
            return False
        stalled = stalled + 1 if np.linalg.norm(r_new) > 0.9 * norm0 else 0
        state.z, state.g, r = z_new, g_new, r_new
        state.trace.append(float(np.abs(r).max()))
        if stalled >= 8:
            return float(np.abs(r).max()) <= tol
    return float(np.abs(r).max()) <= tol


def solve_newton(
    grid: np.ndarray,
    probs: np.ndarray,
    x0: float,
    tol: float = 1e-9,
    max_iter: int = 200,
    *,
    max_segments: int = 64,
    forward_tol: float = FORWARD_TOL,
    h_rel: float = H_REL,
    z0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int, list[float], dict[str, Any]]:
    """Newton with homotopy fallback on a trimmed grid (all ``probs > 0``).

    Returns ``(b, residual, iterations, trace, info)``.
    """
    prob = _Problem(grid, x0, forward_tol, h_rel)
    z = warm_start(grid, probs, x0, prob) if z0 is None else np.asarray(z0, dtype=float)
    g = prob.forward(z)
    if g is None:
        z = np.log(0.5 * (grid[2:] - grid[:-2]))
        g = prob.forward(z)
    state = _NewtonState(z, g)
    state.trace.append(float(np.abs(g - probs).max()))
    info: dict[str, Any] = {"strategy": "newton", "homotopy_segments": 0}

    ok = _newton(prob, state, probs, tol, max_iter)
    if not ok and state.iterations < max_iter:
        info["strategy"] = "newton+homotopy"
        start = state.g.copy()
        s, ds = 0.0, 0.25
        segments = 0
        while segments < max_segments and state.iterations < max_iter and s < 1.0:
            s_try = min(1.0, s + ds)
            target = (1.0 - s_try) * start + s_try * probs
            seg_tol = tol if s_try == 1.0 else max(tol, 1e-7)
            saved = _NewtonState(state.z.copy(), state.g.copy(), state.iterations, state.trace)
            budget = min(30, max_iter - state.iterations)
            if _newton(prob, state, target, seg_tol, budget):
                s = s_try
                ds = min(2.0 * ds, 1.0)
            else:
                state.z, state.g = saved.z, saved.g
                ds *= 0.5
            segments += 1
        info["homotopy_segments"] = segments
        if s >= 1.0 and float(np.abs(state.g - probs).max()) > tol:
            _newton(prob, state, probs, tol, max(0, max_iter - state.iterations))
    info["forward_evaluations"] = prob.evaluations
    residual = float(np.abs(state.g - probs).max())
    return np.exp(state.z), residual, state.iterations, state.trace, info


def _endpoint_measure(points: list[tuple[float, float]], extra: tuple = ()) -> SpeedMeasure:
    atoms = [(float(points[0][0]), math.inf), *extra, (float(points[-1][0]), math.inf)]
    return SpeedMeasure(tuple(atoms))


def invert_discrete(
    target: TargetLaw,
    x0: float,
    tol: float = 1e-9,
    max_iter: int = 200,
    **options: Any,
) -> CalibrationResult:
    """Speed measure whose gap diffusion started at ``x0`` has law ``target`` at time 1.

    Points with zero probability are dropped first.  One remaining point gives
    an infinite atom at ``x0``; two give the two absorbing endpoints alone.
    When the iteration budget runs out the best iterate is returned with
    ``converged=False``.
    """
    x0 = float(x0)
    if not tol > 0.0:
        raise ValidationError("tol must be positive")
    if abs(target.mean - x0) > MEAN_TOL * max(1.0, abs(x0)):
        raise MeanMismatch(f"target mean {target.mean!r} differs from x0={x0!r}")
    points = [(y, p) for y, p in target.points if p > 0.0]
    if len(points) == 1:
        measure = SpeedMeasure(((x0, math.inf),))
        law = LawAtTime(np.array([x0]), np.array([1.0]), 1.0, 0.0)
        return CalibrationResult(measure, 0.0, 0, True, (0.0,), law, {"strategy": "point"})

    grid = np.array([y for y, _ in points])
    probs = np.array([p for _, p in points])
    if len(points) == 2:
        law = forward_G(np.empty(0), grid, x0, 1.0, FORWARD_TOL)
        residual = float(np.abs(law.probabilities - probs).max())
        return CalibrationResult(
            _endpoint_measure(points), residual, 0, residual <= tol, (residual,), law,
            {"strategy": "initial_split"},
        )

    b, residual, iterations, trace, info = solve_newton(grid, probs, x0, tol, max_iter, **options)
    interior = tuple((float(y), float(m)) for y, m in zip(grid[1:-1], b))
    measure = _endpoint_measure(points, interior)
    law = forward_G(b, grid, x0, 1.0, options.get("forward_tol", FORWARD_TOL))
    return CalibrationResult(
        measure, residual, iterations, residual <= tol, tuple(trace), law, info
    )

