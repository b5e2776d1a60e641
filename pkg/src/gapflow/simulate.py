"""Monte Carlo engines for gap diffusions.

``simulate_jump`` runs the birth-death chain exactly.  ``simulate_timechange``
rebuilds the process from its definition: it walks a Brownian motion, turns
occupation times of small windows around the atoms into local-time estimates,
accumulates the clock and reads the position off when the clock passes ``t``.
The two engines share nothing but the measure, which is what makes the second
one useful as an oracle for the first and for the forward solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from gapflow import _kernels
from gapflow.chain import build_chain
from gapflow.errors import (
    BudgetExceeded,
    EmptyMeasure,
    NonAtomicMeasure,
    ValidationError,
    WrongEngine,
)
from gapflow.measure import SpeedMeasure

Engine = Literal["jump_chain", "time_change"]

DEFAULT_STEP = 1e-5
DEFAULT_RETRIES = 3
# Outside the atom windows the walk may take steps whose standard deviation
# is at most 1/COARSE_FACTOR of the distance to the nearest window.
COARSE_FACTOR = 6.0
CAP_FACTOR = 1e3


def default_bandwidth(step: float) -> float:
    return 2.0 * math.sqrt(step) * 5.0


@dataclass(frozen=True)
class PathBundle:
    samples_X1: np.ndarray
    samples_A1: np.ndarray | None
    seed: int
    engine: Engine
    n_paths: int
    t: float
    step: float | None = None
    bandwidth: float | None = None
    retries: int = 0
    meta: dict[str, Any] = field(default_factory=dict, compare=False)

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        values, counts = np.unique(self.samples_X1, return_counts=True)
        return values, counts

    def empirical_law(self, grid: np.ndarray) -> np.ndarray:
        """Empirical probabilities on ``grid`` (samples must sit on grid points)."""
        grid = np.asarray(grid, dtype=float)
        idx = np.searchsorted(grid, self.samples_X1)
        idx = np.clip(idx, 0, len(grid) - 1)
        if not np.all(grid[idx] == self.samples_X1):
            raise ValidationError("some samples are not grid points")
        return np.bincount(idx, minlength=len(grid)) / self.n_paths

    def summary(self) -> dict[str, Any]:
        values, counts = self.histogram()
        out: dict[str, Any] = {
            "engine": self.engine,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "t": self.t,
            "histogram": {"values": values.tolist(), "counts": counts.tolist()},
            "mean_X": _pairwise_mean(self.samples_X1),
            "se_X": _se(self.samples_X1),
        }
        if self.engine == "time_change":
            mean_a, se_a = estimate_EA1(self)
            out.update(
                step=self.step,
                bandwidth=self.bandwidth,
                retries=self.retries,
                EA1=mean_a,
                EA1_se=se_a,
            )
        return out


def _pairwise_mean(x: np.ndarray) -> float:
    # np.sum uses pairwise summation, which keeps the result order-stable
    return float(np.sum(x) / len(x)) if len(x) else math.nan


def _se(x: np.ndarray) -> float:
    n = len(x)
    if n < 2:
        return 0.0
    m = _pairwise_mean(x)
    return float(math.sqrt(np.sum((x - m) ** 2) / (n - 1) / n))


def _check_common(measure: SpeedMeasure, n_paths: int, t: float) -> None:
    if measure.has_tails:
        raise NonAtomicMeasure("simulation needs a purely atomic measure")
    if not measure.atoms:
        raise EmptyMeasure("the speed measure has no atoms")
    if n_paths < 1:
        raise ValidationError("n_paths must be at least 1")
    if not (t >= 0.0 and math.isfinite(t)):
        raise ValidationError("t must be finite and nonnegative")


def _seed64(seed: int) -> np.uint64:
    return np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)


def simulate_jump(measure: SpeedMeasure, x0: float, t: float, n_paths: int, seed: int = 42) -> PathBundle:
    """Exact simulation of the birth-death chain (exponential holding times)."""
    _check_common(measure, n_paths, t)
    chain = build_chain(measure, x0)
    init_cdf = np.cumsum(chain.initial)
    init_cdf[-1] = 1.0
    _kernels.configure_threads()
    xs = _kernels.jump_paths(
        np.ascontiguousarray(chain.grid),
        np.ascontiguousarray(chain.rates_up),
        np.ascontiguousarray(chain.rates_down),
        init_cdf,
        float(t),
        _seed64(seed),
        int(n_paths),
    )
    return PathBundle(xs, None, int(seed), "jump_chain", int(n_paths), float(t))


def _barrier_tables(ys: np.ndarray, bs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # entry j: nearest infinite atom among ys[:j] / ys[j:]
    n = len(ys)
    below = np.full(n + 1, -np.inf)
    above = np.full(n + 1, np.inf)
    for j in range(1, n + 1):
        below[j] = ys[j - 1] if np.isinf(bs[j - 1]) else below[j - 1]
    for j in range(n - 1, -1, -1):
        above[j] = ys[j] if np.isinf(bs[j]) else above[j + 1]
    return below, above


def simulate_timechange(
    measure: SpeedMeasure,
    x0: float,
    t: float,
    n_paths: int,
    step: float = DEFAULT_STEP,
    bandwidth: float | None = None,
    seed: int = 42,
    *,
    time_cap: float | None = None,
    retries: int = DEFAULT_RETRIES,
    coarse_factor: float = COARSE_FACTOR,
) -> PathBundle:
    """Time-change oracle: X_t = B at the first Brownian time the clock exceeds t.

    The clock is ``sum_i b_i * occ_i / (2 * bandwidth)`` where ``occ_i`` is the
    time spent within ``bandwidth`` of atom ``i``.  Infinite atoms stop the
    walk when it reaches them, including crossings detected through the
    Brownian-bridge probability within a step.  The sample is snapped to the
    nearest atom.  Paths whose Brownian time exceeds ``time_cap`` are redrawn
    up to ``retries`` times.
    """
    _check_common(measure, n_paths, t)
    if not step > 0.0:
        raise ValidationError("step must be positive")
    eps = default_bandwidth(step) if bandwidth is None else float(bandwidth)
    if not eps > 0.0:
        raise ValidationError("bandwidth must be positive")
    ys = measure.positions
    bs = measure.masses
    if time_cap is None:
        span = max(ys.max(), x0) - min(ys.min(), x0)
        time_cap = CAP_FACTOR * max(span, 1.0) ** 2
    below, above = _barrier_tables(ys, bs)
    _kernels.configure_threads()
    xs, a_s, tries, status = _kernels.timechange_paths(
        ys,
        bs,
        below,
        above,
        float(x0),
        float(t),
        float(step),
        eps,
        float(coarse_factor),
        float(time_cap),
        int(retries),
        _seed64(seed),
        int(n_paths),
    )
    failed = int(np.count_nonzero(status != _kernels.STATUS_OK))
    if failed:
        raise BudgetExceeded(
            f"{failed} of {n_paths} paths exceeded the Brownian time cap {time_cap:.3g} "
            f"after {retries} retries"
        )
    return PathBundle(
        xs,
        a_s,
        int(seed),
        "time_change",
        int(n_paths),
        float(t),
        step=float(step),
        bandwidth=eps,
        retries=int(tries.sum()),
        meta={"time_cap": time_cap, "coarse_factor": coarse_factor},
    )


def estimate_EA1(bundle: PathBundle) -> tuple[float, float]:
    """Sample mean and standard error of the recorded time changes."""
    if bundle.engine != "time_change" or bundle.samples_A1 is None:
        raise WrongEngine("E A_t is only recorded by the time-change engine")
    return _pairwise_mean(bundle.samples_A1), _se(bundle.samples_A1)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def combined_standard_error(p: np.ndarray, n_paths: int) -> float:
    """Half the summed per-atom binomial standard errors: the natural scale of TV noise."""
    p = np.asarray(p, dtype=float)
    return 0.5 * float(np.sqrt(p * (1.0 - p) / n_paths).sum())
