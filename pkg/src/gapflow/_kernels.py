"""Numba kernels for the two Monte Carlo engines.

Every path owns a counter-based SplitMix64 stream keyed by (seed, path index),
so samples do not depend on how paths are spread over threads.
"""

from __future__ import annotations

import math
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the bundled TBB is too old for numba and only produces a warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_PATH_MUL = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0

STATUS_OK = 0
STATUS_FAILED = 1


def configure_threads() -> int:
    """Apply the GAPFLOW_THREADS cap and return the thread count in use."""
    limit = numba.config.NUMBA_NUM_THREADS
    raw = os.environ.get("GAPFLOW_THREADS")
    if raw:
        try:
            limit = max(1, min(int(raw), limit))
        except ValueError:
            pass
    numba.set_num_threads(limit)
    return limit


@njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(inline="always")
def _uniform(key, ctr):
    # open interval (0, 1)
    x = _mix64(key + ctr * _GOLDEN)
    return (float(x >> _S11) + 0.5) * _INV53


@njit(inline="always")
def path_key(seed, path):
    return _mix64(_mix64(seed) + (np.uint64(path) + _ONE) * _PATH_MUL)


@njit(cache=True)
def _snap(ys, b, x0):
    n = ys.shape[0]
    best = 0
    best_d = abs(b - ys[0])
    for i in range(1, n):
        d = abs(b - ys[i])
        if d < best_d or (d == best_d and abs(ys[i] - x0) < abs(ys[best] - x0)):
            best = i
            best_d = d
    return ys[best]


@njit(cache=True)
def _timechange_path(ys, bs, inf_below, inf_above, x0, t, step, eps, coarse, cap, retries, key):
    n = ys.shape[0]
    for i in range(n):
        if ys[i] == x0 and math.isinf(bs[i]):
            return x0, 0.0, 0, STATUS_OK
    ctr = np.uint64(0)
    spare = 0.0
    has_spare = False
    sq_step = math.sqrt(step)
    half_inv_eps = 0.5 / eps
    for attempt in range(retries + 1):
        b = x0
        u = 0.0
        gamma = 0.0
        j = 0
        while j < n and ys[j] <= b:
            j += 1
        while True:
            # distance from b to the nearest atom window
            d = math.inf
            if j > 0:
                d = b - ys[j - 1]
            if j < n and ys[j] - b < d:
                d = ys[j] - b
            d -= eps
            if d > coarse * sq_step:
                dt = (d / coarse) ** 2
                inc = 0.0
            else:
                dt = step
                acc = 0.0
                i = j - 1
                while i >= 0 and b - ys[i] < eps:
                    if not math.isinf(bs[i]):
                        acc += bs[i]
                    i -= 1
                i = j
                while i < n and ys[i] - b < eps:
                    if not math.isinf(bs[i]):
                        acc += bs[i]
                    i += 1
                inc = acc * dt * half_inv_eps
            if inc > 0.0 and gamma + inc > t:
                a = u + dt * (t - gamma) / inc
                return _snap(ys, b, x0), a, attempt, STATUS_OK
            gamma += inc
            # gaussian increment, Box-Muller with a cached spare
            if has_spare:
                z = spare
                has_spare = False
            else:
                u1 = _uniform(key, ctr)
                ctr += _ONE
                u2 = _uniform(key, ctr)
                ctr += _ONE
                r = math.sqrt(-2.0 * math.log(u1))
                z = r * math.cos(2.0 * math.pi * u2)
                spare = r * math.sin(2.0 * math.pi * u2)
                has_spare = True
            bn = b + math.sqrt(dt) * z
            lo = inf_below[j]
            hi = inf_above[j]
            if bn <= lo:
                return lo, u + dt * (b - lo) / (b - bn), attempt, STATUS_OK
            if bn >= hi:
                return hi, u + dt * (hi - b) / (bn - b), attempt, STATUS_OK
            # Brownian-bridge crossing of the absorbing atoms inside the step
            p_lo = 0.0
            p_hi = 0.0
            if not math.isinf(lo):
                p_lo = math.exp(-2.0 * (b - lo) * (bn - lo) / dt)
            if not math.isinf(hi):
                p_hi = math.exp(-2.0 * (hi - b) * (hi - bn) / dt)
            if p_lo + p_hi > 1e-18:
                v = _uniform(key, ctr)
                ctr += _ONE
                if v < p_lo:
                    return lo, u + 0.5 * dt, attempt, STATUS_OK
                if v < p_lo + p_hi:
                    return hi, u + 0.5 * dt, attempt, STATUS_OK
            b = bn
            u += dt
            while j < n and ys[j] <= b:
                j += 1
            while j > 0 and ys[j - 1] > b:
                j -= 1
            if u > cap:
                break
    return math.nan, math.nan, retries + 1, STATUS_FAILED


@njit(parallel=True, cache=True)
def timechange_paths(ys, bs, inf_below, inf_above, x0, t, step, eps, coarse, cap, retries, seed, n_paths):
    xs = np.empty(n_paths)
    a_s = np.empty(n_paths)
    tries = np.empty(n_paths, dtype=np.int64)
    status = np.empty(n_paths, dtype=np.int64)
    for p in prange(n_paths):
        key = path_key(seed, p)
        x, a, k, s = _timechange_path(
            ys, bs, inf_below, inf_above, x0, t, step, eps, coarse, cap, retries, key
        )
        xs[p] = x
        a_s[p] = a
        tries[p] = k
        status[p] = s
    return xs, a_s, tries, status


@njit(parallel=True, cache=True)
def jump_paths(grid, up, down, init_cdf, t, seed, n_paths):
    out = np.empty(n_paths)
    n = grid.shape[0]
    for p in prange(n_paths):
        key = path_key(seed, p)
        ctr = np.uint64(0)
        v = _uniform(key, ctr)
        ctr += _ONE
        s = 0
        while s < n - 1 and init_cdf[s] < v:
            s += 1
        clock = 0.0
        while True:
            rate = up[s] + down[s]
            if rate <= 0.0:
                break
            clock += -math.log(_uniform(key, ctr)) / rate
            ctr += _ONE
            if clock > t:
                break
            if _uniform(key, ctr) * rate < up[s]:
                s += 1
            else:
                s -= 1
            ctr += _ONE
        out[p] = grid[s]
    return out
