"""Gap diffusions: Brownian motion time-changed by an atomic speed measure.

The package computes the law of ``X_t`` for a given speed measure, inverts
that map for finite-support laws, simulates paths, classifies martingality
and calibrates single-maturity call curves.
"""

from __future__ import annotations

__version__ = "0.1.0"

from gapflow.approx import SampledLaw, approx_invert, discretize, wasserstein1
from gapflow.chain import (
    GapChain,
    LawAtTime,
    build_chain,
    forward_G,
    forward_measure,
    law_at,
)
from gapflow.finance import CallCurve, calibrate_calls, implied_law, reprice
from gapflow.invert import CalibrationResult, invert_discrete, jacobian_fd, solve_newton
from gapflow.martingale import MartingaleVerdict, classify_local, classify_true
from gapflow.measure import (
    SpeedMeasure,
    SupportClassification,
    TargetLaw,
    classify_support,
    initial_split,
    validate_measure,
)
from gapflow.simulate import (
    PathBundle,
    estimate_EA1,
    simulate_jump,
    simulate_timechange,
)

__all__ = [
    "CallCurve",
    "CalibrationResult",
    "GapChain",
    "LawAtTime",
    "MartingaleVerdict",
    "PathBundle",
    "SampledLaw",
    "SpeedMeasure",
    "SupportClassification",
    "TargetLaw",
    "approx_invert",
    "build_chain",
    "calibrate_calls",
    "classify_local",
    "classify_support",
    "classify_true",
    "discretize",
    "estimate_EA1",
    "forward_G",
    "forward_measure",
    "implied_law",
    "initial_split",
    "invert_discrete",
    "jacobian_fd",
    "law_at",
    "reprice",
    "simulate_jump",
    "simulate_timechange",
    "solve_newton",
    "validate_measure",
    "wasserstein1",
]
