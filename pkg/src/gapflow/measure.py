"""Speed measures, finite-support target laws and support classification.

A speed measure is stored as a finite list of atoms ``(position, mass)`` with
``mass`` in ``(0, inf]`` plus two flags marking a non-atomic part that extends
to -inf / +inf.  Infinite mass is the float ``math.inf`` in memory and the
token ``"inf"`` on the wire.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from gapflow.errors import (
    EmptySupport,
    InvalidLaw,
    InvalidPosition,
    NegativeMass,
    ParseError,
)

INF_TOKEN = "inf"
PROB_SUM_TOL = 1e-12


def _parse_real(value: Any, what: str) -> float:
    if isinstance(value, bool):
        raise ParseError(f"{what}: expected a number, got a boolean")
    if isinstance(value, str):
        token = value.strip().lower()
        if token in (INF_TOKEN, "+inf", "infinity", "+infinity"):
            return math.inf
        if token in ("-inf", "-infinity"):
            return -math.inf
        try:
            return float(token)
        except ValueError as exc:
            raise ParseError(f"{what}: cannot parse {value!r}") from exc
    if isinstance(value, (int, float, np.floating, np.integer)):
        return float(value)
    raise ParseError(f"{what}: expected a number, got {type(value).__name__}")


def encode_mass(mass: float) -> float | str:
    return INF_TOKEN if math.isinf(mass) else mass


@dataclass(frozen=True, slots=True)
class SpeedMeasure:
    """Finite atomic speed measure with optional non-atomic tail flags.

    Build instances with :func:`validate_measure`; the constructor only checks
    the invariants and never repairs input.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    left_tail_diverges: bool = False
    right_tail_diverges: bool = False

    def __post_init__(self) -> None:
        prev = -math.inf
        for y, b in self.atoms:
            if not math.isfinite(y):
                raise InvalidPosition(f"atom position must be finite, got {y!r}")
            if y <= prev:
                raise InvalidPosition("atom positions must be strictly increasing")
            if math.isnan(b) or b <= 0.0:
                raise NegativeMass(f"atom mass must be positive, got {b!r} at {y!r}")
            prev = y

    @property
    def positions(self) -> np.ndarray:
        return np.array([y for y, _ in self.atoms], dtype=float)

    @property
    def masses(self) -> np.ndarray:
        return np.array([b for _, b in self.atoms], dtype=float)

    @property
    def has_tails(self) -> bool:
        return self.left_tail_diverges or self.right_tail_diverges

    @property
    def infinity_set(self) -> tuple[float, ...]:
        return tuple(y for y, b in self.atoms if math.isinf(b))

    def __len__(self) -> int:
        return len(self.atoms)

    def is_empty(self) -> bool:
        return not self.atoms and not self.has_tails

    def scaled(self, factor: float) -> SpeedMeasure:
        """Multiply every mass by ``factor > 0`` (infinite masses stay infinite)."""
        if not factor > 0.0 or math.isinf(factor):
            raise ValueError("scale factor must be positive and finite")
        return SpeedMeasure(
            tuple((y, b * factor) for y, b in self.atoms),
            self.left_tail_diverges,
            self.right_tail_diverges,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "atoms": [[y, encode_mass(b)] for y, b in self.atoms],
            "left_tail_diverges": self.left_tail_diverges,
            "right_tail_diverges": self.right_tail_diverges,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SpeedMeasure:
        if not isinstance(data, Mapping) or "atoms" not in data:
            raise ParseError("measure JSON must be an object with an 'atoms' list")
        raw = data["atoms"]
        if not isinstance(raw, list):
            raise ParseError("'atoms' must be a list of [position, mass] pairs")
        atoms = []
        for k, pair in enumerate(raw):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ParseError(f"atom {k}: expected [position, mass]")
            atoms.append(
                (_parse_real(pair[0], f"atom {k} position"), _parse_real(pair[1], f"atom {k} mass"))
            )
        flags = []
        for key in ("left_tail_diverges", "right_tail_diverges"):
            val = data.get(key, False)
            if not isinstance(val, bool):
                raise ParseError(f"'{key}' must be a boolean")
            flags.append(val)
        return validate_measure(atoms, left_tail_diverges=flags[0], right_tail_diverges=flags[1])


def validate_measure(
    atoms: Iterable[tuple[float, float]],
    left_tail_diverges: bool = False,
    right_tail_diverges: bool = False,
) -> SpeedMeasure:
    """Sort and merge raw atoms into a :class:`SpeedMeasure`.

    Atoms sharing a position are summed (an infinite summand makes the sum
    infinite) and zero-mass atoms are dropped.
    """
    merged: dict[float, float] = {}
    for y, b in atoms:
        y = float(y)
        b = float(b)
        if math.isnan(y) or math.isinf(y):
            raise InvalidPosition(f"atom position must be finite, got {y!r}")
        if math.isnan(b):
            raise NegativeMass(f"atom mass is NaN at position {y!r}")
        if b < 0.0:
            raise NegativeMass(f"atom mass {b!r} at position {y!r} is negative")
        merged[y] = merged.get(y, 0.0) + b
    clean = tuple((y, merged[y]) for y in sorted(merged) if merged[y] > 0.0)
    return SpeedMeasure(clean, bool(left_tail_diverges), bool(right_tail_diverges))


@dataclass(frozen=True, slots=True)
class TargetLaw:
    """Probability law with finitely many atoms."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise InvalidLaw("a law needs at least one point")
        prev = -math.inf
        for y, p in self.points:
            if not math.isfinite(y):
                raise InvalidPosition(f"law positions must be finite, got {y!r}")
            if y <= prev:
                raise InvalidPosition("law positions must be strictly increasing")
            if not (0.0 <= p <= 1.0):
                raise InvalidLaw(f"probability {p!r} at {y!r} is outside [0, 1]")
            prev = y
        total = math.fsum(p for _, p in self.points)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise InvalidLaw(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_arrays(
        cls, positions: Sequence[float], probabilities: Sequence[float], *, drop_zeros: bool = False
    ) -> TargetLaw:
        pts = [(float(y), float(p)) for y, p in zip(positions, probabilities, strict=True)]
        if drop_zeros:
            pts = [(y, p) for y, p in pts if p > 0.0]
        return cls(tuple(pts))

    @property
    def positions(self) -> np.ndarray:
        return np.array([y for y, _ in self.points], dtype=float)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.points], dtype=float)

    @property
    def mean(self) -> float:
        return math.fsum(y * p for y, p in self.points)

    @property
    def variance(self) -> float:
        m = self.mean
        return math.fsum(p * (y - m) ** 2 for y, p in self.points)

    def support(self) -> tuple[float, ...]:
        return tuple(y for y, p in self.points if p > 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {"points": [[y, p] for y, p in self.points]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TargetLaw:
        if not isinstance(data, Mapping) or "points" not in data:
            raise ParseError("law JSON must be an object with a 'points' list")
        raw = data["points"]
        if not isinstance(raw, list) or not raw:
            raise ParseError("'points' must be a non-empty list of [position, probability]")
        pts = []
        for k, pair in enumerate(raw):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ParseError(f"point {k}: expected [position, probability]")
            pts.append(
                (_parse_real(pair[0], f"point {k} position"), _parse_real(pair[1], f"point {k} probability"))
            )
        pts.sort(key=lambda yp: yp[0])
        return cls(tuple(pts))


@dataclass(frozen=True, slots=True)
class SupportClassification:
    """Nearest support and infinity-set points around the start point."""

    x0: float
    xs_minus: float
    xs_plus: float
    xinf_minus: float
    xinf_plus: float
    x0_in_supp: bool
    x0_in_suppinf: bool

    def __post_init__(self) -> None:
        chain = (self.xinf_minus, self.xs_minus, self.x0, self.xs_plus, self.xinf_plus)
        if any(a > b for a, b in zip(chain, chain[1:])):
            raise ValueError(f"classification is not ordered: {chain}")

    @property
    def support_empty(self) -> bool:
        return math.isinf(self.xs_minus) and math.isinf(self.xs_plus)


def classify_support(measure: SpeedMeasure, x0: float) -> SupportClassification:
    """Locate the closest points of supp and supp-infinity on each side of ``x0``.

    Only the atoms are consulted: the tail flags describe behaviour at
    +-infinity, which never produces a finite nearest point.
    """
    x0 = float(x0)
    below = [y for y, _ in measure.atoms if y <= x0]
    above = [y for y, _ in measure.atoms if y >= x0]
    inf_below = [y for y, b in measure.atoms if y <= x0 and math.isinf(b)]
    inf_above = [y for y, b in measure.atoms if y >= x0 and math.isinf(b)]
    return SupportClassification(
        x0=x0,
        xs_minus=max(below) if below else -math.inf,
        xs_plus=min(above) if above else math.inf,
        xinf_minus=max(inf_below) if inf_below else -math.inf,
        xinf_plus=min(inf_above) if inf_above else math.inf,
        x0_in_supp=any(y == x0 for y, _ in measure.atoms),
        x0_in_suppinf=any(y == x0 and math.isinf(b) for y, b in measure.atoms),
    )


def initial_split(cls: SupportClassification, x0: float | None = None) -> TargetLaw:
    """Law of the process at time 0 (after the initial jump onto the support)."""
    x0 = cls.x0 if x0 is None else float(x0)
    lo, hi = cls.xs_minus, cls.xs_plus
    if cls.support_empty:
        raise EmptySupport("the speed measure has no atoms near which the process can live")
    if cls.x0_in_supp:
        return TargetLaw(((x0, 1.0),))
    if math.isinf(lo):
        return TargetLaw(((hi, 1.0),))
    if math.isinf(hi):
        return TargetLaw(((lo, 1.0),))
    w_lo = (hi - x0) / (hi - lo)
    w_hi = (x0 - lo) / (hi - lo)
    return TargetLaw(((lo, w_lo), (hi, w_hi)))
