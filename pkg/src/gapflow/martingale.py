"""Martingale classification of gap diffusions from the speed measure alone.

The measure representation is atoms plus two tail flags.  A set flag means
the non-atomic part of the measure reaches that infinity, so the support is
unbounded on that side.  Whether ``int (1 + |x|) nu(dx)`` over a flagged
tail diverges cannot be read off the flag; callers declare it through
``tail_moments``.  Atomic contributions are computed exactly: a finite atom
list has a finite integral unless one of the atoms is infinite.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any, Literal

from gapflow.errors import MissingDeclaration, ValidationError
from gapflow.measure import SpeedMeasure

TailMoment = Literal["finite", "infinite"]
_TAIL_TOKENS = ("finite", "infinite")


@dataclass(frozen=True, slots=True)
class MartingaleVerdict:
    local_martingale: bool
    true_martingale: bool
    reasons: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.true_martingale and not self.local_martingale:
            raise ValueError("a true martingale is always a local martingale")
        if not self.reasons:
            raise ValueError("a verdict needs at least one reason")

    @property
    def label(self) -> str:
        if self.true_martingale:
            return "martingale"
        if self.local_martingale:
            return "strict_local_martingale"
        return "not_local_martingale"

    def to_dict(self) -> dict[str, Any]:
        return {
            "local_martingale": self.local_martingale,
            "true_martingale": self.true_martingale,
            "verdict": self.label,
            "reasons": list(self.reasons),
        }


def _support_is_start(measure: SpeedMeasure, x0: float) -> bool:
    return not measure.has_tails and len(measure.atoms) >= 1 and all(y == x0 for y, _ in measure.atoms)


def classify_local(measure: SpeedMeasure, x0: float) -> tuple[bool, tuple[str, ...]]:
    """Is the gap diffusion started at ``x0`` a local martingale?

    Yes iff the support is ``{x0}``, or each side of ``x0`` (start included)
    holds an infinite atom or unbounded support.
    """
    x0 = float(x0)
    if _support_is_start(measure, x0):
        return True, ("support is {x0}: the process is constant",)
    if measure.is_empty():
        return False, ("measure is empty: no process is defined",)

    reasons = []
    inf_left = [y for y, b in measure.atoms if y <= x0 and math.isinf(b)]
    inf_right = [y for y, b in measure.atoms if y >= x0 and math.isinf(b)]
    if inf_left:
        left = True
        reasons.append(f"left holds: infinite atom at {max(inf_left)!r} <= x0")
    elif measure.left_tail_diverges:
        left = True
        reasons.append("left holds: support unbounded below")
    else:
        left = False
        reasons.append("left fails: no infinite atom at or below x0 and support bounded below")
    if inf_right:
        right = True
        reasons.append(f"right holds: infinite atom at {min(inf_right)!r} >= x0")
    elif measure.right_tail_diverges:
        right = True
        reasons.append("right holds: support unbounded above")
    else:
        right = False
        reasons.append("right fails: no infinite atom at or above x0 and support bounded above")
    return left and right, tuple(reasons)


def _parse_tail_moments(
    tail_moments: Sequence[TailMoment | None] | None,
) -> tuple[TailMoment | None, TailMoment | None]:
    if tail_moments is None:
        return None, None
    if len(tail_moments) != 2:
        raise ValidationError("tail_moments must be a (left, right) pair")
    out = []
    for side in tail_moments:
        if side is not None and side not in _TAIL_TOKENS:
            raise ValidationError(f"tail moment must be 'finite' or 'infinite', got {side!r}")
        out.append(side)
    return out[0], out[1]


def _side_integral(
    measure: SpeedMeasure, x0: float, side: str, declared: TailMoment | None
) -> tuple[bool | None, str]:
    """Divergence of ``int (1 + |x|) nu(dx)`` over one side; None if undeclared."""
    if side == "left":
        atoms = [y for y, b in measure.atoms if y <= x0 and math.isinf(b)]
        flag = measure.left_tail_diverges
    else:
        atoms = [y for y, b in measure.atoms if y >= x0 and math.isinf(b)]
        flag = measure.right_tail_diverges
    if atoms:
        return True, f"{side} integral infinite: infinite atom at {atoms[0]!r}"
    if not flag:
        return False, f"{side} integral finite: finitely many finite atoms"
    if declared is None:
        return None, f"{side} integral undeclared for the continuous tail"
    return declared == "infinite", f"{side} integral {declared} (declared for the continuous tail)"


def classify_true(
    measure: SpeedMeasure,
    x0: float,
    tail_moments: Sequence[TailMoment | None] | None = None,
) -> MartingaleVerdict:
    """Martingale / strict local martingale / not a local martingale.

    A local martingale is a true martingale iff its support is ``{x0}``, or
    ``x0`` carries an infinite atom, or ``int (1 + |x|) nu(dx)`` diverges on
    both sides of ``x0``.  ``tail_moments`` declares that divergence for
    flagged tails as ``(left, right)``, each ``"finite"`` or ``"infinite"``.
    """
    x0 = float(x0)
    left_decl, right_decl = _parse_tail_moments(tail_moments)
    local, reasons = classify_local(measure, x0)
    reasons = list(reasons)
    if not local:
        reasons.append("not a local martingale, hence not a martingale")
        return MartingaleVerdict(False, False, tuple(reasons))
    if _support_is_start(measure, x0):
        return MartingaleVerdict(True, True, tuple(reasons))
    if any(y == x0 and math.isinf(b) for y, b in measure.atoms):
        reasons.append("x0 carries an infinite atom: the process is constant")
        return MartingaleVerdict(True, True, tuple(reasons))

    left, why_left = _side_integral(measure, x0, "left", left_decl)
    right, why_right = _side_integral(measure, x0, "right", right_decl)
    reasons += [why_left, why_right]
    if left is False or right is False:
        reasons.append("a tail integral is finite: strict local martingale")
        return MartingaleVerdict(True, False, tuple(reasons))
    if left is None or right is None:
        missing = [s for s, v in (("left", left), ("right", right)) if v is None]
        raise MissingDeclaration(
            f"declare the tail moment for the continuous {' and '.join(missing)} tail"
        )
    reasons.append("both tail integrals infinite: martingale")
    return MartingaleVerdict(True, True, tuple(reasons))
