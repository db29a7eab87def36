"""Expanding 1D domains and the indicator of the penalized region.

A :class:`MovingDomainFamily` describes intervals ``Omega_t = (left(t), right(t))``
inside a fixed ambient interval ``Omega = (x_lo, x_hi)``. The penalized region
is everything in the ambient cylinder that lies outside ``Omega_t``; its
indicator is 1 there (boundary points included) and 0 strictly inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "MovingDomainFamily",
    "MonotoneReport",
    "constant_family",
    "linear_family",
    "saturating_family",
    "family_from_descriptor",
    "indicator",
    "verify_monotone",
    "overlap",
    "outside_pieces",
]


class DomainError(ValueError):
    """Raised for coordinates or times outside the ambient cylinder."""


@dataclass(frozen=True)
class MovingDomainFamily:
    ambient: tuple[float, float]
    left: Callable[[float], float]
    right: Callable[[float], float]
    horizon: float
    # serializable description, e.g. {"kind": "linear", ...}; None for ad-hoc callables
    descriptor: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        lo, hi = self.ambient
        if not hi > lo:
            raise DomainError(f"ambient interval must be nonempty, got {self.ambient}")
        if not self.horizon > 0:
            raise DomainError(f"horizon must be positive, got {self.horizon}")

    def bounds(self, t: float) -> tuple[float, float]:
        self._check_time(t)
        return float(self.left(t)), float(self.right(t))

    def _check_time(self, t: float) -> None:
        if not (0.0 <= t <= self.horizon):
            raise DomainError(f"time {t} outside [0, {self.horizon}]")

    def check_nested(self, samples: Sequence[float]) -> None:
        """Raise unless every sampled ``Omega_t`` is a nonempty subset of the ambient interval."""
        lo, hi = self.ambient
        for t in samples:
            a, b = self.bounds(t)
            if not (lo <= a < b <= hi):
                raise DomainError(f"Omega_t=({a}, {b}) at t={t} is not a nonempty subinterval of {self.ambient}")


def _linear_side(x0: float, speed: float, cap: float, sign: int) -> Callable[[float], float]:
    if sign > 0:
        return lambda t: min(cap, x0 + speed * t)
    return lambda t: max(cap, x0 - speed * t)


def constant_family(ambient: tuple[float, float], left0: float, right0: float, horizon: float) -> MovingDomainFamily:
    """Cylindrical degenerate case, ``Omega_t = (left0, right0)`` for all t."""
    desc = {"kind": "constant", "x_lo": ambient[0], "x_hi": ambient[1], "left0": left0, "right0": right0}
    return MovingDomainFamily(ambient, lambda t: left0, lambda t: right0, horizon, desc)


def linear_family(
    ambient: tuple[float, float],
    left0: float,
    right0: float,
    horizon: float,
    left_speed: float = 0.0,
    right_speed: float = 0.0,
) -> MovingDomainFamily:
    """Endpoints move outward at constant speed and stop at the ambient boundary."""
    if left_speed < 0 or right_speed < 0:
        raise DomainError("speeds must be non-negative (the family has to expand)")
    desc = {
        "kind": "linear",
        "x_lo": ambient[0],
        "x_hi": ambient[1],
        "left0": left0,
        "right0": right0,
        "left_speed": left_speed,
        "right_speed": right_speed,
    }
    return MovingDomainFamily(
        ambient,
        _linear_side(left0, left_speed, ambient[0], -1),
        _linear_side(right0, right_speed, ambient[1], +1),
        horizon,
        desc,
    )


def saturating_family(
    ambient: tuple[float, float],
    left0: float,
    right0: float,
    horizon: float,
    right_inf: float,
    rate: float,
    left_inf: float | None = None,
) -> MovingDomainFamily:
    """``right(t) = R_inf - (R_inf - R_0) exp(-rate t)``; the left end does the same toward ``left_inf``."""
    if left_inf is None:
        left_inf = left0
    if rate < 0 or right_inf < right0 or left_inf > left0:
        raise DomainError("saturating family must expand: need rate >= 0, right_inf >= right0, left_inf <= left0")
    if right_inf > ambient[1] or left_inf < ambient[0]:
        raise DomainError("saturation limits must lie inside the ambient interval")
    desc = {
        "kind": "saturating",
        "x_lo": ambient[0],
        "x_hi": ambient[1],
        "left0": left0,
        "right0": right0,
        "right_inf": right_inf,
        "left_inf": left_inf,
        "rate": rate,
    }
    return MovingDomainFamily(
        ambient,
        lambda t: left_inf - (left_inf - left0) * math.exp(-rate * t),
        lambda t: right_inf - (right_inf - right0) * math.exp(-rate * t),
        horizon,
        desc,
    )


def family_from_descriptor(desc: dict, horizon: float) -> MovingDomainFamily:
    """Rebuild a family from the dict stored in ``MovingDomainFamily.descriptor``."""
    d = dict(desc)
    kind = d.pop("kind")
    ambient = (float(d.pop("x_lo")), float(d.pop("x_hi")))
    if kind == "constant":
        fam = constant_family(ambient, d["left0"], d["right0"], horizon)
    elif kind == "linear":
        fam = linear_family(ambient, d["left0"], d["right0"], horizon, d.get("left_speed", 0.0), d.get("right_speed", 0.0))
    elif kind == "saturating":
        fam = saturating_family(
            ambient, d["left0"], d["right0"], horizon, d["right_inf"], d["rate"], d.get("left_inf")
        )
    else:
        raise DomainError(f"unknown domain kind {kind!r}")
    fam.check_nested(np.linspace(0.0, horizon, 65))
    return fam


def indicator(x: float, t: float, fam: MovingDomainFamily) -> int:
    """1 on the penalized region (outside ``Omega_t`` or on its boundary), else 0."""
    lo, hi = fam.ambient
    if not (lo <= x <= hi):
        raise DomainError(f"x={x} outside ambient interval {fam.ambient}")
    a, b = fam.bounds(t)
    return 0 if a < x < b else 1


@dataclass(frozen=True)
class MonotoneReport:
    ok: bool
    violation: tuple[float, float] | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_monotone(fam: MovingDomainFamily, samples: Sequence[float]) -> MonotoneReport:
    """Check that ``Omega_t`` only grows across consecutive sample times.

    Returns the first offending pair ``(t1, t2)`` on failure.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("verify_monotone needs at least one sample time")
    if any(t2 < t1 for t1, t2 in zip(samples, samples[1:])):
        raise ValueError("sample times must be sorted ascending")
    prev_t = samples[0]
    prev = fam.bounds(prev_t)
    for t in samples[1:]:
        cur = fam.bounds(t)
        if cur[0] > prev[0] or cur[1] < prev[1]:
            return MonotoneReport(False, (prev_t, t))
        prev_t, prev = t, cur
    return MonotoneReport(True)


def outside_pieces(x0: np.ndarray, x1: np.ndarray, left: float, right: float):
    """Vectorized penalized portions of the cells ``[x0[i], x1[i]]``.

    Returns ``(a_lo, a_hi, b_lo, b_hi)``: each cell's part left of ``left`` is
    ``[a_lo, a_hi]`` and its part right of ``right`` is ``[b_lo, b_hi]``;
    empty pieces have zero length.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    a_hi = np.clip(left, x0, x1)
    b_lo = np.clip(right, x0, x1)
    # when the domain is empty inside the cell the two pieces would overlap
    b_lo = np.maximum(b_lo, a_hi)
    return x0, a_hi, b_lo, x1


def overlap(fam: MovingDomainFamily, t: float, cell: tuple[float, float]) -> list[tuple[float, float]]:
    """Exact sub-intervals of ``cell`` where the indicator equals 1 at time t."""
    c0, c1 = cell
    lo, hi = fam.ambient
    if not (lo <= c0 <= c1 <= hi):
        raise DomainError(f"cell {cell} not inside ambient interval {fam.ambient}")
    a, b = fam.bounds(t)
    a_lo, a_hi, b_lo, b_hi = (float(v) for v in outside_pieces(np.array(c0), np.array(c1), a, b))
    pieces = []
    if a_hi > a_lo:
        pieces.append((a_lo, a_hi))
    if b_hi > b_lo:
        pieces.append((b_lo, b_hi))
    if len(pieces) == 2 and pieces[0][1] == pieces[1][0]:
        pieces = [(pieces[0][0], pieces[1][1])]
    return pieces
