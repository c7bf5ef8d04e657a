"""Ego-motion value types and per-object prediction sets."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ContractError
from .geometry import BBox


def wrap_angle(phi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.remainder(phi, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True, slots=True)
class EgoPose:
    phi: float
    x: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.phi, self.x, self.z)):
            raise ContractError(f"ego pose must be finite: {self}")
        if not -math.pi < self.phi <= math.pi:
            raise ContractError(f"ego yaw must lie in (-pi, pi]: {self.phi}")

    def __sub__(self, other: "EgoPose") -> "EgoDelta":
        return EgoDelta(wrap_angle(self.phi - other.phi), self.x - other.x, self.z - other.z)


@dataclass(frozen=True, slots=True)
class EgoDelta:
    dphi: float
    dx: float
    dz: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.dphi, self.dx, self.dz)):
            raise ContractError(f"ego delta must be finite: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.dphi, self.dx, self.dz], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "EgoDelta":
        return cls(float(a[0]), float(a[1]), float(a[2]))


ZERO_DELTA = EgoDelta(0.0, 0.0, 0.0)


def pose_deltas(poses: Sequence[EgoPose]) -> list[EgoDelta]:
    """Frame-to-frame changes; the first frame has no predecessor and gets zero."""
    if not poses:
        return []
    return [ZERO_DELTA] + [b - a for a, b in zip(poses[:-1], poses[1:])]


def future_offsets(poses: Sequence[EgoPose], t: int, horizon: int) -> list[EgoDelta | None]:
    """``E_{t+j} - E_t`` for j = 1..horizon, None past the end of the sequence."""
    out = []
    for j in range(1, horizon + 1):
        out.append(poses[t + j] - poses[t] if t + j < len(poses) else None)
    return out


@dataclass(frozen=True)
class PredictionSet:
    """Boxes predicted at frame ``made_at`` for frames made_at+1 .. made_at+horizon."""

    made_at: int
    boxes: tuple[BBox, ...]

    def __post_init__(self):
        if len(self.boxes) == 0:
            raise ContractError("a prediction set holds at least one box")

    @property
    def horizon(self) -> int:
        return len(self.boxes)

    def for_frame(self, t: int) -> BBox | None:
        k = t - self.made_at - 1
        if 0 <= k < len(self.boxes):
            return self.boxes[k]
        return None

    def as_array(self) -> np.ndarray:
        return np.array([(b.cx, b.cy, b.w, b.h) for b in self.boxes], dtype=np.float64)
