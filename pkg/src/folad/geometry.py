"""Box arithmetic, IoU, rasterized masks and component statistics.

Boxes are center/size in pixels. Pixel ``(u, v)`` of a mask is the unit
square whose center sits at ``(u + 0.5, v + 0.5)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .exceptions import ContractError


@dataclass(frozen=True, slots=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (math.isfinite(self.cx) and math.isfinite(self.cy)
                and math.isfinite(self.w) and math.isfinite(self.h)):
            raise ContractError(f"box fields must be finite: {self}")
        if self.w <= 0 or self.h <= 0:
            raise ContractError(f"box width and height must be positive: {self}")

    @classmethod
    def from_array(cls, a) -> "BBox":
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def from_xyxy(cls, x1, y1, x2, y2) -> "BBox":
        return cls((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def xyxy(self) -> tuple[float, float, float, float]:
        hw, hh = self.w / 2.0, self.h / 2.0
        return self.cx - hw, self.cy - hh, self.cx + hw, self.cy + hh

    @property
    def area(self) -> float:
        return self.w * self.h

    def shifted(self, dx=0.0, dy=0.0) -> "BBox":
        return BBox(self.cx + dx, self.cy + dy, self.w, self.h)

    def scaled(self, s: float) -> "BBox":
        return BBox(self.cx * s, self.cy * s, self.w * s, self.h * s)


@dataclass(frozen=True, slots=True)
class FrameDims:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ContractError(f"frame dims must be integers: {self}")
        if self.width < 1 or self.height < 1:
            raise ContractError(f"frame dims must be positive: {self}")

    @property
    def scale(self) -> np.ndarray:
        """Per-component divisor mapping (cx, cy, w, h) to unit coordinates."""
        return np.array([self.width, self.height, self.width, self.height], dtype=np.float64)


@dataclass(frozen=True)
class BinaryMask:
    dims: FrameDims
    bits: np.ndarray  # (height, width) bool, row-major

    def __post_init__(self):
        if self.bits.shape != (self.dims.height, self.dims.width):
            raise ContractError(
                f"mask bits shape {self.bits.shape} does not match {self.dims}")

    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.bits, other.bits)


def iou(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.xyxy()
    bx1, by1, bx2, by2 = b.xyxy()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    # areas from the same corner arithmetic, so identical boxes give exactly 1
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return min(1.0, max(0.0, inter / union))


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between (n, 4) and (m, 4) arrays of cx, cy, w, h."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    a1, a2 = a[:, :2] - a[:, 2:] / 2, a[:, :2] + a[:, 2:] / 2
    b1, b2 = b[:, :2] - b[:, 2:] / 2, b[:, :2] + b[:, 2:] / 2
    lo = np.maximum(a1[:, None, :], b1[None, :, :])
    hi = np.minimum(a2[:, None, :], b2[None, :, :])
    wh = np.clip(hi - lo, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = (a2[:, 0] - a1[:, 0]) * (a2[:, 1] - a1[:, 1])
    area_b = (b2[:, 0] - b1[:, 0]) * (b2[:, 1] - b1[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def average_boxes(boxes: Sequence[BBox]) -> BBox:
    if len(boxes) == 0:
        raise ContractError("average_boxes needs at least one box")
    n = len(boxes)
    # mean offset from the first box, so identical boxes average to themselves exactly
    ref = boxes[0]
    return BBox(
        ref.cx + math.fsum(b.cx - ref.cx for b in boxes) / n,
        ref.cy + math.fsum(b.cy - ref.cy for b in boxes) / n,
        ref.w + math.fsum(b.w - ref.w for b in boxes) / n,
        ref.h + math.fsum(b.h - ref.h for b in boxes) / n,
    )


def _pixel_span(lo: float, hi: float, size: int) -> tuple[int, int]:
    # pixel k is covered iff lo <= k + 0.5 <= hi
    first = max(0, math.ceil(lo - 0.5))
    last = min(size - 1, math.floor(hi - 0.5))
    return first, last + 1


def rasterize(boxes: Iterable[BBox], dims: FrameDims) -> BinaryMask:
    bits = np.zeros((dims.height, dims.width), dtype=bool)
    for b in boxes:
        x1, y1, x2, y2 = b.xyxy()
        u0, u1 = _pixel_span(x1, x2, dims.width)
        v0, v1 = _pixel_span(y1, y2, dims.height)
        if u1 > u0 and v1 > v0:
            bits[v0:v1, u0:u1] = True
    return BinaryMask(dims, bits)


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    """IoU of two masks; two empty masks agree perfectly (1.0)."""
    if a.dims != b.dims:
        raise ContractError(f"mask dims differ: {a.dims} vs {b.dims}")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return np.count_nonzero(a.bits & b.bits) / union


def component_std(boxes: Sequence[BBox]) -> tuple[float, float, float, float]:
    """Population standard deviation of cx, cy, w and h."""
    if len(boxes) < 2:
        raise ContractError("component_std needs at least two boxes")
    arr = np.array([(b.cx, b.cy, b.w, b.h) for b in boxes], dtype=np.float64)
    # centring on the first box first keeps identical boxes at exactly zero
    return tuple(float(s) for s in (arr - arr[0]).std(axis=0))
