"""Dense motion fields and RoI pooling of per-object motion features.

A flow field is a lattice of (du, dv) displacements, one per pixel, in
pixels per frame. Sampling treats lattice index ``(u, v)`` as the continuous
coordinate ``(u, v)`` and interpolates bilinearly between lattice points,
clamping coordinates to the frame border.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractError
from .geometry import BBox, FrameDims

POOL_SIZE = 5
FEATURE_SIZE = POOL_SIZE * POOL_SIZE * 2


class FlowField:
    """Base class. Subclasses implement ``at`` for integer lattice points."""

    dims: FrameDims

    def at(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dense(self) -> "DenseFlow":
        vv, uu = np.mgrid[0:self.dims.height, 0:self.dims.width]
        vals = self.at(uu.ravel(), vv.ravel())
        return DenseFlow(self.dims, vals.reshape(self.dims.height, self.dims.width, 2))

    def sample(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Bilinear samples at continuous coordinates, shape (n, 2)."""
        w, h = self.dims.width, self.dims.height
        x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1)
        y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1)
        x0 = np.floor(x).astype(np.int64)
        y0 = np.floor(y).astype(np.int64)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = (x - x0)[:, None]
        fy = (y - y0)[:, None]
        n = len(x)
        vals = self.at(np.concatenate([x0, x1, x0, x1]), np.concatenate([y0, y0, y1, y1]))
        v00, v10, v01, v11 = vals[:n], vals[n:2 * n], vals[2 * n:3 * n], vals[3 * n:]
        top = v00 * (1.0 - fx) + v10 * fx
        bottom = v01 * (1.0 - fx) + v11 * fx
        return top * (1.0 - fy) + bottom * fy


@dataclass(frozen=True, eq=False)
class DenseFlow(FlowField):
    dims: FrameDims
    grid: np.ndarray  # (height, width, 2)

    def __post_init__(self):
        if self.grid.shape != (self.dims.height, self.dims.width, 2):
            raise ContractError(f"flow grid shape {self.grid.shape} does not match {self.dims}")
        if not np.all(np.isfinite(self.grid)):
            raise ContractError("flow grid must be finite")

    def at(self, u, v):
        return self.grid[v, u]

    def __eq__(self, other):
        return (isinstance(other, DenseFlow) and self.dims == other.dims
                and np.array_equal(self.grid, other.grid))


@dataclass(frozen=True, eq=False)
class GridFlow(FlowField):
    """Coarse flow grid, bilinearly upsampled to the frame lattice on access."""

    dims: FrameDims
    coarse: np.ndarray  # (rows, cols, 2)

    def __post_init__(self):
        if self.coarse.ndim != 3 or self.coarse.shape[2] != 2:
            raise ContractError(f"coarse flow must be (rows, cols, 2), got {self.coarse.shape}")

    def at(self, u, v):
        rows, cols = self.coarse.shape[:2]
        gx = np.clip((np.asarray(u) + 0.5) * cols / self.dims.width - 0.5, 0.0, cols - 1)
        gy = np.clip((np.asarray(v) + 0.5) * rows / self.dims.height - 0.5, 0.0, rows - 1)
        x0 = np.floor(gx).astype(np.int64)
        y0 = np.floor(gy).astype(np.int64)
        x1 = np.minimum(x0 + 1, cols - 1)
        y1 = np.minimum(y0 + 1, rows - 1)
        fx = (gx - x0)[:, None]
        fy = (gy - y0)[:, None]
        c = self.coarse
        top = c[y0, x0] * (1.0 - fx) + c[y0, x1] * fx
        bottom = c[y1, x0] * (1.0 - fx) + c[y1, x1] * fx
        return top * (1.0 - fy) + bottom * fy

    @classmethod
    def from_field(cls, flow: FlowField, cols=64, rows=36) -> "GridFlow":
        # coarse cell centers in frame coordinates
        xs = (np.arange(cols) + 0.5) * flow.dims.width / cols - 0.5
        ys = (np.arange(rows) + 0.5) * flow.dims.height / rows - 0.5
        yy, xx = np.meshgrid(ys, xs, indexing="ij")
        vals = flow.sample(xx.ravel(), yy.ravel())
        return cls(flow.dims, vals.reshape(rows, cols, 2))

    def __eq__(self, other):
        return (isinstance(other, GridFlow) and self.dims == other.dims
                and np.array_equal(self.coarse, other.coarse))


@dataclass(frozen=True)
class BackgroundMotion:
    """Affine camera-induced flow: ``scale * (p - origin) + shift``."""

    scale: float = 0.0
    origin_u: float = 0.0
    origin_v: float = 0.0
    shift_u: float = 0.0
    shift_v: float = 0.0

    def flow_at(self, u, v) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        return np.stack([self.scale * (u - self.origin_u) + self.shift_u,
                         self.scale * (v - self.origin_v) + self.shift_v], axis=-1)


@dataclass(frozen=True)
class FlowLayer:
    box: BBox
    du: float
    dv: float


@dataclass(frozen=True)
class LayeredFlow(FlowField):
    """Piecewise flow: background motion overdrawn by rigid object layers.

    Layers are ordered back to front; a lattice point takes the flow of the
    front-most layer whose closed box contains it.
    """

    dims: FrameDims
    background: BackgroundMotion = field(default_factory=BackgroundMotion)
    layers: tuple[FlowLayer, ...] = ()

    def at(self, u, v):
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        out = self.background.flow_at(u, v)
        for layer in self.layers:
            x1, y1, x2, y2 = layer.box.xyxy()
            inside = (u >= x1) & (u <= x2) & (v >= y1) & (v <= y2)
            if inside.any():
                out[inside] = (layer.du, layer.dv)
        return out


def zero_flow(dims: FrameDims) -> LayeredFlow:
    return LayeredFlow(dims)


def bin_centers(box: BBox, size: int = POOL_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Row-major (x, y) coordinates of the size x size bin centers of a box."""
    x1, y1, _, _ = box.xyxy()
    offs = (np.arange(size) + 0.5) / size
    xs = x1 + offs * box.w
    ys = y1 + offs * box.h
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return xx.ravel(), yy.ravel()


def roi_pool(flow: FlowField, box: BBox) -> np.ndarray:
    """Pool a 5x5 grid of bilinear flow samples inside ``box``.

    Returns 50 floats laid out as (row, col, channel), channel fastest.
    """
    xs, ys = bin_centers(box)
    return flow.sample(xs, ys).reshape(FEATURE_SIZE)
