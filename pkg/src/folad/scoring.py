"""Per-frame anomaly scores computed from a tracker registry snapshot."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ContractError, FormatError
from .geometry import BBox, FrameDims, average_boxes, iou, mask_iou, rasterize
from .tracking import TrackerRegistry

METHODS = ("avg-iou", "min-iou", "mask", "avg-std", "max-std")
METHOD_LABELS = {
    "avg-iou": "FOL-AvgIoU",
    "min-iou": "FOL-MinIoU",
    "mask": "FOL-Mask",
    "avg-std": "FOL-AvgSTD",
    "max-std": "FOL-MaxSTD",
}
CSV_COLUMNS = ("frame", "raw", "normalized", "top_object_id")


@dataclass(frozen=True)
class FrameScore:
    frame: int
    raw: float
    per_object: Mapping[int, float] | None = None

    def __post_init__(self):
        if not math.isfinite(self.raw) or self.raw < 0:
            raise ContractError(f"frame {self.frame}: raw score must be finite and non-negative, got {self.raw}")

    @property
    def top_object(self) -> int | None:
        """Id of the object contributing most to the score, if tracked."""
        if not self.per_object:
            return None
        return max(sorted(self.per_object), key=lambda k: self.per_object[k])


@dataclass(frozen=True)
class ScoreSeries:
    scores: tuple[FrameScore, ...]
    normalized: tuple[float, ...] | None = None
    method: str = ""
    video_id: str = ""

    def __len__(self):
        return len(self.scores)

    @property
    def raw(self) -> np.ndarray:
        return np.array([s.raw for s in self.scores])

    @property
    def frames(self) -> list[int]:
        return [s.frame for s in self.scores]


def _check_mode(mode, allowed):
    if mode not in allowed:
        raise ContractError(f"mode must be one of {allowed}, got {mode!r}")


def score_bbox(registry: TrackerRegistry, observations: Mapping[int, BBox], frame: int,
               mode: str = "average") -> FrameScore:
    """1 - IoU between each tracked object's averaged predictions and its detection.

    Per-object values are stored as ``1 - IoU`` so the top object is the worst fit.
    """
    _check_mode(mode, ("average", "min"))
    per = {}
    for tid in sorted(observations):
        if tid not in registry:
            continue
        preds = registry[tid].predictions_for(frame)
        if preds:
            per[tid] = 1.0 - iou(average_boxes(preds), observations[tid])
    if not per:
        return FrameScore(frame, 0.0, {} if mode == "min" else None)
    vals = list(per.values())
    if mode == "average":
        return FrameScore(frame, max(0.0, math.fsum(vals) / len(vals)), per)
    return FrameScore(frame, max(vals), per)


def score_mask(registry: TrackerRegistry, observations: Iterable[BBox], dims: FrameDims, frame: int,
               raster: FrameDims | None = None) -> FrameScore:
    """1 - IoU of the rasterized 1-step predictions against the rasterized detections.

    ``raster`` renders both masks at a different resolution, boxes rescaled per axis.
    """
    predicted = []
    for t in registry.ordered():
        p = t.predictions
        if p is not None and p.made_at == frame - 1:
            predicted.append(p.boxes[0])
    observed = list(observations)
    if raster is not None and raster != dims:
        sx, sy = raster.width / dims.width, raster.height / dims.height

        def rescale(b):
            return BBox(b.cx * sx, b.cy * sy, b.w * sx, b.h * sy)

        predicted = [rescale(b) for b in predicted]
        observed = [rescale(b) for b in observed]
        dims = raster
    value = 1.0 - mask_iou(rasterize(predicted, dims), rasterize(observed, dims))
    return FrameScore(frame, max(0.0, value))


def prediction_spread(boxes: Sequence[BBox], scale: np.ndarray | None = None) -> float:
    """Largest population STD across the four box components."""
    arr = np.array([b.as_array() for b in boxes])
    if scale is not None:
        arr = arr / scale
    return float((arr - arr[0]).std(axis=0).max())


def score_pred_consistency(registry: TrackerRegistry, frame: int, mode: str = "average",
                           dims: FrameDims | None = None) -> FrameScore:
    """Disagreement among the stored predictions for ``frame``; needs no detections.

    Boxes are divided by ``dims`` first when given, otherwise pixels are used.
    """
    _check_mode(mode, ("average", "max"))
    scale = None if dims is None else dims.scale
    per = {}
    for t in registry.ordered():
        preds = t.predictions_for(frame)
        if len(preds) >= 2:
            per[t.track_id] = prediction_spread(preds, scale)
    if not per:
        return FrameScore(frame, 0.0, {} if mode == "max" else None)
    vals = list(per.values())
    if mode == "average":
        return FrameScore(frame, math.fsum(vals) / len(vals), per)
    return FrameScore(frame, max(vals), per)


def normalize(series: ScoreSeries) -> ScoreSeries:
    """Per-video min-max rescaling; a constant series maps to all zeros."""
    if not len(series):
        raise ContractError("cannot normalize an empty score series")
    raw = series.raw
    lo, hi = raw.min(), raw.max()
    if hi == lo:
        norm = np.zeros_like(raw)
    else:
        norm = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
    return replace(series, normalized=tuple(float(v) for v in norm))


def _fmt(x: float) -> str:
    return repr(float(x))


def series_to_csv(series: ScoreSeries) -> str:
    if series.normalized is None:
        series = normalize(series)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s, n in zip(series.scores, series.normalized):
        top = s.top_object
        w.writerow([s.frame, _fmt(s.raw), _fmt(n), "" if top is None else top])
    return buf.getvalue()


def series_from_csv(text: str, method: str = "", video_id: str = "") -> ScoreSeries:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise FormatError(f"score CSV must start with header {','.join(CSV_COLUMNS)}", line=1)
    scores, norm = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise FormatError(f"expected 4 columns, got {len(row)}", line=i)
        try:
            top = int(row[3]) if row[3] else None
            per = None if top is None else {top: 1.0}
            scores.append(FrameScore(int(row[0]), float(row[1]), per))
            norm.append(float(row[2]))
        except (ValueError, ContractError) as e:
            raise FormatError(str(e), line=i) from None
    return ScoreSeries(tuple(scores), tuple(norm), method, video_id)


@dataclass
class FrameScorer:
    """Evaluates the selected score variants on a registry snapshot."""

    dims: FrameDims
    methods: tuple[str, ...] = METHODS
    pixel_units: bool = False
    raster: FrameDims | None = None
    _rows: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ContractError(f"unknown scoring method(s): {bad}")
        self._rows = {m: [] for m in self.methods}

    def __call__(self, registry: TrackerRegistry, frame: int, observations: Mapping[int, BBox],
                 detections: Sequence[BBox]) -> dict[str, FrameScore]:
        std_dims = None if self.pixel_units else self.dims
        out = {}
        for m in self.methods:
            if m == "avg-iou":
                s = score_bbox(registry, observations, frame, "average")
            elif m == "min-iou":
                s = score_bbox(registry, observations, frame, "min")
            elif m == "mask":
                s = score_mask(registry, detections, self.dims, frame, self.raster)
            elif m == "avg-std":
                s = score_pred_consistency(registry, frame, "average", std_dims)
            else:
                s = score_pred_consistency(registry, frame, "max", std_dims)
            self._rows[m].append(s)
            out[m] = s
        return out

    def series(self, video_id: str = "") -> dict[str, ScoreSeries]:
        return {m: normalize(ScoreSeries(tuple(rows), None, m, video_id)) for m, rows in self._rows.items()}
