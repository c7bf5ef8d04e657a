"""Localization error metrics and frame-level ROC/AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ContractError
from .geometry import BBox, iou
from .motion import PredictionSet
from .video import AnomalyAnnotation


@dataclass(frozen=True)
class DisplacementResult:
    fde: float
    ade: float
    fiou: float
    n_sets: int
    n_skipped: int = 0


def displacement_metrics(predictions: Iterable[PredictionSet], truth: Mapping[int, BBox]) -> DisplacementResult:
    """FDE/ADE in pixels and final-step IoU; sets lacking any true box are skipped."""
    final, every, fious = [], [], []
    skipped = 0
    for ps in predictions:
        frames = [ps.made_at + j + 1 for j in range(ps.horizon)]
        if any(f not in truth for f in frames):
            skipped += 1
            continue
        d = [math.hypot(b.cx - truth[f].cx, b.cy - truth[f].cy) for b, f in zip(ps.boxes, frames)]
        every.extend(d)
        final.append(d[-1])
        fious.append(iou(ps.boxes[-1], truth[frames[-1]]))
    if not final:
        return DisplacementResult(math.nan, math.nan, math.nan, 0, skipped)
    return DisplacementResult(math.fsum(final) / len(final), math.fsum(every) / len(every),
                              math.fsum(fious) / len(fious), len(final), skipped)


def merge_displacement(results: Sequence[DisplacementResult], horizon: int) -> DisplacementResult:
    """Pool per-track results, weighting each by its number of prediction sets."""
    used = [r for r in results if r.n_sets]
    n = sum(r.n_sets for r in used)
    skipped = sum(r.n_skipped for r in results)
    if not n:
        return DisplacementResult(math.nan, math.nan, math.nan, 0, skipped)
    fde = math.fsum(r.fde * r.n_sets for r in used) / n
    ade = math.fsum(r.ade * r.n_sets for r in used) / n
    fiou = math.fsum(r.fiou * r.n_sets for r in used) / n
    return DisplacementResult(fde, ade, fiou, n, skipped)


def frame_labels(n_frames: int, annotations: Iterable[AnomalyAnnotation | None]) -> np.ndarray:
    labels = np.zeros(n_frames, dtype=np.int8)
    for a in annotations:
        if a is None:
            continue
        if a.end >= n_frames:
            raise ContractError(f"annotation [{a.start}, {a.end}] exceeds video length {n_frames}")
        labels[a.start:a.end + 1] = 1
    return labels


@dataclass(frozen=True)
class RocResult:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float


def roc_curve(scores, labels) -> RocResult:
    """Sweep every distinct score as a threshold, highest first.

    Tied scores move together, so ties contribute a diagonal segment.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ContractError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise ContractError("scores must be finite")
    if not np.all((y == 0) | (y == 1)):
        raise ContractError("labels must be 0 or 1")
    y = y.astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC needs at least one positive and one negative frame")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    # integer trapezoid sums keep the area exact up to one final division
    area = np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])) + fp[0] * tp[0]
    auc = float(area) / (2.0 * n_pos * n_neg)
    return RocResult(thresholds, fpr, tpr, auc)


def frame_auc(scores, annotations: Sequence[AnomalyAnnotation | None]) -> RocResult:
    """AUC of one video's per-frame scores against its annotated windows.

    ``scores`` is a ScoreSeries or a plain array of per-frame values.
    """
    values = _values(scores)
    return roc_curve(values, frame_labels(len(values), annotations))


def _values(scores) -> np.ndarray:
    norm = getattr(scores, "normalized", None)
    if norm is not None:
        return np.asarray(norm, dtype=np.float64)
    raw = getattr(scores, "raw", None)
    if raw is not None:
        return np.asarray(raw, dtype=np.float64)
    return np.asarray(scores, dtype=np.float64)


def corpus_auc(series: Sequence, annotations: Sequence[AnomalyAnnotation | None]) -> RocResult:
    """Single AUC over all videos' frames concatenated."""
    if len(series) != len(annotations):
        raise ContractError(f"{len(series)} score series but {len(annotations)} annotations")
    values, labels = [], []
    for s, a in zip(series, annotations):
        v = _values(s)
        values.append(v)
        labels.append(frame_labels(len(v), [a]))
    return roc_curve(np.concatenate(values), np.concatenate(labels))


def per_video_auc(series: Sequence, annotations: Sequence[AnomalyAnnotation | None]) -> list[float]:
    """AUC per video; NaN where a video has only one label class."""
    out = []
    for s, a in zip(series, annotations):
        v = _values(s)
        y = frame_labels(len(v), [a])
        out.append(roc_curve(v, y).auc if 0 < y.sum() < len(y) else math.nan)
    return out
