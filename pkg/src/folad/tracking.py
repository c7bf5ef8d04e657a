"""Tracker registry with missed-object re-prediction, and greedy association.

Each frame, observed trackers take their detection as the current box and
missed trackers take the first box of their previous prediction instead;
both then run the localizer on a motion feature pooled at that box.
Trackers missed for more than ``max_age`` consecutive frames are dropped.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .exceptions import ContractError
from .features import FEATURE_SIZE, FlowField, roi_pool
from .geometry import BBox, iou_matrix
from .model.network import (
    HiddenState,
    ModelParams,
    decode,
    encode_step,
    ego_to_internal,
    fuse,
    normalize_boxes,
    normalize_features,
    offsets_to_boxes,
)
from .motion import EgoDelta, PredictionSet


@dataclass
class Tracker:
    track_id: int
    box: BBox
    hidden: HiddenState
    horizon: int
    predictions: PredictionSet | None = None
    age: int = 0
    history: deque = field(default=None)

    def __post_init__(self):
        if self.history is None:
            self.history = deque(maxlen=self.horizon)

    def predictions_for(self, frame: int) -> list[BBox]:
        """Boxes predicted for ``frame`` by the stored prediction sets, newest first."""
        out = []
        for ps in self.history:
            b = ps.for_frame(frame)
            if b is not None:
                out.append(b)
        return out

    def reference_box(self, frame: int) -> BBox:
        """Best guess of the box at ``frame``: the 1-step prediction if fresh."""
        if self.predictions is not None:
            b = self.predictions.for_frame(frame)
            if b is not None and self.predictions.made_at == frame - 1:
                return b
        return self.box


class TrackerRegistry:
    def __init__(self, horizon: int = 5, max_age: int = 5):
        if max_age < 1:
            raise ContractError("max_age must be a positive integer")
        self.horizon = horizon
        self.max_age = max_age
        self.trackers: dict[int, Tracker] = {}
        self.frame = -1
        self._next_id = 1

    def __len__(self):
        return len(self.trackers)

    def __contains__(self, track_id):
        return track_id in self.trackers

    def __getitem__(self, track_id) -> Tracker:
        return self.trackers[track_id]

    def __iter__(self):
        return iter(self.ordered())

    def ordered(self) -> list[Tracker]:
        return [self.trackers[k] for k in sorted(self.trackers)]

    def new_id(self) -> int:
        while self._next_id in self.trackers:
            self._next_id += 1
        tid = self._next_id
        self._next_id += 1
        return tid

    def reserve(self, track_id: int):
        self._next_id = max(self._next_id, track_id + 1)


@dataclass
class Association:
    matches: list[tuple[int, int]]      # (track id, detection index)
    unmatched_detections: list[int]
    unmatched_trackers: list[int]


def associate(detections: Sequence[BBox], registry: TrackerRegistry, iou_threshold: float = 0.3,
              frame: int | None = None) -> Association:
    """Greedy matching by descending IoU against each tracker's expected box.

    Ties go to the lower tracker id, then the lower detection index.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ContractError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    frame = registry.frame + 1 if frame is None else frame
    trackers = registry.ordered()
    if not detections or not trackers:
        return Association([], list(range(len(detections))), [t.track_id for t in trackers])
    ref = np.array([t.reference_box(frame).as_array() for t in trackers])
    det = np.array([d.as_array() for d in detections])
    m = iou_matrix(ref, det)
    ti, di = np.nonzero(m >= iou_threshold)
    pairs = sorted(zip(-m[ti, di], [trackers[i].track_id for i in ti], di.tolist(), ti.tolist()))
    used_t, used_d = set(), set()
    matches = []
    for _, tid, d, _ in pairs:
        if tid in used_t or d in used_d:
            continue
        used_t.add(tid)
        used_d.add(d)
        matches.append((tid, d))
    matches.sort()
    return Association(
        matches,
        [d for d in range(len(detections)) if d not in used_d],
        [t.track_id for t in trackers if t.track_id not in used_t],
    )


def run_localizer(params: ModelParams, trackers: Sequence[Tracker], boxes: Sequence[BBox],
                  feats: np.ndarray, ego_future: Sequence[EgoDelta], frame: int) -> None:
    """Encode one step for each tracker and store its new prediction set."""
    if not trackers:
        return
    dims = params.config.dims
    box_arr = np.array([b.as_array() for b in boxes])
    h_loc = np.stack([t.hidden.h_loc for t in trackers])
    h_mot = np.stack([t.hidden.h_mot for t in trackers])
    h_loc, h_mot = encode_step(params, h_loc, h_mot, normalize_boxes(box_arr, dims),
                               normalize_features(feats, dims))
    s, _ = fuse(params, h_loc, h_mot)
    ego = np.broadcast_to(ego_to_internal(ego_future)[None], (len(trackers), len(ego_future), 3))
    pred = offsets_to_boxes(box_arr, decode(params, s, ego), dims)
    for i, t in enumerate(trackers):
        t.hidden = HiddenState(h_loc[i], h_mot[i])
        t.box = boxes[i]
        ps = PredictionSet(frame, tuple(BBox.from_array(b) for b in pred[i]))
        t.predictions = ps
        t.history.appendleft(ps)


def fol_track_step(registry: TrackerRegistry, observed: Mapping[int, tuple[BBox, np.ndarray]],
                   flow: FlowField, ego_future: Sequence[EgoDelta], params: ModelParams,
                   frame: int | None = None) -> TrackerRegistry:
    """Advance every tracker by one frame. Mutates and returns ``registry``."""
    frame = registry.frame + 1 if frame is None else frame
    if len(ego_future) != registry.horizon:
        raise ContractError(f"expected {registry.horizon} future ego deltas, got {len(ego_future)}")
    hidden_size = params.config.hidden_size
    batch, boxes, feats = [], [], []
    for tid in sorted(observed):
        box, feat = observed[tid]
        tracker = registry.trackers.get(tid)
        if tracker is None:
            tracker = Tracker(tid, box, HiddenState.zeros(hidden_size), registry.horizon)
            registry.trackers[tid] = tracker
            registry.reserve(tid)
        tracker.age = 0
        batch.append(tracker)
        boxes.append(box)
        feats.append(np.asarray(feat, dtype=np.float64))
    for tid in sorted(set(registry.trackers) - set(observed)):
        tracker = registry.trackers[tid]
        tracker.age += 1
        if tracker.age > registry.max_age or tracker.predictions is None:
            del registry.trackers[tid]
            continue
        box = tracker.predictions.boxes[0]
        batch.append(tracker)
        boxes.append(box)
        feats.append(roi_pool(flow, box))
    run_localizer(params, batch, boxes, np.array(feats).reshape(len(batch), FEATURE_SIZE), ego_future, frame)
    registry.frame = frame
    return registry
