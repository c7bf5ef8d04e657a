"""Run the tracker and the score variants over whole videos."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .exceptions import ContractError
from .features import roi_pool
from .geometry import FrameDims
from .model.network import EgoPredictor, ModelParams
from .motion import PredictionSet, pose_deltas
from .scoring import METHODS, FrameScorer, ScoreSeries
from .tracking import TrackerRegistry, associate, fol_track_step


@dataclass(frozen=True)
class TrackingOptions:
    max_age: int = 5
    iou_threshold: float = 0.3
    use_track_ids: bool = False     # trust detection ids instead of associating


def _check_dims(params: ModelParams, video):
    if params.config.dims != video.dims:
        raise ContractError(f"model was trained for {params.config.dims}, video {video.video_id} is {video.dims}")


def track_video(params: ModelParams, video, options: TrackingOptions = TrackingOptions(),
                scorer: FrameScorer | None = None) -> dict[int, list[PredictionSet]]:
    """Track every object through ``video``; returns each id's prediction sets.

    With a ``scorer``, all variants are scored on each frame before the update.
    """
    _check_dims(params, video)
    horizon = params.config.horizon
    registry = TrackerRegistry(horizon, options.max_age)
    ego = EgoPredictor(params)
    deltas = pose_deltas(video.ego_poses())
    made: dict[int, list[PredictionSet]] = {}
    for frame in video.frames:
        t = frame.index
        boxes = [d.box for d in frame.detections]
        if options.use_track_ids:
            observed = {d.track_id: d.box for d in frame.detections}
        else:
            assoc = associate(boxes, registry, options.iou_threshold, t)
            observed = {tid: boxes[i] for tid, i in assoc.matches}
            for i in assoc.unmatched_detections:
                observed[registry.new_id()] = boxes[i]
        if scorer is not None:
            scorer(registry, t, {k: b for k, b in observed.items() if k in registry}, boxes)
        future = ego.step(deltas[t])
        obs = {tid: (b, roi_pool(frame.flow, b)) for tid, b in observed.items()}
        fol_track_step(registry, obs, frame.flow, future, params, t)
        for tr in registry.ordered():
            made.setdefault(tr.track_id, []).append(tr.predictions)
    return made


def score_video(params: ModelParams, video, methods: Sequence[str] = METHODS,
                options: TrackingOptions = TrackingOptions(), pixel_units: bool = False,
                raster: FrameDims | None = None) -> dict[str, ScoreSeries]:
    scorer = FrameScorer(video.dims, tuple(methods), pixel_units, raster)
    track_video(params, video, options, scorer)
    return scorer.series(video.video_id)
