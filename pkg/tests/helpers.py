"""Shared builders for the test suite."""

from __future__ import annotations

import numpy as np

from folad.features import LayeredFlow, zero_flow
from folad.geometry import BBox, FrameDims
from folad.model.network import ModelConfig, ModelParams, param_shapes
from folad.model.training import Batch
from folad.motion import EgoPose
from folad.video import Detection, Frame, SyntheticVideo


def toy_problem(seed: int, hidden=16, ego_hidden=8, horizon=3, B=3, T=4):
    """Small model and batch at realistic scale: O(0.1) residuals, ~80% valid targets."""
    rng = np.random.default_rng(seed)
    config = ModelConfig(hidden, ego_hidden, horizon, FrameDims(64, 48))
    tensors = {}
    for name, shape in param_shapes(config).items():
        scale = 0.1 if name.startswith(("head.", "ego_head.")) else 0.4
        tensors[name] = rng.normal(0.0, scale, size=shape)
    params = ModelParams(config, tensors)
    boxes = rng.uniform(0.2, 0.8, size=(B, T, 4))
    batch = Batch(
        boxes=boxes,
        feats=rng.normal(0.0, 0.5, size=(B, T, 50)),
        targets=boxes[:, :, None, :] + rng.normal(0.0, 0.05, size=(B, T, horizon, 4)),
        target_mask=rng.random((B, T, horizon)) < 0.8,
        ego_in=rng.normal(0.0, 0.3, size=(B, T, 3)),
        ego_targets=rng.normal(0.0, 0.3, size=(B, T, horizon, 3)),
        ego_mask=rng.random((B, T, horizon)) < 0.8,
    )
    return params, batch


def scripted_video(tracks: dict[int, dict[int, BBox]], n_frames: int, dims=FrameDims(640, 360),
                   flows=None, poses=None, video_id="scripted") -> SyntheticVideo:
    """Video whose detections are exactly ``tracks`` (id -> frame -> box)."""
    frames = []
    for t in range(n_frames):
        dets = tuple(Detection(tid, boxes[t]) for tid, boxes in sorted(tracks.items()) if t in boxes)
        flow = flows[t] if flows is not None else zero_flow(dims)
        pose = poses[t] if poses is not None else EgoPose(0.0, 0.0, 0.0)
        frames.append(Frame(t, dets, pose, flow, dets))
    return SyntheticVideo(video_id, dims, 10.0, frames)


def persistence_params(hidden=4, ego_hidden=4, horizon=5, dims=FrameDims(640, 360)) -> ModelParams:
    return ModelParams.zeros(ModelConfig(hidden, ego_hidden, horizon, dims))


__all__ = ["LayeredFlow", "persistence_params", "scripted_video", "toy_problem"]
