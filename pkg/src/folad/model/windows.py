"""Cut training windows out of videos."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..exceptions import ContractError
from ..features import FEATURE_SIZE, roi_pool
from ..motion import pose_deltas
from .network import EGO_SCALE, normalize_boxes, normalize_features
from .training import Batch


def _runs(frames: list[int]) -> list[list[int]]:
    runs, cur = [], [frames[0]]
    for f in frames[1:]:
        if f == cur[-1] + 1:
            cur.append(f)
        else:
            runs.append(cur)
            cur = [f]
    runs.append(cur)
    return runs


def video_windows(video, horizon: int, window: int = 20, stride: int = 10) -> Batch | None:
    """Windows over each gap-free stretch of every detected track.

    Box targets are the detections of the same track in the following
    frames of the stretch; ego targets come from the video's poses.
    """
    if window < 1 or stride < 1:
        raise ContractError("window and stride must be positive")
    n = len(video)
    if n == 0:
        return None
    dims = video.dims
    poses = np.array([[p.phi, p.x, p.z] for p in video.ego_poses()])
    deltas = np.array([d.as_array() for d in pose_deltas(video.ego_poses())]) * EGO_SCALE
    ego_t = np.zeros((n, horizon, 3))
    ego_m = np.zeros((n, horizon), dtype=bool)
    for j in range(1, horizon + 1):
        d = poses[j:] - poses[:-j] if j < n else np.zeros((0, 3))
        d[:, 0] = (d[:, 0] + np.pi) % (2 * np.pi) - np.pi
        ego_t[:n - j, j - 1] = d * EGO_SCALE
        ego_m[:n - j, j - 1] = True

    rows = []
    for tid, track in sorted(video.tracks().items()):
        for run in _runs(sorted(track)):
            if len(run) < 2:
                continue
            boxes = normalize_boxes(np.array([track[f].as_array() for f in run]), dims)
            feats = normalize_features(
                np.array([roi_pool(video.frames[f].flow, track[f]) for f in run]), dims)
            L = len(run)
            tgt = np.zeros((L, horizon, 4))
            msk = np.zeros((L, horizon), dtype=bool)
            for j in range(1, horizon + 1):
                if j < L:
                    tgt[:L - j, j - 1] = boxes[j:]
                    msk[:L - j, j - 1] = True
            fr = np.array(run)
            for s in range(0, L - 1, stride):
                e = min(s + window, L)
                if not msk[s:e].any():
                    continue
                rows.append((boxes[s:e], feats[s:e], tgt[s:e], msk[s:e],
                             deltas[fr[s:e]], ego_t[fr[s:e]], ego_m[fr[s:e]]))
                if e == L:
                    break
    if not rows:
        return None
    T = max(r[0].shape[0] for r in rows)
    B = len(rows)
    out = Batch(np.zeros((B, T, 4)), np.zeros((B, T, FEATURE_SIZE)), np.zeros((B, T, horizon, 4)),
                np.zeros((B, T, horizon), dtype=bool), np.zeros((B, T, 3)),
                np.zeros((B, T, horizon, 3)), np.zeros((B, T, horizon), dtype=bool))
    for i, r in enumerate(rows):
        L = r[0].shape[0]
        for name, a in zip(out.__dataclass_fields__, r):
            getattr(out, name)[i, :L] = a
    return out


def build_windows(videos: Sequence, horizon: int, window: int = 20, stride: int = 10) -> Batch:
    parts = [b for b in (video_windows(v, horizon, window, stride) for v in videos) if b is not None]
    if not parts:
        raise ContractError("no track in the given videos is long enough to train on")
    return Batch.concat(parts)
