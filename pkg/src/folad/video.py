"""In-memory representation of a driving video as annotations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .exceptions import ContractError
from .features import FlowField
from .geometry import BBox, FrameDims
from .motion import EgoPose, pose_deltas


@dataclass(frozen=True)
class Detection:
    track_id: int
    box: BBox


@dataclass(frozen=True)
class AnomalyAnnotation:
    start: int
    end: int
    ego_involved: bool = False
    kind: str | None = None

    def __post_init__(self):
        if not 0 <= self.start <= self.end:
            raise ContractError(f"annotation needs 0 <= start <= end, got {self.start}..{self.end}")

    def contains(self, frame: int) -> bool:
        return self.start <= frame <= self.end


@dataclass(frozen=True)
class Frame:
    index: int
    detections: tuple[Detection, ...]
    ego: EgoPose
    flow: FlowField
    truth: tuple[Detection, ...] = ()


@dataclass
class SyntheticVideo:
    video_id: str
    dims: FrameDims
    frame_rate: float
    frames: list[Frame]
    annotation: AnomalyAnnotation | None = None
    # latent scene state, kept so anomalies can be injected; never serialized
    world: Any = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for i, f in enumerate(self.frames):
            if f.index != i:
                raise ContractError(f"frame {i} carries index {f.index}")
        if self.annotation is not None and self.frames and self.annotation.end >= len(self.frames):
            raise ContractError("annotation window extends past the last frame")

    def __len__(self):
        return len(self.frames)

    def ego_poses(self) -> list[EgoPose]:
        return [f.ego for f in self.frames]

    def ego_deltas(self):
        return pose_deltas(self.ego_poses())

    def labels(self) -> list[int]:
        if self.annotation is None:
            return [0] * len(self.frames)
        return [int(self.annotation.contains(i)) for i in range(len(self.frames))]

    def tracks(self, truth: bool = False) -> dict[int, dict[int, BBox]]:
        """track id -> {frame index -> box}, from detections or noise-free truth."""
        out: dict[int, dict[int, BBox]] = {}
        for f in self.frames:
            for d in (f.truth if truth else f.detections):
                out.setdefault(d.track_id, {})[f.index] = d.box
        return out
