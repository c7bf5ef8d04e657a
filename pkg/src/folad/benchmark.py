"""The packaged desk-scale benchmark: fixed seeds for train, val and test splits."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ContractError
from .synthetic import (
    ANOMALY_KINDS,
    AnomalySpec,
    ScenarioConfig,
    fastest_object,
    generate,
    generate_normal,
    inject_anomaly,
    onset_candidates,
    render,
    stream_rng,
)
from .video import Frame, SyntheticVideo

SPLITS = ("train", "val", "test")
SPLIT_SIZES = {"train": 60, "val": 20, "test": 40}
SPLIT_SEED_BASE = {"train": 1000, "val": 2000, "test": 3000}
ONSET_WINDOW = (25, 45)
MIN_PARTICIPANT_SPEED = 5.0   # px / frame at onset, so the event is visible
MIN_WINDOW = 3                # frames in the annotation

# desk-scale training recipe for the benchmark
TRAIN_RECIPE = dict(hidden_size=64, ego_hidden_size=32, horizon=5, n_epochs=50, batch_size=32,
                    learning_rate=2e-3, window=20, stride=10)


@dataclass(frozen=True)
class BenchmarkOptions:
    seed: int = 0
    n_train: int = SPLIT_SIZES["train"]
    n_val: int = SPLIT_SIZES["val"]
    n_test_per_kind: int = SPLIT_SIZES["test"] // len(ANOMALY_KINDS)
    normal_frames: int = 60
    test_frames: int = 80
    n_objects: tuple[int, int] = (3, 6)
    test_objects: tuple[int, int] = (4, 7)
    jitter: float = 1.0
    dropout: float = 0.0
    test_dropout: float = 0.05
    horizon: int = 5
    width: int = 1280
    height: int = 720


@dataclass(frozen=True)
class Entry:
    split: str
    config: ScenarioConfig


def _base(opts: BenchmarkOptions, seed: int, n_frames: int, n_objects, dropout: float, video_id: str):
    return ScenarioConfig(seed=seed, n_frames=n_frames, n_objects=n_objects, jitter=opts.jitter,
                          dropout=dropout, horizon=opts.horizon, width=opts.width, height=opts.height,
                          video_id=video_id)


def _valid_onset(video, kind: str, onset: int):
    try:
        out = inject_anomaly(video, kind, onset)
    except ContractError:
        return None
    a = out.annotation
    if a.end - a.start + 1 < MIN_WINDOW:
        return None
    if kind != "ego_crash":
        world = video.world
        r = render(world)
        k = fastest_object(world, onset_candidates(world, r, onset), onset)
        if float(np.hypot(*world.velocity[k, onset])) < MIN_PARTICIPANT_SPEED:
            return None
    return onset


def pick_onset(config: ScenarioConfig, kind: str, window=ONSET_WINDOW) -> int | None:
    """First workable onset, scanning cyclically from a seeded start in ``window``."""
    video = generate_normal(config)
    lo, hi = window
    hi = min(hi, config.n_frames - config.horizon - 1)
    if hi < lo:
        return None
    start = int(stream_rng(config.seed, 10).integers(lo, hi + 1))
    for onset in list(range(start, hi + 1)) + list(range(lo, start)):
        if _valid_onset(video, kind, onset) is not None:
            return onset
    return None


def manifest(opts: BenchmarkOptions = BenchmarkOptions()) -> list[Entry]:
    entries = []
    for i in range(opts.n_train):
        seed = opts.seed * 100000 + SPLIT_SEED_BASE["train"] + i
        entries.append(Entry("train", _base(opts, seed, opts.normal_frames, opts.n_objects, opts.dropout,
                                            f"train-{i:03d}")))
    for i in range(opts.n_val):
        seed = opts.seed * 100000 + SPLIT_SEED_BASE["val"] + i
        entries.append(Entry("val", _base(opts, seed, opts.normal_frames, opts.n_objects, opts.dropout,
                                          f"val-{i:03d}")))
    for ki, kind in enumerate(ANOMALY_KINDS):
        for i in range(opts.n_test_per_kind):
            vid = f"test-{kind}-{i:02d}"
            for attempt in range(50):
                seed = opts.seed * 100000 + SPLIT_SEED_BASE["test"] + 1000 * attempt + 100 * ki + i
                cfg = _base(opts, seed, opts.test_frames, opts.test_objects, opts.test_dropout, vid)
                onset = pick_onset(cfg, kind)
                if onset is not None:
                    entries.append(Entry("test", replace(cfg, anomaly=AnomalySpec(kind, onset))))
                    break
            else:
                raise ContractError(f"could not place a {kind} anomaly for {vid}")
    return entries


def build(opts: BenchmarkOptions = BenchmarkOptions(), split: str | None = None, **overrides):
    """Generate the videos of one split (or all), applying config overrides."""
    if split is not None and split not in SPLITS:
        raise ContractError(f"unknown split {split!r}")
    out = []
    for e in manifest(opts):
        if split is None or e.split == split:
            out.append(generate(replace(e.config, **overrides)))
    return out


def constant_velocity_config(seed: int, n_frames: int = 40, **overrides) -> ScenarioConfig:
    """Noise-free scene: objects keep their velocity and the ego vehicle stands still."""
    base = dict(seed=seed, n_frames=n_frames, n_objects=(3, 5), static_fraction=0.0, entry_fraction=0.0,
                max_accel=0.0, max_turn_rate=0.0, ego_speed=(0.0, 0.0), ego_yaw_rate=(0.0, 0.0),
                ego_speed_jitter=0.0, ego_yaw_jitter=0.0, jitter=0.0, dropout=0.0)
    base.update(overrides)
    return ScenarioConfig(**base)


def occlude(video: SyntheticVideo, track_id: int, frames) -> SyntheticVideo:
    """Copy of ``video`` with the detections of one track removed on ``frames``."""
    hidden = set(frames)
    out = []
    for f in video.frames:
        dets = f.detections
        if f.index in hidden:
            dets = tuple(d for d in dets if d.track_id != track_id)
        out.append(Frame(f.index, dets, f.ego, f.flow, f.truth))
    return SyntheticVideo(video.video_id, video.dims, video.frame_rate, out, video.annotation, video.world)
