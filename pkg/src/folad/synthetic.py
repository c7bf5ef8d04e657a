"""Deterministic desk-scale driving scenes with optional injected anomalies.

Objects move in the image plane with bounded random acceleration and a
constant turn rate. The ego vehicle follows smooth odometry; its effect on
the image is a global transform applied to every object and to the
background flow: expansion about the focus of expansion proportional to the
forward speed, plus a horizontal shift proportional to the yaw rate.

A scene is simulated from per-frame controls (object velocities, ego speed
and yaw rate). Injecting an anomaly edits the controls from the onset frame
and re-renders, so everything before the onset is left untouched and noise
draws are reused frame for frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import ContractError
from .features import BackgroundMotion, FlowLayer, LayeredFlow
from .geometry import BBox, FrameDims
from .motion import EgoPose, wrap_angle
from .video import AnomalyAnnotation, Detection, Frame, SyntheticVideo

FOCAL = 900.0            # px per radian of yaw
EXPANSION = 0.004        # relative image expansion per meter of forward motion
FOE = (0.5, 0.45)        # focus of expansion, as a fraction of frame size
ACCEL_BOUND = 1.5        # px / frame^2, normal-scene bound on box-center acceleration
MIN_DETECTED_SIZE = 2.0

ANOMALY_KINDS = ("sudden_stop", "crossing_collision", "erratic_swerve", "ego_crash")


@dataclass(frozen=True)
class AnomalySpec:
    kind: str
    onset: int

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ContractError(f"unknown anomaly kind {self.kind!r}; expected one of {ANOMALY_KINDS}")


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    frame_rate: float = 10.0
    width: int = 1280
    height: int = 720
    n_frames: int = 60
    n_objects: tuple[int, int] = (3, 6)
    object_speed: tuple[float, float] = (2.0, 12.0)   # px / frame
    static_fraction: float = 0.15
    entry_fraction: float = 0.25
    max_accel: float = 0.3                             # px / frame^2
    max_turn_rate: float = 0.02                        # rad / frame
    object_width: tuple[float, float] = (40.0, 160.0)
    aspect: tuple[float, float] = (0.6, 1.1)
    ego_speed: tuple[float, float] = (0.0, 1.5)        # m / frame
    ego_yaw_rate: tuple[float, float] = (-0.004, 0.004)
    ego_speed_jitter: float = 0.02
    ego_yaw_jitter: float = 0.0004
    jitter: float = 1.0                                # detection noise, px
    dropout: float = 0.0                               # per object-frame miss probability
    horizon: int = 5
    settle_frames: int | None = None                   # default horizon - 1
    anomaly: AnomalySpec | None = None
    video_id: str | None = None

    def __post_init__(self):
        for name in ("static_fraction", "entry_fraction", "dropout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {v}")
        if self.n_frames < self.horizon + 2:
            raise ContractError(f"n_frames must be at least horizon + 2 = {self.horizon + 2}")
        if self.width < 1 or self.height < 1 or self.frame_rate <= 0:
            raise ContractError("frame size and frame rate must be positive")
        lo, hi = self.n_objects
        if lo < 0 or hi < lo:
            raise ContractError(f"bad object count range {self.n_objects}")
        for name in ("object_speed", "object_width", "aspect", "ego_speed", "ego_yaw_rate"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ContractError(f"bad range for {name}: {lo} > {hi}")
        if self.jitter < 0 or self.max_accel < 0 or self.max_turn_rate < 0:
            raise ContractError("noise and acceleration bounds must be non-negative")

    @property
    def dims(self) -> FrameDims:
        return FrameDims(self.width, self.height)

    @property
    def settle(self) -> int:
        return self.horizon - 1 if self.settle_frames is None else self.settle_frames


@dataclass
class World:
    """Latent controls of a scene; rendering them is deterministic."""

    config: ScenarioConfig
    spawn: np.ndarray          # (K,) first frame each object exists
    start: np.ndarray          # (K, 2) center at its spawn frame
    size: np.ndarray           # (K, 2) w, h at its spawn frame
    velocity: np.ndarray       # (K, T, 2) own image velocity per frame
    ego_speed: np.ndarray      # (T,) m / frame
    ego_yaw_rate: np.ndarray   # (T,) rad / frame
    jitter: np.ndarray         # (K, T, 4) standard normal draws
    drop: np.ndarray           # (K, T) uniform draws
    step_override: dict = field(default_factory=dict)   # (k, t) -> forced image displacement
    size_scale: np.ndarray | None = None                # (K, T, 2) multiplicative distortion

    def copy(self) -> "World":
        return World(self.config, self.spawn.copy(), self.start.copy(), self.size.copy(),
                     self.velocity.copy(), self.ego_speed.copy(), self.ego_yaw_rate.copy(),
                     self.jitter, self.drop, dict(self.step_override),
                     None if self.size_scale is None else self.size_scale.copy())


@dataclass
class Rendering:
    centers: np.ndarray        # (K, T, 2), nan before spawn
    sizes: np.ndarray          # (K, T, 2)
    steps: np.ndarray          # (K, T, 2) image displacement into frame t
    poses: list[EgoPose]
    backgrounds: list[BackgroundMotion]

    def visible(self, dims: FrameDims) -> np.ndarray:
        c = self.centers
        with np.errstate(invalid="ignore"):
            return ((c[..., 0] >= 0) & (c[..., 0] < dims.width)
                    & (c[..., 1] >= 0) & (c[..., 1] < dims.height))


def stream_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def _uniform(rng, lo_hi):
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _simulate_controls(config: ScenarioConfig) -> World:
    rng = stream_rng(config.seed, 0)
    T = config.n_frames
    W, H = config.width, config.height
    K = int(rng.integers(config.n_objects[0], config.n_objects[1] + 1))
    spawn = np.zeros(K, dtype=np.int64)
    start = np.zeros((K, 2))
    size = np.zeros((K, 2))
    velocity = np.zeros((K, T, 2))
    for k in range(K):
        w = _uniform(rng, config.object_width)
        size[k] = (w, w * _uniform(rng, config.aspect))
        static = rng.random() < config.static_fraction
        entering = rng.random() < config.entry_fraction
        speed = 0.0 if static else _uniform(rng, config.object_speed)
        heading = math.radians(rng.uniform(-25.0, 25.0))
        rightward = rng.random() < 0.5
        if entering and speed > 0:
            spawn[k] = int(rng.integers(1, max(2, T // 2)))
            x = -size[k, 0] / 4 if rightward else W + size[k, 0] / 4
            start[k] = (x, rng.uniform(0.35, 0.85) * H)
        else:
            start[k] = (rng.uniform(0.1, 0.9) * W, rng.uniform(0.35, 0.85) * H)
        direction = np.array([math.cos(heading), math.sin(heading)])
        if not rightward:
            direction[0] = -direction[0]
        v = speed * direction
        turn = rng.uniform(-1.0, 1.0) * config.max_turn_rate
        accel = np.zeros(2)
        for t in range(T):
            if t > spawn[k] and speed > 0:
                c, s = math.cos(turn), math.sin(turn)
                v = np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])
                accel = 0.6 * accel + 0.6 * config.max_accel * rng.uniform(-1.0, 1.0, size=2)
                norm = float(np.hypot(*accel))
                if norm > config.max_accel:
                    accel *= config.max_accel / norm
                v = v + accel
            velocity[k, t] = v

    ego_speed = np.zeros(T)
    ego_yaw = np.zeros(T)
    v = _uniform(rng, config.ego_speed)
    w = _uniform(rng, config.ego_yaw_rate)
    lo_v, hi_v = config.ego_speed
    lo_w, hi_w = config.ego_yaw_rate
    for t in range(T):
        if t > 0:
            v = min(max(v + rng.uniform(-1, 1) * config.ego_speed_jitter, lo_v), hi_v)
            w = min(max(w + rng.uniform(-1, 1) * config.ego_yaw_jitter, lo_w), hi_w)
        ego_speed[t] = v
        ego_yaw[t] = w

    noise = stream_rng(config.seed, 1)
    jitter = noise.standard_normal((K, T, 4))
    drop = noise.random((K, T))
    return World(config, spawn, start, size, velocity, ego_speed, ego_yaw, jitter, drop)


def render(world: World) -> Rendering:
    config = world.config
    T = config.n_frames
    K = len(world.spawn)
    W, H = config.width, config.height
    origin = (FOE[0] * W, FOE[1] * H)

    poses = []
    backgrounds = []
    phi = x = z = 0.0
    for t in range(T):
        if t > 0:
            phi = wrap_angle(phi + world.ego_yaw_rate[t])
            x += world.ego_speed[t] * math.sin(phi)
            z += world.ego_speed[t] * math.cos(phi)
        poses.append(EgoPose(phi, x, z))
        backgrounds.append(BackgroundMotion(
            scale=EXPANSION * world.ego_speed[t], origin_u=origin[0], origin_v=origin[1],
            shift_u=-FOCAL * world.ego_yaw_rate[t], shift_v=0.0))

    centers = np.full((K, T, 2), np.nan)
    sizes = np.full((K, T, 2), np.nan)
    steps = np.zeros((K, T, 2))
    for k in range(K):
        t0 = int(world.spawn[k])
        c = world.start[k].copy()
        s = world.size[k].copy()
        for t in range(t0, T):
            bg = backgrounds[t]
            if t > t0:
                prev = c
                forced = world.step_override.get((k, t))
                if forced is not None:
                    step = np.asarray(forced, dtype=np.float64)
                else:
                    step = world.velocity[k, t] + bg.flow_at(prev[0], prev[1])
                c = prev + step
                s = s * (1.0 + bg.scale)
            else:
                step = world.velocity[k, t] + bg.flow_at(c[0], c[1])
            centers[k, t] = c
            sizes[k, t] = s
            steps[k, t] = step
    if world.size_scale is not None:
        sizes = sizes * world.size_scale
    return Rendering(centers, sizes, steps, poses, backgrounds)


def video_from_world(world: World, annotation: AnomalyAnnotation | None = None) -> SyntheticVideo:
    config = world.config
    dims = config.dims
    r = render(world)
    visible = r.visible(dims)
    K, T = visible.shape
    frames = []
    for t in range(T):
        layers = []
        for k in range(K):
            if t < world.spawn[k]:
                continue
            box = BBox(float(r.centers[k, t, 0]), float(r.centers[k, t, 1]),
                       float(r.sizes[k, t, 0]), float(r.sizes[k, t, 1]))
            x1, y1, x2, y2 = box.xyxy()
            if x2 < 0 or y2 < 0 or x1 > dims.width - 1 or y1 > dims.height - 1:
                continue
            layers.append((y2, k, FlowLayer(box, float(r.steps[k, t, 0]), float(r.steps[k, t, 1]))))
        # nearer objects (lower bottom edge in the image) are drawn last
        layers.sort(key=lambda item: (item[0], item[1]))
        truth = []
        detections = []
        for k in range(K):
            if not visible[k, t]:
                continue
            cx, cy = r.centers[k, t]
            w, h = r.sizes[k, t]
            truth.append(Detection(k, BBox(float(cx), float(cy), float(w), float(h))))
            if world.drop[k, t] < config.dropout:
                continue
            n = world.jitter[k, t] * config.jitter
            detections.append(Detection(k, BBox(
                float(cx + n[0]), float(cy + n[1]),
                float(max(w + n[2], MIN_DETECTED_SIZE)), float(max(h + n[3], MIN_DETECTED_SIZE)))))
        flow = LayeredFlow(dims, r.backgrounds[t], tuple(item[2] for item in layers))
        frames.append(Frame(t, tuple(detections), r.poses[t], flow, tuple(truth)))
    video_id = config.video_id or f"scene-{config.seed}"
    return SyntheticVideo(video_id, dims, config.frame_rate, frames, annotation, world)


def generate_normal(config: ScenarioConfig) -> SyntheticVideo:
    """Anomaly-free scene."""
    if config.anomaly is not None:
        raise ContractError("generate_normal takes a config without an anomaly spec")
    return video_from_world(_simulate_controls(config))


def generate(config: ScenarioConfig) -> SyntheticVideo:
    """Scene with the config's anomaly, if any, injected."""
    video = generate_normal(replace(config, anomaly=None))
    if config.anomaly is None:
        return video
    return inject_anomaly(video, config.anomaly.kind, config.anomaly.onset)


def center_accel(r: Rendering, k: int, t: int) -> float:
    """Magnitude of the second difference of object k's center at frame t."""
    if t < 2:
        return 0.0
    a = r.centers[k, t] - 2.0 * r.centers[k, t - 1] + r.centers[k, t - 2]
    if np.any(np.isnan(a)):
        return 0.0
    return float(np.hypot(a[0], a[1]))


def recovery_frame(r: Rendering, participants, onset: int, settle: int, n_frames: int) -> int:
    """First frame f > onset such that no participant exceeds the acceleration
    bound on any frame of (f - settle, f] that lies at or after the onset, nor
    on any later frame."""
    violations = [g for g in range(onset, n_frames)
                  if any(center_accel(r, k, g) > ACCEL_BOUND for k in participants)]
    if not violations:
        return min(onset + 1, n_frames - 1)
    # the settle window must close after the last violation
    return min(max(onset + 1, violations[-1] + settle), n_frames - 1)


def onset_candidates(world: World, r: Rendering, onset: int) -> list[int]:
    dims = world.config.dims
    vis = r.visible(dims)
    return [k for k in range(len(world.spawn))
            if onset - 1 >= world.spawn[k] and vis[k, onset - 1] and vis[k, onset]]


def fastest_object(world: World, ks: list[int], onset: int) -> int:
    speeds = [float(np.hypot(*world.velocity[k, onset])) for k in ks]
    return ks[int(np.argmax(speeds))]


def inject_anomaly(video: SyntheticVideo, kind: str, onset: int) -> SyntheticVideo:
    """Return a copy of ``video`` with an anomaly of ``kind`` starting at ``onset``."""
    if kind not in ANOMALY_KINDS:
        raise ContractError(f"unknown anomaly kind {kind!r}")
    world: World | None = video.world
    if world is None:
        raise ContractError("video carries no latent scene; regenerate it to inject anomalies")
    config = world.config
    T = config.n_frames
    delta = config.horizon
    if onset < delta or onset + delta >= T:
        raise ContractError(
            f"onset {onset} must leave {delta} frames before and after in a {T}-frame video")
    world = world.copy()
    r = render(world)
    cands = onset_candidates(world, r, onset)
    rng = stream_rng(config.seed, 2 + ANOMALY_KINDS.index(kind))

    if kind == "ego_crash":
        sign = 1.0 if rng.random() < 0.5 else -1.0
        jolt = sign * rng.uniform(0.06, 0.09)
        world.ego_yaw_rate[onset] = jolt
        if onset + 1 < T:
            world.ego_yaw_rate[onset + 1] = -0.4 * jolt
        world.ego_yaw_rate[onset + 2:] = 0.0
        world.ego_speed[onset] *= 0.5
        world.ego_speed[onset + 1:] = 0.0
        participants = [k for k in range(len(world.spawn)) if world.spawn[k] <= onset]
    else:
        if not cands:
            raise ContractError(f"no object is visible at onset {onset}")
        a = fastest_object(world, cands, onset)
        participants = [a]
        if kind == "sudden_stop":
            world.velocity[a, onset] *= 0.5
            world.velocity[a, onset + 1:] = 0.0
        elif kind == "erratic_swerve":
            v = world.velocity[a, onset]
            speed = float(np.hypot(*v))
            lateral = np.array([-v[1], v[0]]) / speed if speed > 0 else np.array([0.0, 1.0])
            amplitude = rng.uniform(4.0, 6.0)
            duration = min(8, T - onset - delta - 1)
            for i in range(duration):
                world.velocity[a, onset + i] += lateral * amplitude * (1.0 if i % 2 == 0 else -1.0)
        else:
            others = [k for k in cands if k != a]
            if not others:
                raise ContractError(f"crossing_collision needs two visible objects at onset {onset}")
            ca = r.centers[a, onset - 1]
            b = min(others, key=lambda k: (float(np.hypot(*(r.centers[k, onset - 1] - ca))), k))
            participants = [a, b]
            cb = r.centers[b, onset - 1]
            # b closes in on a's (undisturbed) position over `lead` frames
            lead = int(np.clip(round(float(np.hypot(*(r.centers[a, onset + 2] - cb))) / 15.0), 3, 8))
            impact = onset + lead - 1
            if impact + delta + 2 >= T:
                raise ContractError(f"onset {onset} leaves no room for the collision in {T} frames")
            step = (r.centers[a, impact] - cb) / lead
            for t in range(onset, impact + 1):
                world.step_override[(b, t)] = step
            for k in (a, b):
                world.velocity[k, impact + 1:] = 0.0
                for t in range(impact + 1, T):
                    world.step_override.pop((k, t), None)
            scale = np.ones((len(world.spawn), T, 2))
            for k in (a, b):
                signs = np.where(rng.random(2) < 0.5, -1.0, 1.0)
                scale[k, impact:] = 1.0 + 0.3 * signs
            world.size_scale = scale

    r_new = render(world)
    end = recovery_frame(r_new, participants, onset, config.settle, T)
    annotation = AnomalyAnnotation(onset, end, kind == "ego_crash", kind)
    new = video_from_world(world, annotation)
    new.video_id = video.video_id
    return new
