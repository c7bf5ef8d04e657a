"""Future object localization network and ego-motion predictor.

Per object, two GRU encoders consume the normalized box and the pooled
motion feature at every frame. Their states are fused by a tanh projection
that seeds the location decoder, which runs ``horizon`` steps; each step
reads the fused state plus the predicted ego offset for that step and emits
a box increment. Predicted box j is the current box plus the first j
increments, so an all-zero network predicts persistence.

The ego model encodes frame-to-frame pose changes and decodes cumulative
future changes ``E_{t+j} - E_t`` the same way.

Internal units: boxes are divided by frame size, flow features by frame
size times ``FLOW_GAIN``, decoder increments are ``OFFSET_SCALE`` times the
head output, and ego quantities are multiplied by ``EGO_SCALE``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..exceptions import ContractError
from ..features import FEATURE_SIZE
from ..geometry import BBox, FrameDims
from ..motion import EgoDelta, PredictionSet
from .gru import cell_shapes, gru_forward

FLOW_GAIN = 100.0
OFFSET_SCALE = 0.05
EGO_SCALE = np.array([100.0, 1.0, 1.0])
MIN_BOX_SIZE = 1.0

CELLS = ("loc", "mot", "dec", "ego_enc", "ego_dec")


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int = 512
    ego_hidden_size: int = 128
    horizon: int = 5
    dims: FrameDims = field(default_factory=lambda: FrameDims(1280, 720))

    def __post_init__(self):
        for name in ("hidden_size", "ego_hidden_size", "horizon"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be positive")


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    H, He = config.hidden_size, config.ego_hidden_size
    cells = {
        "loc": (4, H),
        "mot": (FEATURE_SIZE, H),
        "dec": (H + 3, H),
        "ego_enc": (3, He),
        "ego_dec": (3, He),
    }
    shapes: dict[str, tuple[int, ...]] = {}
    for name in ("loc", "mot"):
        for k, s in cell_shapes(*cells[name]).items():
            shapes[f"{name}.{k}"] = s
    shapes["fuse.W"] = (2 * H, H)
    shapes["fuse.b"] = (H,)
    for k, s in cell_shapes(*cells["dec"]).items():
        shapes[f"dec.{k}"] = s
    shapes["head.W"] = (H, 4)
    shapes["head.b"] = (4,)
    for name in ("ego_enc", "ego_dec"):
        for k, s in cell_shapes(*cells[name]).items():
            shapes[f"{name}.{k}"] = s
    shapes["ego_head.W"] = (He, 3)
    shapes["ego_head.b"] = (3,)
    return shapes


class ModelParams:
    """Named float64 tensors plus the configuration they were built for."""

    def __init__(self, config: ModelConfig, tensors: dict[str, np.ndarray]):
        expected = param_shapes(config)
        if set(tensors) != set(expected):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ContractError(f"parameter names differ: missing {missing}, unexpected {extra}")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ContractError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
        self.config = config
        self.tensors = {name: np.asarray(tensors[name], dtype=np.float64) for name in expected}

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        return cls(config, {k: np.zeros(s) for k, s in param_shapes(config).items()})

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> "ModelParams":
        """Uniform(-1/sqrt(fan), 1/sqrt(fan)) weights; output heads start at zero."""
        tensors = {}
        for name, shape in param_shapes(config).items():
            if name.startswith(("head.", "ego_head.")):
                tensors[name] = np.zeros(shape)
                continue
            prefix = name.split(".")[0]
            fan = config.ego_hidden_size if prefix.startswith("ego") else config.hidden_size
            bound = 1.0 / np.sqrt(fan)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        return cls(config, tensors)

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def items(self):
        return self.tensors.items()

    def cell(self, name: str):
        t = self.tensors
        return t[f"{name}.W"], t[f"{name}.U"], t[f"{name}.bW"], t[f"{name}.bU"]

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def equal(self, other: "ModelParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(v, other.tensors[k]) for k, v in self.tensors.items())


def normalize_boxes(boxes: np.ndarray, dims: FrameDims) -> np.ndarray:
    return np.asarray(boxes, dtype=np.float64) / dims.scale


def normalize_features(feats: np.ndarray, dims: FrameDims) -> np.ndarray:
    feats = np.asarray(feats, dtype=np.float64)
    shape = feats.shape
    per_channel = np.array([FLOW_GAIN / dims.width, FLOW_GAIN / dims.height])
    return (feats.reshape(*shape[:-1], FEATURE_SIZE // 2, 2) * per_channel).reshape(shape)


def encode_step(p: ModelParams, h_loc, h_mot, box_n, feat_n, with_cache=False):
    h_loc, c_loc = gru_forward(*p.cell("loc"), box_n, h_loc)
    h_mot, c_mot = gru_forward(*p.cell("mot"), feat_n, h_mot)
    if with_cache:
        return h_loc, h_mot, (c_loc, c_mot)
    return h_loc, h_mot


def fuse(p: ModelParams, h_loc, h_mot):
    cat = np.concatenate([h_loc, h_mot], axis=-1)
    return np.tanh(cat @ p["fuse.W"] + p["fuse.b"]), cat


def decode(p: ModelParams, s, ego, with_cache=False):
    """Cumulative normalized offsets (N, horizon, 4) from fused states (N, H).

    ``ego`` is (N, horizon, 3) in internal ego units.
    """
    horizon = ego.shape[1]
    h = s
    cum = np.zeros((s.shape[0], horizon, 4))
    total = np.zeros((s.shape[0], 4))
    caches = []
    for j in range(horizon):
        inp = np.concatenate([s, ego[:, j]], axis=-1)
        h, cache = gru_forward(*p.cell("dec"), inp, h)
        total = total + OFFSET_SCALE * (h @ p["head.W"] + p["head.b"])
        cum[:, j] = total
        caches.append((cache, h))
    if with_cache:
        return cum, caches
    return cum


def ego_encode_step(p: ModelParams, h, d, with_cache=False):
    h, cache = gru_forward(*p.cell("ego_enc"), d, h)
    return (h, cache) if with_cache else h


def ego_decode(p: ModelParams, h0, d_last, horizon: int, with_cache=False):
    """Cumulative future ego offsets (N, horizon, 3) in internal units."""
    h = h0
    cum = np.zeros((h0.shape[0], horizon, 3))
    total = np.zeros((h0.shape[0], 3))
    caches = []
    for j in range(horizon):
        h, cache = gru_forward(*p.cell("ego_dec"), d_last, h)
        total = total + h @ p["ego_head.W"] + p["ego_head.b"]
        cum[:, j] = total
        caches.append((cache, h))
    if with_cache:
        return cum, caches
    return cum


@dataclass(frozen=True, eq=False)
class HiddenState:
    h_loc: np.ndarray
    h_mot: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "HiddenState":
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))

    def __eq__(self, other):
        return (isinstance(other, HiddenState) and np.array_equal(self.h_loc, other.h_loc)
                and np.array_equal(self.h_mot, other.h_mot))


def _box_row(box: BBox) -> np.ndarray:
    return np.array([[box.cx, box.cy, box.w, box.h]], dtype=np.float64)


def fol_encode(params: ModelParams, state: HiddenState, box: BBox, feat, dims: FrameDims) -> HiddenState:
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape != (FEATURE_SIZE,):
        raise ContractError(f"object feature must have {FEATURE_SIZE} values, got {feat.shape}")
    h_loc, h_mot = encode_step(
        params, state.h_loc[None, :], state.h_mot[None, :],
        normalize_boxes(_box_row(box), dims), normalize_features(feat[None, :], dims))
    return HiddenState(h_loc[0], h_mot[0])


def ego_to_internal(deltas: Sequence[EgoDelta]) -> np.ndarray:
    return np.array([d.as_array() for d in deltas], dtype=np.float64).reshape(-1, 3) * EGO_SCALE


def offsets_to_boxes(current: np.ndarray, cum: np.ndarray, dims: FrameDims) -> np.ndarray:
    """(K, 4) pixel boxes and (K, horizon, 4) normalized offsets -> pixel boxes."""
    boxes = (current[:, None, :] / dims.scale + cum) * dims.scale
    boxes[..., 2:] = np.maximum(boxes[..., 2:], MIN_BOX_SIZE)
    return boxes


def fol_decode(params: ModelParams, state: HiddenState, current_box: BBox,
               ego_future: Sequence[EgoDelta], dims: FrameDims, made_at: int = 0) -> PredictionSet:
    horizon = params.config.horizon
    if len(ego_future) != horizon:
        raise ContractError(f"expected {horizon} future ego deltas, got {len(ego_future)}")
    s, _ = fuse(params, state.h_loc[None, :], state.h_mot[None, :])
    cum = decode(params, s, ego_to_internal(ego_future)[None])
    boxes = offsets_to_boxes(_box_row(current_box), cum, dims)[0]
    return PredictionSet(made_at, tuple(BBox.from_array(b) for b in boxes))


class EgoPredictor:
    """Streaming ego predictor: one encoder step per frame, then decode."""

    def __init__(self, params: ModelParams):
        self.params = params
        self.h = np.zeros((1, params.config.ego_hidden_size))

    def step(self, delta: EgoDelta) -> list[EgoDelta]:
        d = ego_to_internal([delta])
        self.h = ego_encode_step(self.params, self.h, d)
        cum = ego_decode(self.params, self.h, d, self.params.config.horizon)[0] / EGO_SCALE
        return [EgoDelta.from_array(row) for row in cum]


def ego_predict(params: ModelParams, history: Sequence[EgoDelta]) -> list[EgoDelta]:
    """Predicted ``E_{t+j} - E_t`` for j = 1..horizon given all deltas up to t."""
    if len(history) == 0:
        raise ContractError("ego history must hold at least one delta")
    predictor = EgoPredictor(params)
    future = None
    for d in history:
        future = predictor.step(d)
    return future
