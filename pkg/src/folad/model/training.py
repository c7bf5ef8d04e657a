"""Loss, explicit gradients and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..exceptions import ContractError
from .gru import gru_backward
from .network import (
    OFFSET_SCALE,
    ModelParams,
    decode,
    ego_decode,
    ego_encode_step,
    encode_step,
    fuse,
)
from .optim import RMSprop


log = logging.getLogger(__name__)


@dataclass
class Batch:
    """Padded windows of consecutive frames of object tracks.

    All arrays are in internal (normalized) units. Windows are left-aligned;
    steps past a window's end are padding and carry no targets.
    """

    boxes: np.ndarray          # (B, T, 4)
    feats: np.ndarray          # (B, T, 50)
    targets: np.ndarray        # (B, T, horizon, 4) future boxes
    target_mask: np.ndarray    # (B, T, horizon) bool
    ego_in: np.ndarray         # (B, T, 3) E_t - E_{t-1}
    ego_targets: np.ndarray    # (B, T, horizon, 3) E_{t+j} - E_t
    ego_mask: np.ndarray       # (B, T, horizon) bool

    def __len__(self):
        return self.boxes.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    @classmethod
    def concat(cls, batches) -> "Batch":
        fields = list(cls.__dataclass_fields__)
        T = max(b.boxes.shape[1] for b in batches)
        out = []
        for f in fields:
            parts = []
            for b in batches:
                a = getattr(b, f)
                pad = [(0, 0)] * a.ndim
                pad[1] = (0, T - a.shape[1])
                parts.append(np.pad(a, pad))
            out.append(np.concatenate(parts, axis=0))
        return cls(*out)


def smooth_l1(r):
    a = np.abs(r)
    return np.where(a < 1.0, 0.5 * r * r, a - 0.5)


def smooth_l1_grad(r):
    return np.clip(r, -1.0, 1.0)


def _per_sample_weights(mask, n_components):
    counts = mask.reshape(mask.shape[0], -1).sum(axis=1) * n_components
    return 1.0 / np.maximum(counts, 1)


def forward_backward(params: ModelParams, batch: Batch, ego_weight: float = 1.0,
                     need_grads: bool = True):
    """Loss and, optionally, its gradient with respect to every tensor.

    Per sample: mean smooth-L1 over valid future box components plus
    ``ego_weight`` times the mean squared error over valid future ego
    components. The batch loss is the mean of the per-sample losses.
    Predicted ego offsets enter the location decoder as constants.
    """
    B, T = batch.boxes.shape[:2]
    if B == 0:
        raise ContractError("loss needs a non-empty batch")
    horizon = batch.targets.shape[2]
    H = params.config.hidden_size
    He = params.config.ego_hidden_size
    N = B * T

    # ego model
    he = np.zeros((B, He))
    ego_enc_caches = []
    HE = np.zeros((B, T, He))
    for t in range(T):
        he, cache = ego_encode_step(params, he, batch.ego_in[:, t], with_cache=True)
        ego_enc_caches.append(cache)
        HE[:, t] = he
    ego_last = batch.ego_in.reshape(N, 3)
    ego_cum, ego_dec_caches = ego_decode(params, HE.reshape(N, He), ego_last, horizon, with_cache=True)
    ego_cum = ego_cum.reshape(B, T, horizon, 3)

    # location model
    hl = np.zeros((B, H))
    hm = np.zeros((B, H))
    enc_caches = []
    HL = np.zeros((B, T, H))
    HM = np.zeros((B, T, H))
    for t in range(T):
        hl, hm, cache = encode_step(params, hl, hm, batch.boxes[:, t], batch.feats[:, t], with_cache=True)
        enc_caches.append(cache)
        HL[:, t] = hl
        HM[:, t] = hm
    S, cat = fuse(params, HL.reshape(N, H), HM.reshape(N, H))
    ego_const = ego_cum.reshape(N, horizon, 3)
    cum, dec_caches = decode(params, S, ego_const, with_cache=True)
    pred = batch.boxes.reshape(N, 1, 4) + cum

    w_box = _per_sample_weights(batch.target_mask, 4)
    w_ego = _per_sample_weights(batch.ego_mask, 3)
    r = (pred - batch.targets.reshape(N, horizon, 4))
    m_box = batch.target_mask.reshape(N, horizon, 1)
    row_w_box = np.repeat(w_box, T)[:, None, None]
    box_loss = float(np.sum(smooth_l1(r) * m_box * row_w_box)) / B
    re = ego_cum - batch.ego_targets
    m_ego = batch.ego_mask[..., None]
    ego_loss = float(np.sum(re * re * m_ego * w_ego[:, None, None, None])) / B
    loss = box_loss + ego_weight * ego_loss
    if not need_grads:
        return loss, None

    grads = {k: np.zeros_like(v) for k, v in params.items()}

    def cell_grads(name):
        return {k: grads[f"{name}.{k}"] for k in ("W", "U", "bW", "bU")}

    # location decoder
    dpred = smooth_l1_grad(r) * m_box * row_w_box / B           # (N, horizon, 4)
    dinc = np.cumsum(dpred[:, ::-1], axis=1)[:, ::-1]            # d loss / d increment j
    g_dec = cell_grads("dec")
    Wd, Ud = params["dec.W"], params["dec.U"]
    dS = np.zeros((N, H))
    dh = np.zeros((N, H))
    for j in range(horizon - 1, -1, -1):
        cache, h_j = dec_caches[j]
        dout = OFFSET_SCALE * dinc[:, j]
        grads["head.W"] += h_j.T @ dout
        grads["head.b"] += dout.sum(axis=0)
        dh = dh + dout @ params["head.W"].T
        dinp, dh = gru_backward(Wd, Ud, dh, cache, g_dec)
        dS += dinp[:, :H]
    dS += dh

    # fusion
    dA = dS * (1.0 - S * S)
    grads["fuse.W"] += cat.T @ dA
    grads["fuse.b"] += dA.sum(axis=0)
    dcat = dA @ params["fuse.W"].T
    dHL = dcat[:, :H].reshape(B, T, H)
    dHM = dcat[:, H:].reshape(B, T, H)

    # encoders through time
    g_loc, g_mot = cell_grads("loc"), cell_grads("mot")
    Wl, Ul = params["loc.W"], params["loc.U"]
    Wm, Um = params["mot.W"], params["mot.U"]
    carry_l = np.zeros((B, H))
    carry_m = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        c_loc, c_mot = enc_caches[t]
        _, carry_l = gru_backward(Wl, Ul, dHL[:, t] + carry_l, c_loc, g_loc, need_dx=False)
        _, carry_m = gru_backward(Wm, Um, dHM[:, t] + carry_m, c_mot, g_mot, need_dx=False)

    # ego decoder and encoder
    dego = (2.0 * ego_weight / B) * re * m_ego * w_ego[:, None, None, None]
    dego = dego.reshape(N, horizon, 3)
    dinc_e = np.cumsum(dego[:, ::-1], axis=1)[:, ::-1]
    g_edec = cell_grads("ego_dec")
    We, Ue = params["ego_dec.W"], params["ego_dec.U"]
    dh = np.zeros((N, He))
    for j in range(horizon - 1, -1, -1):
        cache, h_j = ego_dec_caches[j]
        dout = dinc_e[:, j]
        grads["ego_head.W"] += h_j.T @ dout
        grads["ego_head.b"] += dout.sum(axis=0)
        dh = dh + dout @ params["ego_head.W"].T
        _, dh = gru_backward(We, Ue, dh, cache, g_edec, need_dx=False)
    dHE = dh.reshape(B, T, He)
    g_eenc = cell_grads("ego_enc")
    We, Ue = params["ego_enc.W"], params["ego_enc.U"]
    carry = np.zeros((B, He))
    for t in range(T - 1, -1, -1):
        _, carry = gru_backward(We, Ue, dHE[:, t] + carry, ego_enc_caches[t], g_eenc, need_dx=False)

    return loss, grads


def loss(params: ModelParams, batch: Batch, ego_weight: float = 1.0) -> float:
    return forward_backward(params, batch, ego_weight, need_grads=False)[0]


def train(params: ModelParams, batch: Batch, *, epochs: int, batch_size: int = 32,
          lr: float = 1e-4, decay: float = 0.99, eps: float = 1e-8, ego_weight: float = 1.0,
          rng: np.random.Generator, on_epoch: Callable[[int, float], None] | None = None):
    """Minibatch RMSprop over the windows in ``batch``. Returns (params, epoch losses)."""
    opt = RMSprop(lr, decay, eps)
    n = len(batch)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = np.sort(order[start:start + batch_size])
            mb = batch.subset(idx)
            value, grads = forward_backward(params, mb, ego_weight)
            params = opt.step(params, grads)
            total += value * len(idx)
        history.append(total / n)
        log.info("epoch %d loss %.6e", epoch + 1, history[-1])
        if on_epoch is not None:
            on_epoch(epoch + 1, history[-1])
    return params, history
