"""Finite-difference audit of the explicit gradients.

The oracle evaluates the loss for many perturbed copies of the parameters
at once: every tensor gets a leading model axis and the forward pass is
rewritten with broadcasting matmuls. It shares only the GRU cell with the
training code, so a slip in either forward or backward shows up here.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ContractError
from .gru import gru_step
from .network import OFFSET_SCALE, ModelParams, ego_decode, ego_encode_step
from .training import Batch, forward_backward, smooth_l1


def predicted_ego(params: ModelParams, batch: Batch) -> np.ndarray:
    """Ego offsets (B, T, horizon, 3) that the location decoder consumes."""
    B, T = batch.ego_in.shape[:2]
    horizon = batch.targets.shape[2]
    h = np.zeros((B, params.config.ego_hidden_size))
    states = []
    for t in range(T):
        h = ego_encode_step(params, h, batch.ego_in[:, t])
        states.append(h)
    HE = np.stack(states, axis=1).reshape(B * T, -1)
    return ego_decode(params, HE, batch.ego_in.reshape(B * T, 3), horizon).reshape(B, T, horizon, 3)


def _stacked_cell(t, name):
    return (t[f"{name}.W"], t[f"{name}.U"], t[f"{name}.bW"][:, None, :], t[f"{name}.bU"][:, None, :])


def stacked_loss(stack: dict[str, np.ndarray], batch: Batch, ego_frozen: np.ndarray,
                 ego_weight: float = 1.0) -> np.ndarray:
    """Losses (M,) for M parameter sets stacked along axis 0 of every tensor."""
    M = next(iter(stack.values())).shape[0]
    B, T = batch.boxes.shape[:2]
    horizon = batch.targets.shape[2]
    N = B * T
    H = stack["loc.U"].shape[1]
    He = stack["ego_enc.U"].shape[1]

    he = np.zeros((M, B, He))
    seq = []
    for t in range(T):
        he = gru_step(*_stacked_cell(stack, "ego_enc"), batch.ego_in[:, t], he)
        seq.append(he)
    h = np.stack(seq, axis=2).reshape(M, N, He)
    x = batch.ego_in.reshape(N, 3)
    total = np.zeros((M, N, 3))
    ego_cum = []
    for _ in range(horizon):
        h = gru_step(*_stacked_cell(stack, "ego_dec"), x, h)
        total = total + h @ stack["ego_head.W"] + stack["ego_head.b"][:, None, :]
        ego_cum.append(total)
    ego_cum = np.stack(ego_cum, axis=2).reshape(M, B, T, horizon, 3)

    hl = np.zeros((M, B, H))
    hm = np.zeros((M, B, H))
    sl, sm = [], []
    for t in range(T):
        hl = gru_step(*_stacked_cell(stack, "loc"), batch.boxes[:, t], hl)
        hm = gru_step(*_stacked_cell(stack, "mot"), batch.feats[:, t], hm)
        sl.append(hl)
        sm.append(hm)
    cat = np.concatenate([np.stack(sl, axis=2), np.stack(sm, axis=2)], axis=-1).reshape(M, N, 2 * H)
    S = np.tanh(cat @ stack["fuse.W"] + stack["fuse.b"][:, None, :])
    ego_in = np.broadcast_to(ego_frozen.reshape(1, N, horizon, 3), (M, N, horizon, 3))
    h = S
    total = np.zeros((M, N, 4))
    preds = []
    for j in range(horizon):
        h = gru_step(*_stacked_cell(stack, "dec"), np.concatenate([S, ego_in[:, :, j]], axis=-1), h)
        total = total + OFFSET_SCALE * (h @ stack["head.W"] + stack["head.b"][:, None, :])
        preds.append(total)
    pred = batch.boxes.reshape(1, N, 1, 4) + np.stack(preds, axis=2)

    box_mask = batch.target_mask.reshape(B, T * horizon)
    ego_mask = batch.ego_mask.reshape(B, T * horizon)
    r = (pred - batch.targets.reshape(1, N, horizon, 4)).reshape(M, B, T * horizon, 4)
    box_terms = (smooth_l1(r) * box_mask[None, :, :, None]).sum(axis=(2, 3))
    box = (box_terms / np.maximum(box_mask.sum(axis=1) * 4, 1)).mean(axis=1)
    re = (ego_cum - batch.ego_targets[None]).reshape(M, B, T * horizon, 3)
    ego_terms = (re * re * ego_mask[None, :, :, None]).sum(axis=(2, 3))
    ego = (ego_terms / np.maximum(ego_mask.sum(axis=1) * 3, 1)).mean(axis=1)
    return box + ego_weight * ego


def numeric_gradient(params: ModelParams, batch: Batch, eps: float = 1e-4,
                     ego_weight: float = 1.0, chunk: int = 256) -> dict[str, np.ndarray]:
    """Central differences on every element, with the decoder's ego input held fixed."""
    names = list(params.tensors)
    sizes = [params[n].size for n in names]
    theta = np.concatenate([params[n].ravel() for n in names])
    P = theta.size
    ego_frozen = predicted_ego(params, batch)
    grad = np.empty(P)
    for start in range(0, P, chunk):
        idx = np.arange(start, min(start + chunk, P))
        k = len(idx)
        stacked = np.repeat(theta[None, :], 2 * k, axis=0)
        stacked[np.arange(k), idx] += eps
        stacked[k + np.arange(k), idx] -= eps
        stack = {}
        offset = 0
        for n, size in zip(names, sizes):
            stack[n] = stacked[:, offset:offset + size].reshape(2 * k, *params[n].shape)
            offset += size
        losses = stacked_loss(stack, batch, ego_frozen, ego_weight)
        grad[idx] = (losses[:k] - losses[k:]) / (2.0 * eps)
    out = {}
    offset = 0
    for n, size in zip(names, sizes):
        out[n] = grad[offset:offset + size].reshape(params[n].shape)
        offset += size
    return out


def max_relative_error(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]) -> float:
    worst = 0.0
    for name, ga in analytic.items():
        gn = numeric[name]
        if ga.size:
            denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
            worst = max(worst, float(np.max(np.abs(ga - gn) / denom)))
    return worst


def grad_check(params: ModelParams, batch: Batch, eps: float = 1e-4, ego_weight: float = 1.0,
               analytic: dict[str, np.ndarray] | None = None) -> float:
    """Max relative error between explicit and finite-difference gradients.

    ``analytic`` may be supplied to audit an externally computed gradient.
    """
    if params.config.hidden_size > 16:
        raise ContractError("grad_check is limited to hidden_size <= 16")
    if analytic is None:
        _, analytic = forward_backward(params, batch, ego_weight)
    numeric = numeric_gradient(params, batch, eps, ego_weight)
    return max_relative_error(analytic, numeric)
