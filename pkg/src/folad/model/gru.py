"""Gated recurrent unit cell with an explicit backward pass.

Gate layout along the last axis is [reset | update | candidate]::

    r = sigmoid(x W_r + bW_r + h U_r + bU_r)
    z = sigmoid(x W_z + bW_z + h U_z + bU_z)
    n = tanh(x W_n + bW_n + r * (h U_n + bU_n))
    h' = (1 - z) * n + z * h
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ContractError


def sigmoid(x):
    # split by sign so that exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cell_shapes(n_in: int, n_hidden: int) -> dict[str, tuple[int, ...]]:
    return {
        "W": (n_in, 3 * n_hidden),
        "U": (n_hidden, 3 * n_hidden),
        "bW": (3 * n_hidden,),
        "bU": (3 * n_hidden,),
    }


def _check(W, U, x, h):
    if x.shape[-1] != W.shape[-2] or h.shape[-1] != U.shape[-2] or W.shape[-1] != U.shape[-1]:
        raise ContractError(
            f"GRU shape mismatch: x {x.shape}, h {h.shape}, W {W.shape}, U {U.shape}")


def gru_forward(W, U, bW, bU, x, h):
    """One step for a batch (or a single vector). Returns (h_new, cache)."""
    _check(W, U, x, h)
    n_hidden = U.shape[-2]
    gx = x @ W + bW
    gh = h @ U + bU
    rz = sigmoid(gx[..., :2 * n_hidden] + gh[..., :2 * n_hidden])
    r = rz[..., :n_hidden]
    z = rz[..., n_hidden:]
    ghn = gh[..., 2 * n_hidden:]
    n = np.tanh(gx[..., 2 * n_hidden:] + r * ghn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (x, h, r, z, n, ghn)


def gru_step(W, U, bW, bU, x, h):
    return gru_forward(W, U, bW, bU, x, h)[0]


def gru_backward(W, U, dh_new, cache, grads, need_dx=True):
    """Backpropagate one step.

    ``grads`` is a dict with keys W, U, bW, bU that is accumulated in place.
    Returns (dx, dh_prev); dx is None when ``need_dx`` is false.
    """
    x, h, r, z, n, ghn = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dh = dh_new * z
    dan = dn * (1.0 - n * n)
    dr = dan * ghn
    dar = dr * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dgx = np.concatenate([dar, daz, dan], axis=-1)
    dgh = np.concatenate([dar, daz, dan * r], axis=-1)
    if x.ndim == 1:
        grads["W"] += np.outer(x, dgx)
        grads["U"] += np.outer(h, dgh)
        grads["bW"] += dgx
        grads["bU"] += dgh
    else:
        grads["W"] += x.T @ dgx
        grads["U"] += h.T @ dgh
        grads["bW"] += dgx.sum(axis=0)
        grads["bU"] += dgh.sum(axis=0)
    dh = dh + dgh @ U.T
    dx = dgx @ W.T if need_dx else None
    return dx, dh
