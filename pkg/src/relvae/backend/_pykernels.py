"""Pure-numpy implementations of the hot kernels.

These are the reference semantics for the compiled extension in
``_ckernels.pyx``; both expose the same functions and the backend package
picks one at import time.  Everything operates on plain ndarrays (float32 or
float64) and is free of any autodiff bookkeeping.

Conventions:
  * conv1d slides over the time axis of ``x (B, m, d)`` with a filter bank
    ``w (win, d, f)``.  ``same`` padding zero-pads (win-1)//2 on the left and
    win//2 on the right, preserving length m.
  * LSTM gate activations are packed ``[i | f | o | g]`` along the last axis.
"""

from __future__ import annotations

import numpy as np

NAME = "python"


def _pad_same(x: np.ndarray, win: int) -> np.ndarray:
    left = (win - 1) // 2
    right = win // 2
    if left == 0 and right == 0:
        return x
    return np.pad(x, ((0, 0), (left, right), (0, 0)))


def _im2col(x: np.ndarray, win: int) -> np.ndarray:
    # (B, m, d) -> (B, L, win*d) with L = m - win + 1
    length = x.shape[1] - win + 1
    return np.concatenate([x[:, i : i + length, :] for i in range(win)], axis=2)


def conv1d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray, same: bool) -> np.ndarray:
    win, d, f = w.shape
    xp = _pad_same(x, win) if same else x
    cols = _im2col(xp, win)
    out = cols @ w.reshape(win * d, f)
    out += b
    return out


def conv1d_backward(x: np.ndarray, w: np.ndarray, same: bool, grad_out: np.ndarray):
    win, d, f = w.shape
    xp = _pad_same(x, win) if same else x
    batch, length = grad_out.shape[0], grad_out.shape[1]

    cols = _im2col(xp, win).reshape(batch * length, win * d)
    gflat = grad_out.reshape(batch * length, f)

    gw = (cols.T @ gflat).reshape(win, d, f)
    gb = gflat.sum(axis=0)

    gcols = (gflat @ w.reshape(win * d, f).T).reshape(batch, length, win, d)
    gxp = np.zeros_like(xp)
    for i in range(win):
        gxp[:, i : i + length, :] += gcols[:, :, i, :]
    if same:
        left = (win - 1) // 2
        gx = gxp[:, left : left + x.shape[1], :]
    else:
        gx = gxp
    return np.ascontiguousarray(gx), gw, gb


def lstm_cell_forward(x, h_prev, c_prev, w, u, b):
    hidden = h_prev.shape[1]
    pre = x @ w + h_prev @ u + b
    gates = np.empty_like(pre)
    gates[:, : 3 * hidden] = 1.0 / (1.0 + np.exp(-pre[:, : 3 * hidden]))
    gates[:, 3 * hidden :] = np.tanh(pre[:, 3 * hidden :])
    gi = gates[:, :hidden]
    gf = gates[:, hidden : 2 * hidden]
    go = gates[:, 2 * hidden : 3 * hidden]
    gg = gates[:, 3 * hidden :]
    c_new = gf * c_prev + gi * gg
    h_new = go * np.tanh(c_new)
    return h_new, c_new, gates


def lstm_cell_backward(x, h_prev, c_prev, w, u, gates, c_new, grad_h, grad_c):
    hidden = h_prev.shape[1]
    gi = gates[:, :hidden]
    gf = gates[:, hidden : 2 * hidden]
    go = gates[:, 2 * hidden : 3 * hidden]
    gg = gates[:, 3 * hidden :]

    tc = np.tanh(c_new)
    d_o = grad_h * tc
    d_c = grad_c + grad_h * go * (1.0 - tc * tc)

    dpre = np.empty_like(gates)
    dpre[:, :hidden] = d_c * gg * gi * (1.0 - gi)
    dpre[:, hidden : 2 * hidden] = d_c * c_prev * gf * (1.0 - gf)
    dpre[:, 2 * hidden : 3 * hidden] = d_o * go * (1.0 - go)
    dpre[:, 3 * hidden :] = d_c * gi * (1.0 - gg * gg)

    gx = dpre @ w.T
    gh_prev = dpre @ u.T
    gc_prev = d_c * gf
    gw = x.T @ dpre
    gu = h_prev.T @ dpre
    gb = dpre.sum(axis=0)
    return gx, gh_prev, gc_prev, gw, gu, gb


def scatter_add_rows(table: np.ndarray, indices: np.ndarray, rows: np.ndarray) -> None:
    """table[indices[n]] += rows[n], accumulating duplicate indices."""
    np.add.at(table, indices, rows)
