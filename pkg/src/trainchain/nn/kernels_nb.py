"""Numba-compiled training kernel.

Mirrors kernels_np.train_epoch operation for operation; the scalar loops
here spell out the reduction orders that the numpy path performs with
vectorized elementwise updates. Bit-identity between the two backends is
asserted by the test suite and by `trainchain bench --kind kernels`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .detmath import EXP_CLAMP_HI, EXP_CLAMP_LO, EXP_COEFFS, INV_LN2, LN2_HI, LN2_LO
from .layout import activation_offsets, param_offsets

C0, C1, C2, C3, C4, C5, C6, C7, C8, C9, C10, C11, C12, C13 = EXP_COEFFS


@njit(cache=True)
def det_exp_scalar(x: float) -> float:
    if np.isnan(x):
        return np.nan
    if x > EXP_CLAMP_HI:
        x = EXP_CLAMP_HI
    if x < EXP_CLAMP_LO:
        x = EXP_CLAMP_LO
    kf = np.floor(x * INV_LN2 + 0.5)
    r = (x - kf * LN2_HI) - kf * LN2_LO
    p = C13
    p = p * r + C12
    p = p * r + C11
    p = p * r + C10
    p = p * r + C9
    p = p * r + C8
    p = p * r + C7
    p = p * r + C6
    p = p * r + C5
    p = p * r + C4
    p = p * r + C3
    p = p * r + C2
    p = p * r + C1
    p = p * r + C0
    return math.ldexp(p, int(kf))


@njit(cache=True)
def _train_epoch_jit(flat, sizes, w_offs, b_offs, act_offs, X, y, lr, zbuf, abuf, dbuf, dbuf2):
    n_layers = sizes.shape[0] - 1
    last = n_layers - 1
    n_records = X.shape[0]
    for i in range(n_records):
        # forward pass, saving pre-activations (zbuf) and activations (abuf)
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            wo = w_offs[l]
            bo = b_offs[l]
            zo = act_offs[l]
            for j in range(n_out):
                acc = flat[bo + j]
                row = wo + j * n_in
                if l == 0:
                    for k in range(n_in):
                        acc += flat[row + k] * X[i, k]
                else:
                    ao = act_offs[l - 1]
                    for k in range(n_in):
                        acc += flat[row + k] * abuf[ao + k]
                zbuf[zo + j] = acc
            if l < last:
                for j in range(n_out):
                    zv = zbuf[zo + j]
                    abuf[zo + j] = zv if zv > 0.0 else 0.0
        # softmax -> output delta
        n_cls = sizes[n_layers]
        oo = act_offs[last]
        m = zbuf[oo]
        for j in range(1, n_cls):
            if zbuf[oo + j] > m:
                m = zbuf[oo + j]
        s = det_exp_scalar(zbuf[oo] - m)
        dbuf[0] = s
        for j in range(1, n_cls):
            ev = det_exp_scalar(zbuf[oo + j] - m)
            dbuf[j] = ev
            s = s + ev
        for j in range(n_cls):
            dbuf[j] = dbuf[j] / s
        dbuf[y[i]] -= 1.0
        # backward pass; deltas use pre-update weights
        for l in range(last, -1, -1):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            wo = w_offs[l]
            bo = b_offs[l]
            if l > 0:
                for k in range(n_in):
                    dbuf2[k] = 0.0
                for j in range(n_out):
                    d = dbuf[j]
                    row = wo + j * n_in
                    for k in range(n_in):
                        dbuf2[k] += flat[row + k] * d
                zo_prev = act_offs[l - 1]
                for k in range(n_in):
                    if not (zbuf[zo_prev + k] > 0.0):
                        dbuf2[k] = 0.0
            for j in range(n_out):
                d = dbuf[j]
                row = wo + j * n_in
                if l == 0:
                    for k in range(n_in):
                        t = d * X[i, k]
                        flat[row + k] -= lr * t
                else:
                    ao = act_offs[l - 1]
                    for k in range(n_in):
                        t = d * abuf[ao + k]
                        flat[row + k] -= lr * t
                flat[bo + j] -= lr * d
            if l > 0:
                for k in range(n_in):
                    dbuf[k] = dbuf2[k]


def train_epoch(flat: np.ndarray, sizes: np.ndarray, X: np.ndarray, y: np.ndarray, lr: float) -> None:
    """One in-place SGD epoch; same contract as kernels_np.train_epoch."""
    w_offs, b_offs, _ = param_offsets(sizes)
    act_offs, act_len = activation_offsets(sizes)
    width = int(sizes[1:].max())
    _train_epoch_jit(
        flat,
        sizes,
        w_offs,
        b_offs,
        act_offs,
        X,
        y,
        lr,
        np.empty(act_len),
        np.empty(act_len),
        np.empty(width),
        np.empty(width),
    )
