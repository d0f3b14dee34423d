"""Flat parameter layout shared by both kernel backends.

A model's parameters live in one contiguous float64 vector: for each weight
layer l (connecting sizes[l] -> sizes[l+1]) the weight matrix W_l is stored
row-major (one row per output unit), immediately followed by the bias vector
b_l. This is also the exact byte order of the canonical model serialization.
"""

from __future__ import annotations

import numpy as np


def param_offsets(sizes: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """(weight offsets, bias offsets, total length) for a layer-size vector."""
    n_layers = len(sizes) - 1
    w_offs = np.zeros(n_layers, dtype=np.int64)
    b_offs = np.zeros(n_layers, dtype=np.int64)
    off = 0
    for l in range(n_layers):
        w_offs[l] = off
        off += int(sizes[l + 1]) * int(sizes[l])
        b_offs[l] = off
        off += int(sizes[l + 1])
    return w_offs, b_offs, off


def activation_offsets(sizes: np.ndarray) -> tuple[np.ndarray, int]:
    """Offsets of each post-input layer inside a shared activation buffer."""
    n_layers = len(sizes) - 1
    offs = np.zeros(n_layers, dtype=np.int64)
    off = 0
    for l in range(n_layers):
        offs[l] = off
        off += int(sizes[l + 1])
    return offs, off
