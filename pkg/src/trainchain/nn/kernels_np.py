"""Pure-numpy training kernel and shared forward/evaluation code.

The summation order is part of the determinism contract:

  * pre-activations accumulate over the input index k in ascending order,
    starting from the bias;
  * back-propagated deltas accumulate over the output index j in ascending
    order, starting from zero;
  * the softmax denominator accumulates over the class index in ascending
    order.

The vectorized expressions below perform exactly those scalar operations
elementwise (loops run over the reduction index only), so this path is
bit-identical to the numba kernels, which spell out the same loops.
"""

from __future__ import annotations

import numpy as np

from .detmath import det_exp
from .layout import param_offsets


def _layer_views(flat: np.ndarray, sizes: np.ndarray):
    w_offs, b_offs, _ = param_offsets(sizes)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        n_in, n_out = int(sizes[l]), int(sizes[l + 1])
        weights.append(flat[w_offs[l] : w_offs[l] + n_out * n_in].reshape(n_out, n_in))
        biases.append(flat[b_offs[l] : b_offs[l] + n_out])
    return weights, biases


def forward_batch(flat: np.ndarray, sizes: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Softmax class scores for every row of X, shape (n, num_classes)."""
    weights, biases = _layer_views(flat, sizes)
    n = X.shape[0]
    A = X
    Z = None
    last = len(sizes) - 2
    for l in range(len(sizes) - 1):
        W, b = weights[l], biases[l]
        Z = np.broadcast_to(b, (n, b.shape[0])).copy()
        for k in range(int(sizes[l])):
            Z += W[:, k][None, :] * A[:, k][:, None]
        if l < last:
            A = np.where(Z > 0.0, Z, 0.0)
    m = np.max(Z, axis=1)
    E = det_exp(Z - m[:, None])
    S = E[:, 0].copy()
    for j in range(1, E.shape[1]):
        S = S + E[:, j]
    return E / S[:, None]


def evaluate_count(flat: np.ndarray, sizes: np.ndarray, X: np.ndarray, y: np.ndarray) -> int:
    """Number of rows whose argmax score (lowest index on ties) equals y."""
    probs = forward_batch(flat, sizes, X)
    return int(np.sum(np.argmax(probs, axis=1) == y))


def train_epoch(
    flat: np.ndarray,
    sizes: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    lr: float,
) -> None:
    """One full pass of per-record SGD with cross-entropy, in place.

    Records are visited in stored order, one update per record; deltas are
    propagated through the pre-update weights of each layer.
    """
    weights, biases = _layer_views(flat, sizes)
    n_layers = len(sizes) - 1
    last = n_layers - 1
    for i in range(X.shape[0]):
        acts = [X[i]]
        zs = []
        for l in range(n_layers):
            W, b = weights[l], biases[l]
            a_prev = acts[-1]
            z = b.copy()
            for k in range(int(sizes[l])):
                z += W[:, k] * a_prev[k]
            zs.append(z)
            if l < last:
                acts.append(np.where(z > 0.0, z, 0.0))
        z_out = zs[-1]
        e = det_exp(z_out - np.max(z_out))
        s = e[0]
        for j in range(1, e.shape[0]):
            s = s + e[j]
        delta = e / s
        delta[y[i]] -= 1.0
        for l in range(last, -1, -1):
            W, b = weights[l], biases[l]
            if l > 0:
                d_prev = np.zeros(int(sizes[l]))
                for j in range(int(sizes[l + 1])):
                    d_prev += W[j, :] * delta[j]
                d_prev = np.where(zs[l - 1] > 0.0, d_prev, 0.0)
            W -= lr * (delta[:, None] * acts[l][None, :])
            b -= lr * delta
            if l > 0:
                delta = d_prev


def record_gradient(
    flat: np.ndarray, sizes: np.ndarray, x: np.ndarray, y: int
) -> np.ndarray:
    """Cross-entropy gradient for a single record, in flat-parameter layout."""
    weights, biases = _layer_views(flat, sizes)
    grad = np.zeros_like(flat)
    gw, gb = _layer_views(grad, sizes)
    n_layers = len(sizes) - 1
    last = n_layers - 1
    acts = [x]
    zs = []
    for l in range(n_layers):
        z = biases[l].copy()
        for k in range(int(sizes[l])):
            z += weights[l][:, k] * acts[-1][k]
        zs.append(z)
        if l < last:
            acts.append(np.where(z > 0.0, z, 0.0))
    e = det_exp(zs[-1] - np.max(zs[-1]))
    delta = e / e.sum()
    delta[y] -= 1.0
    for l in range(last, -1, -1):
        gw[l][:] = delta[:, None] * acts[l][None, :]
        gb[l][:] = delta
        if l > 0:
            d_prev = weights[l].T @ delta
            delta = np.where(zs[l - 1] > 0.0, d_prev, 0.0)
    return grad


def record_loss(flat: np.ndarray, sizes: np.ndarray, x: np.ndarray, y: int) -> float:
    """Cross-entropy of a single record (diagnostic precision)."""
    probs = forward_batch(flat, sizes, x[None, :])
    return float(-np.log(max(probs[0, y], 1e-300)))
