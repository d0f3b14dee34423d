"""Training-kernel backend selection.

The hot loop (per-record SGD) has two bit-identical implementations: a
numba-compiled kernel and a pure-numpy fallback. Selection order:

  * TRAINCHAIN_BACKEND=numpy forces the fallback;
  * TRAINCHAIN_BACKEND=numba requires numba and fails loudly without it;
  * unset: numba when importable, numpy otherwise.

Forward passes and evaluation are vectorized numpy shared by both backends,
so the flag only switches the training loop.
"""

from __future__ import annotations

import os
from typing import Callable

import numpy as np

from . import kernels_np

TrainEpochFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float], None]


def _resolve() -> tuple[str, TrainEpochFn]:
    choice = os.environ.get("TRAINCHAIN_BACKEND", "").strip().lower()
    if choice not in ("", "numba", "numpy"):
        raise ValueError(f"TRAINCHAIN_BACKEND must be 'numba' or 'numpy', got {choice!r}")
    if choice == "numpy":
        return "numpy", kernels_np.train_epoch
    try:
        from . import kernels_nb
    except ImportError:
        if choice == "numba":
            raise
        return "numpy", kernels_np.train_epoch
    return "numba", kernels_nb.train_epoch


_NAME, _TRAIN_EPOCH = _resolve()


def backend_name() -> str:
    return _NAME


def train_epoch(flat: np.ndarray, sizes: np.ndarray, X: np.ndarray, y: np.ndarray, lr: float) -> None:
    _TRAIN_EPOCH(flat, sizes, X, y, lr)


def train_epoch_fn(name: str) -> TrainEpochFn:
    """Explicit backend lookup, used by tests and the kernel benchmark."""
    if name == "numpy":
        return kernels_np.train_epoch
    if name == "numba":
        from . import kernels_nb

        return kernels_nb.train_epoch
    raise ValueError(f"unknown backend {name!r}")
