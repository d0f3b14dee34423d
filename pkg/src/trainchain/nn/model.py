"""Model parameters, reproducible initialization, and the canonical codec.

A model is a multi-layer perceptron with ReLU hidden units and a softmax
output. Weights live in one flat float64 vector (see layout.py); the
canonical serialization is that vector's little-endian bytes behind a small
header, so two models are equal exactly when their bytes are equal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import BadArchitecture, BadModel
from ..hashing import ZERO_DIGEST, Digest, hash_bytes
from .layout import param_offsets
from .rng import uniform_stream

MODEL_MAGIC = b"TCM1"

ACTIVATION = "relu+softmax"


@dataclass(frozen=True)
class TrainingParams:
    """Everything a verifier needs to reproduce a training run.

    `start_model_hash` names the model the run began from: the previous
    accepted block's model, or all zeroes for fresh initial weights drawn
    from `init_seed` (only the first mined block starts fresh, since the
    genesis block's model hash is itself all zeroes).
    """

    layer_sizes: tuple[int, ...]
    learning_rate: float
    epochs: int
    init_seed: int
    start_model_hash: Digest = ZERO_DIGEST
    activation: str = ACTIVATION

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise BadArchitecture(f"unusable layer sizes {self.layer_sizes}")
        if not self.learning_rate > 0:
            raise BadArchitecture("learning rate must be positive")
        if self.epochs < 0:
            raise BadArchitecture("epochs must be non-negative")
        if self.activation != ACTIVATION:
            raise BadArchitecture(f"unsupported activation {self.activation!r}")


@dataclass
class Model:
    layer_sizes: tuple[int, ...]
    flat: np.ndarray

    def __post_init__(self) -> None:
        _, _, total = param_offsets(np.asarray(self.layer_sizes, dtype=np.int64))
        if self.flat.shape != (total,) or self.flat.dtype != np.float64:
            raise BadArchitecture("parameter vector does not match layer sizes")

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self.layer_sizes, dtype=np.int64)

    def weights(self, l: int) -> np.ndarray:
        w_offs, _, _ = param_offsets(self.sizes)
        n_in, n_out = self.layer_sizes[l], self.layer_sizes[l + 1]
        return self.flat[w_offs[l] : w_offs[l] + n_out * n_in].reshape(n_out, n_in)

    def biases(self, l: int) -> np.ndarray:
        _, b_offs, _ = param_offsets(self.sizes)
        n_out = self.layer_sizes[l + 1]
        return self.flat[b_offs[l] : b_offs[l] + n_out]

    def copy(self) -> "Model":
        return Model(self.layer_sizes, self.flat.copy())


def init_weights(params: TrainingParams) -> Model:
    """Fresh model from `init_seed` alone.

    Layer l draws its weights from counter stream (init_seed, 2l+1) as
    uniforms in [0,1) mapped to ((u*2)-1)*limit with the Glorot limit
    sqrt(6/(fan_in+fan_out)); biases start at zero. Identical params give
    bit-identical models.
    """
    sizes = np.asarray(params.layer_sizes, dtype=np.int64)
    _, _, total = param_offsets(sizes)
    flat = np.zeros(total)
    model = Model(params.layer_sizes, flat)
    for l in range(len(params.layer_sizes) - 1):
        n_in, n_out = params.layer_sizes[l], params.layer_sizes[l + 1]
        limit = np.sqrt(6.0 / np.float64(n_in + n_out))
        u = uniform_stream(params.init_seed, 2 * l + 1, n_out * n_in)
        model.weights(l)[:] = ((u * 2.0) - 1.0).reshape(n_out, n_in) * limit
    return model


def serialize_model(model: Model) -> bytes:
    """Canonical bytes: magic, layer count, sizes, then the flat vector LE."""
    if not np.isfinite(model.flat).all():
        raise BadModel("model contains non-finite values")
    head = MODEL_MAGIC + struct.pack("<I", len(model.layer_sizes))
    head += struct.pack(f"<{len(model.layer_sizes)}I", *model.layer_sizes)
    return head + model.flat.astype("<f8", copy=False).tobytes()


def deserialize_model(data: bytes) -> Model:
    if len(data) < 8 or data[:4] != MODEL_MAGIC:
        raise BadModel("bad model magic")
    (n_layers,) = struct.unpack_from("<I", data, 4)
    sizes_end = 8 + 4 * n_layers
    if len(data) < sizes_end:
        raise BadModel("truncated layer sizes")
    layer_sizes = struct.unpack_from(f"<{n_layers}I", data, 8)
    body = data[sizes_end:]
    if len(body) % 8:
        raise BadModel("parameter bytes truncated")
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    _, _, total = param_offsets(np.asarray(layer_sizes, dtype=np.int64))
    if flat.shape != (total,):
        raise BadModel("parameter byte length does not match layer sizes")
    if not np.isfinite(flat).all():
        raise BadModel("model contains non-finite values")
    return Model(tuple(int(s) for s in layer_sizes), flat)


def model_hash(model: Model) -> Digest:
    return hash_bytes(serialize_model(model))
