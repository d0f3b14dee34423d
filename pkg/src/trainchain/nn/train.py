"""Training, inference, and evaluation on top of the kernel backends."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..accuracy import Accuracy
from ..errors import BadArchitecture, BadInput, Diverged, EmptyDataset
from . import backend, kernels_np
from .model import Model, TrainingParams, init_weights
from .task import Dataset

EpochCallback = Callable[[int, np.ndarray], None]


def _check_task_shape(params: TrainingParams, dataset: Dataset) -> None:
    if params.layer_sizes[0] != dataset.input_dim:
        raise BadArchitecture(
            f"input layer {params.layer_sizes[0]} != dataset input_dim {dataset.input_dim}"
        )
    if params.layer_sizes[-1] != dataset.num_classes:
        raise BadArchitecture(
            f"output layer {params.layer_sizes[-1]} != dataset num_classes {dataset.num_classes}"
        )


def train(
    params: TrainingParams,
    dataset: Dataset,
    start_model: Optional[Model] = None,
    epochs_to_run: Optional[int] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> Model:
    """Plain sequential SGD for `epochs_to_run` full passes over the dataset.

    Record order, update order, and every reduction order are fixed, so the
    result is bit-identical across runs, machines, and kernel backends. With
    no start model, training begins from init_weights(params).

    `on_epoch(epoch_index, flat)` is called after each epoch with a read-only
    view of the parameter vector (used for checkpoint scoring; it must not
    mutate).
    """
    _check_task_shape(params, dataset)
    epochs = params.epochs if epochs_to_run is None else epochs_to_run
    if epochs < 0:
        raise ValueError("epochs_to_run must be non-negative")

    if start_model is None:
        model = init_weights(params)
    else:
        if start_model.layer_sizes != params.layer_sizes:
            raise BadArchitecture(
                f"start model {start_model.layer_sizes} incompatible with params {params.layer_sizes}"
            )
        model = start_model.copy()

    sizes = model.sizes
    flat = model.flat
    for e in range(epochs):
        backend.train_epoch(flat, sizes, dataset.X, dataset.y, params.learning_rate)
        if not np.isfinite(flat).all():
            raise Diverged(f"non-finite parameters after epoch {e + 1}")
        if on_epoch is not None:
            on_epoch(e + 1, flat)
    return model


def feed_forward(model: Model, features: np.ndarray) -> np.ndarray:
    """Softmax class scores for one feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (model.layer_sizes[0],):
        raise BadInput(f"expected {model.layer_sizes[0]} features, got shape {x.shape}")
    return kernels_np.forward_batch(model.flat, model.sizes, x[None, :])[0]


def evaluate(model: Model, test_set: Dataset) -> Accuracy:
    """Exact accuracy: argmax prediction (lowest class index on ties)."""
    if len(test_set) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    if model.layer_sizes[0] != test_set.input_dim or model.layer_sizes[-1] != test_set.num_classes:
        raise BadInput("model and dataset shapes do not match")
    correct = kernels_np.evaluate_count(model.flat, model.sizes, test_set.X, test_set.y)
    return Accuracy(correct, len(test_set))


def dataset_loss(model: Model, dataset: Dataset) -> float:
    """Mean cross-entropy, for diagnostics only (not part of the bit contract)."""
    probs = kernels_np.forward_batch(model.flat, model.sizes, dataset.X)
    picked = probs[np.arange(len(dataset)), dataset.y]
    return float(np.mean(-np.log(np.maximum(picked, 1e-300))))
