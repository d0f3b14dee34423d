"""Backend bit-identity and the shared forward/evaluation path."""

import numpy as np
import pytest

from trainchain.nn import backend, kernels_np
from trainchain.nn.model import Model, TrainingParams, init_weights
from trainchain.nn.rng import uniform_stream
from trainchain.nn.task import generate_task
from trainchain.nn.train import evaluate, feed_forward

pytestmark = pytest.mark.filterwarnings("ignore::DeprecationWarning")


def _random_task(seed, n, d, c):
    tr, _ = generate_task(seed, n, 8, 1, input_dim=d, num_classes=c, noise=1.1)
    return tr


SHAPES = [
    (2, 16, 16, 3),
    (2, 64, 64, 4),
    (3, 8, 2),
    (2, 3),  # single linear layer
    (4, 5, 5, 5, 2),
]


class TestBackendBitIdentity:
    @pytest.mark.parametrize("shape", SHAPES)
    def test_train_epochs_identical(self, shape):
        numba_fn = pytest.importorskip("numba") and backend.train_epoch_fn("numba")
        np_fn = backend.train_epoch_fn("numpy")
        task = _random_task(11, 48, shape[0], shape[-1])
        params = TrainingParams(shape, 0.02, 0, 5)
        base = init_weights(params)
        a = base.flat.copy()
        b = base.flat.copy()
        for _ in range(3):
            np_fn(a, base.sizes, task.X, task.y, 0.02)
            numba_fn(b, base.sizes, task.X, task.y, 0.02)
        assert a.tobytes() == b.tobytes(), "backends diverged bitwise"

    def test_env_flag_selects_backend(self, monkeypatch):
        import importlib

        from trainchain.nn import backend as backend_mod

        monkeypatch.setenv("TRAINCHAIN_BACKEND", "numpy")
        reloaded = importlib.reload(backend_mod)
        assert reloaded.backend_name() == "numpy"
        monkeypatch.delenv("TRAINCHAIN_BACKEND")
        importlib.reload(backend_mod)

    def test_whole_scenario_identical_across_backends(self, tmp_path):
        """The env flag swaps the training kernel without changing a single
        byte of the chain: same dump, same metrics, under either backend."""
        import os
        import subprocess
        import sys
        from pathlib import Path

        pytest.importorskip("numba")
        scenario = Path(__file__).parent.parent / "scenarios" / "quick.toml"
        outs = {}
        for name in ("numba", "numpy"):
            out_dir = tmp_path / name
            env = dict(os.environ, TRAINCHAIN_BACKEND=name)
            env["PYTHONPATH"] = str(Path(__file__).parent.parent / "src")
            proc = subprocess.run(
                [sys.executable, "-m", "trainchain.cli", "run", "--config", str(scenario),
                 "--out-dir", str(out_dir)],
                capture_output=True, text=True, env=env, timeout=600,
            )
            assert proc.returncode == 0, proc.stderr
            outs[name] = out_dir
        for artifact in ("chain.json", "metrics.csv", "trace.jsonl", "summary.json"):
            a = (outs["numba"] / artifact).read_bytes()
            b = (outs["numpy"] / artifact).read_bytes()
            assert a == b, f"{artifact} differs between backends"


class TestForward:
    def test_zero_model_two_classes_is_even_split(self):
        params = TrainingParams((2, 2), 0.1, 0, 1)
        model = init_weights(params)
        model.flat[:] = 0.0
        out = feed_forward(model, np.array([0.3, -0.7]))
        assert out.tolist() == [0.5, 0.5]

    def test_scores_sum_to_one(self):
        task = _random_task(3, 4, 2, 4)
        for seed in range(50):
            params = TrainingParams((2, 16, 16, 4), 0.1, 0, seed)
            model = init_weights(params)
            probs = kernels_np.forward_batch(model.flat, model.sizes, task.X)
            assert np.all(np.abs(probs.sum(axis=1) - 1.0) <= 1e-9)

    def test_single_neuron_hand_softmax(self):
        # one linear layer, hand-set weights; oracle computed by hand
        params = TrainingParams((2, 2), 0.1, 0, 1)
        model = init_weights(params)
        model.weights(0)[:] = np.array([[1.0, -1.0], [0.5, 2.0]])
        model.biases(0)[:] = np.array([0.1, -0.2])
        x = np.array([0.4, 0.6])
        z0 = 1.0 * 0.4 + (-1.0) * 0.6 + 0.1
        z1 = 0.5 * 0.4 + 2.0 * 0.6 + (-0.2)
        import math

        m = max(z0, z1)
        e0, e1 = math.exp(z0 - m), math.exp(z1 - m)
        want = np.array([e0 / (e0 + e1), e1 / (e0 + e1)])
        got = feed_forward(model, x)
        assert np.allclose(got, want, rtol=1e-12, atol=0)

    def test_batch_forward_matches_single(self):
        task = _random_task(5, 16, 2, 3)
        params = TrainingParams((2, 16, 16, 3), 0.1, 0, 2)
        model = init_weights(params)
        batch = kernels_np.forward_batch(model.flat, model.sizes, task.X)
        for i in range(len(task)):
            single = kernels_np.forward_batch(model.flat, model.sizes, task.X[i : i + 1])
            assert batch[i].tobytes() == single[0].tobytes()

    def test_dimension_mismatch_raises(self):
        from trainchain.errors import BadInput

        params = TrainingParams((2, 2), 0.1, 0, 1)
        model = init_weights(params)
        with pytest.raises(BadInput):
            feed_forward(model, np.array([1.0, 2.0, 3.0]))


class TestEvaluateKernel:
    def test_order_free(self):
        task = _random_task(6, 64, 2, 3)
        params = TrainingParams((2, 8, 3), 0.1, 0, 3)
        model = init_weights(params)
        fwd = np.argsort(uniform_stream(1, 1, len(task)))
        shuffled_X = task.X[fwd]
        shuffled_y = task.y[fwd]
        a = kernels_np.evaluate_count(model.flat, model.sizes, task.X, task.y)
        b = kernels_np.evaluate_count(model.flat, model.sizes, shuffled_X, shuffled_y)
        assert a == b

    def test_argmax_tie_breaks_to_lowest_class(self):
        params = TrainingParams((2, 2), 0.1, 0, 1)
        model = init_weights(params)
        model.flat[:] = 0.0  # all scores equal
        X = np.array([[1.0, 2.0], [3.0, 4.0]])
        assert kernels_np.evaluate_count(model.flat, model.sizes, X, np.array([0, 0])) == 2
        assert kernels_np.evaluate_count(model.flat, model.sizes, X, np.array([1, 1])) == 0
