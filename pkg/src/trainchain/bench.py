"""Microbenchmarks for the protocol's non-training overheads.

Covers the extra work the consensus adds on top of training: hashing,
sorting candidates, hash-table bookkeeping, and model validation, plus a
comparison of the two training-kernel backends. Reference timings from
prior published measurements on different hardware are printed as context
only; they are explicitly non-binding.
"""

from __future__ import annotations

import csv
import hashlib
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .nn import backend, kernels_np
from .nn.model import TrainingParams, init_weights
from .nn.rng import uint64_stream, uniform_stream
from .nn.task import generate_task
from .nn.train import evaluate

# Non-binding reference points (different hardware; context only).
REFERENCE_MS = {
    "hash_ms_per_mb": 5.9,
    "sort_ms_per_1m": 154.9,
    "hashtable_insert_ms_per_1m": 89.75,
    "hashtable_read_ms_per_1m": 16.25,
    "validate_ms": 1960.0,
}

HASHTABLE_LOAD_FACTOR = 0.38


@dataclass
class BenchRow:
    kind: str
    metric: str
    value_ms: float
    std_ms: float
    n: int
    trials: int
    reference_ms: Optional[float]
    note: str = ""

    def as_csv_row(self) -> list:
        return [
            self.kind,
            self.metric,
            f"{self.value_ms:.4f}",
            f"{self.std_ms:.4f}",
            self.n,
            self.trials,
            "" if self.reference_ms is None else self.reference_ms,
            "no",
            self.note,
        ]


CSV_HEADER = ["kind", "metric", "mean_ms", "std_ms", "n", "trials", "reference_ms", "reference_binding", "note"]


def _time_trials(fn: Callable[[], None], trials: int) -> tuple[float, float]:
    times = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        times.append((time.perf_counter() - t0) * 1000.0)
    return statistics.mean(times), statistics.pstdev(times)


def bench_hash(mb: int = 1, trials: int = 5) -> list[BenchRow]:
    data = bytes(bytearray(uint64_stream(1, 99, mb * 131072).tobytes()))  # mb MiB of bytes
    mean, std = _time_trials(lambda: hashlib.sha256(data).digest(), trials)
    return [
        BenchRow("hash", "sha256_ms_per_mb", mean / mb, std / mb, mb, trials,
                 REFERENCE_MS["hash_ms_per_mb"], f"hashing {mb} MiB")
    ]


def bench_sort(n: int = 1_000_000, trials: int = 5) -> list[BenchRow]:
    base = uniform_stream(2, 7, n)
    double = uniform_stream(2, 8, 2 * n)
    rows = []
    for label, arr in (("quicksort_ms_per_1m", base), ("quicksort_ms_per_2m", double)):
        mean, std = _time_trials(lambda a=arr: np.sort(a, kind="quicksort"), trials)
        rows.append(
            BenchRow("sort", label, mean, std, len(arr), trials,
                     REFERENCE_MS["sort_ms_per_1m"] if label.endswith("1m") else None,
                     "float64 elements")
        )
    ratio = rows[1].value_ms / rows[0].value_ms if rows[0].value_ms > 0 else float("inf")
    rows.append(BenchRow("sort", "scaling_ratio_2m_over_1m", ratio, 0.0, 2 * n, trials, None,
                         "n log n consistency check: expect < 3"))
    return rows


def _make_table(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    capacity = int(round(n / HASHTABLE_LOAD_FACTOR))
    keys = (uint64_stream(3, 11, n) >> np.uint64(1)).astype(np.int64)  # non-negative
    table_keys = np.full(capacity, -1, dtype=np.int64)
    table_vals = np.zeros(capacity, dtype=np.int64)
    return keys, table_keys, table_vals


def _ht_ops():
    """Insert/read implementations: numba-compiled when available."""
    try:
        from numba import njit
    except ImportError:
        def insert(keys, tk, tv):
            cap = tk.shape[0]
            for i in range(keys.shape[0]):
                k = int(keys[i])
                idx = k % cap
                while tk[idx] != -1 and tk[idx] != k:
                    idx = (idx + 1) % cap
                tk[idx] = k
                tv[idx] = i
            return 0

        def read(keys, tk, tv):
            cap = tk.shape[0]
            acc = 0
            for i in range(keys.shape[0]):
                k = int(keys[i])
                idx = k % cap
                while tk[idx] != -1 and tk[idx] != k:
                    idx = (idx + 1) % cap
                if tk[idx] == k:
                    acc += tv[idx]
            return acc

        return insert, read

    @njit(cache=True)
    def insert(keys, tk, tv):
        cap = tk.shape[0]
        for i in range(keys.shape[0]):
            k = keys[i]
            idx = k % cap
            while tk[idx] != -1 and tk[idx] != k:
                idx = (idx + 1) % cap
            tk[idx] = k
            tv[idx] = i
        return 0

    @njit(cache=True)
    def read(keys, tk, tv):
        cap = tk.shape[0]
        acc = 0
        for i in range(keys.shape[0]):
            k = keys[i]
            idx = k % cap
            while tk[idx] != -1 and tk[idx] != k:
                idx = (idx + 1) % cap
            if tk[idx] == k:
                acc += tv[idx]
        return acc

    return insert, read


def bench_hashtable(n: int = 1_000_000, trials: int = 5) -> list[BenchRow]:
    insert, read = _ht_ops()
    scale = 1_000_000 / n
    ins_times, read_times = [], []
    for _ in range(trials):
        keys, tk, tv = _make_table(n)
        insert(keys[:1], tk.copy(), tv.copy())  # absorb jit compile outside timing
        t0 = time.perf_counter()
        insert(keys, tk, tv)
        ins_times.append((time.perf_counter() - t0) * 1000.0)
        t0 = time.perf_counter()
        read(keys, tk, tv)
        read_times.append((time.perf_counter() - t0) * 1000.0)
    note = f"open addressing, load factor {HASHTABLE_LOAD_FACTOR}"
    return [
        BenchRow("hashtable", "insert_ms_per_1m", statistics.mean(ins_times) * scale,
                 statistics.pstdev(ins_times) * scale, n, trials,
                 REFERENCE_MS["hashtable_insert_ms_per_1m"], note),
        BenchRow("hashtable", "read_ms_per_1m", statistics.mean(read_times) * scale,
                 statistics.pstdev(read_times) * scale, n, trials,
                 REFERENCE_MS["hashtable_read_ms_per_1m"], note),
    ]


def bench_validate(repeats: int = 1000, *, n_test: int = 512, budget_ms: float = 6000.0) -> list[BenchRow]:
    """Time one model validation, repeated; compare against 1% of the
    600-second block interval mapped to wall time."""
    train_set, tests = generate_task(5, 64, n_test, 1)
    params = TrainingParams((train_set.input_dim, 64, 64, train_set.num_classes), 0.01, 0, 11)
    model = init_weights(params)
    test = tests[0]
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        evaluate(model, test)
        times.append((time.perf_counter() - t0) * 1000.0)
    mean = statistics.mean(times)
    return [
        BenchRow("validate", "validate_ms", mean, statistics.pstdev(times), n_test, repeats,
                 REFERENCE_MS["validate_ms"],
                 f"budget {budget_ms:.0f} ms (1% of 600 s interval): {'PASS' if mean < budget_ms else 'FAIL'}"),
    ]


def bench_kernels(epochs: int = 20, trials: int = 3) -> list[BenchRow]:
    """Train-kernel backends head to head on one standard workload."""
    train_set, _ = generate_task(6, 256, 16, 1)
    params = TrainingParams((train_set.input_dim, 64, 64, train_set.num_classes), 0.01, 0, 13)
    sizes = np.asarray(params.layer_sizes, dtype=np.int64)
    base = init_weights(params).flat
    rows = []
    results = {}
    for name in ("numpy", "numba"):
        try:
            fn = backend.train_epoch_fn(name)
        except ImportError:
            continue
        flat_warm = base.copy()
        fn(flat_warm, sizes, train_set.X, train_set.y, 0.01)  # absorb jit compile
        samples = []
        for _ in range(trials):
            flat = base.copy()
            t0 = time.perf_counter()
            for _ in range(epochs):
                fn(flat, sizes, train_set.X, train_set.y, 0.01)
            samples.append((time.perf_counter() - t0) * 1000.0 / epochs)
        results[name] = flat
        rows.append(BenchRow("kernels", f"{name}_ms_per_epoch", statistics.mean(samples),
                             statistics.pstdev(samples), len(train_set), trials, None,
                             f"{epochs} epochs, layers {params.layer_sizes}"))
    if {"numpy", "numba"} <= results.keys():
        identical = bool(np.array_equal(results["numpy"], results["numba"]))
        speedup = rows[0].value_ms / rows[1].value_ms if rows[1].value_ms > 0 else float("inf")
        rows.append(BenchRow("kernels", "numba_speedup", speedup, 0.0, len(train_set), trials, None,
                             f"bit_identical={identical}"))
    return rows


def run_benches(kinds: list[str], *, mb: int = 1, n: int = 1_000_000, repeats: int = 1000,
                trials: int = 5) -> list[BenchRow]:
    rows: list[BenchRow] = []
    for kind in kinds:
        if kind == "hash":
            rows += bench_hash(mb, trials)
        elif kind == "sort":
            rows += bench_sort(n, trials)
        elif kind == "hashtable":
            rows += bench_hashtable(n, trials)
        elif kind == "validate":
            rows += bench_validate(repeats)
        elif kind == "kernels":
            rows += bench_kernels()
        else:
            raise ValueError(f"unknown bench kind {kind!r}")
    return rows


def write_bench_csv(rows: list[BenchRow], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for row in rows:
            w.writerow(row.as_csv_row())


def format_rows(rows: list[BenchRow]) -> str:
    lines = [
        f"{'kind':<10} {'metric':<28} {'mean_ms':>12} {'std_ms':>10} {'reference_ms':>13}  note",
    ]
    for r in rows:
        ref = "-" if r.reference_ms is None else f"{r.reference_ms:.2f}"
        lines.append(
            f"{r.kind:<10} {r.metric:<28} {r.value_ms:>12.4f} {r.std_ms:>10.4f} {ref:>13}  {r.note}"
        )
    lines.append("reference timings: prior published measurements on different hardware; context only, non-binding.")
    return "\n".join(lines)
