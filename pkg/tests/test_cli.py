"""CLI surface: exit codes, artifact files, determinism, report format."""

import base64
import json
import shutil
from dataclasses import replace
from pathlib import Path

import pytest

from trainchain.cli import main

SCENARIOS = Path(__file__).parent.parent / "scenarios"


@pytest.fixture(scope="module")
def quick_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("quickrun")
    rc = main(["run", "--config", str(SCENARIOS / "quick.toml"), "--out-dir", str(out)])
    assert rc == 0
    return out


class TestRun:
    def test_artifacts_exist(self, quick_run):
        for name in ("chain.json", "metrics.csv", "trace.jsonl", "summary.json", "walltimes.csv"):
            assert (quick_run / name).exists()
        assert (quick_run / "datasets" / "train.csv").exists()

    def test_summary_shows_zero_thief_acceptances(self, quick_run):
        summary = json.loads((quick_run / "summary.json").read_text())
        assert summary["adversary_wins"]["thief"] == 0
        assert summary["adversary_wins"]["inflator"] == 0
        assert summary["accepted_blocks"] == 4

    def test_ten_round_honest_chain_has_ten_blocks(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
[scenario]
seed = 3
rounds = 10
name = "tenround"
[task]
n_train = 48
n_test = 96
classes = 3
noise = 1.2
[trainer]
hidden = [8, 8]
learning_rate = 3e-4
[round]
phase1_ms = 60000
phase2_ms = 3000
epoch_budget = 40
validate_ms = 200
[miners.solo]
strategy = "honest"
share = "1"
"""
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out-dir", str(out)]) == 0
        dump = json.loads((out / "chain.json").read_text())
        assert len(dump["blocks"]) == 11  # genesis + 10

    def test_deterministic_metrics_bytes(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            rc = main(["run", "--config", str(SCENARIOS / "quick.toml"), "--out-dir", str(out)])
            assert rc == 0
        for name in ("metrics.csv", "chain.json", "trace.jsonl", "summary.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_malformed_config_exits_1_with_line_info(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[scenario\nrounds = 2\n")
        assert main(["run", "--config", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "config error" in err and "line 1" in err

    def test_invariant_violation_exits_3_with_partial_artifacts(self, tmp_path, capsys):
        cfg = tmp_path / "diverge.toml"
        cfg.write_text(
            """
[scenario]
seed = 2
rounds = 2
name = "diverge"
[task]
n_train = 32
n_test = 64
classes = 3
[trainer]
hidden = [8]
learning_rate = 1e12
[round]
phase1_ms = 60000
phase2_ms = 3000
epoch_budget = 40
validate_ms = 200
[miners.solo]
strategy = "honest"
share = "1"
"""
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--out-dir", str(out)]) == 3
        err = capsys.readouterr().err
        assert "invariant violation" in err
        assert (out / "trace.jsonl").exists()
        assert json.loads((out / "summary.json").read_text())["end_reason"] == "invariant_violation"

    def test_unknown_key_diagnosed(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[round]\nphaze1_ms = 5\n")
        assert main(["run", "--config", str(bad)]) == 1
        assert "phaze1_ms" in capsys.readouterr().err

    def test_preset_applies_interval(self, tmp_path):
        cfg = tmp_path / "cfg.toml"
        cfg.write_text(
            """
[scenario]
seed = 4
rounds = 2
name = "preset"
[task]
n_train = 32
n_test = 64
classes = 3
[trainer]
hidden = [8, 8]
learning_rate = 3e-4
[round]
epoch_budget = 20
validate_ms = 200
[miners.solo]
strategy = "honest"
share = "1"
"""
        )
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--preset", "litecoin", "--out-dir", str(out)]) == 0
        trace = (out / "trace.jsonl").read_text().splitlines()
        closes = [json.loads(l) for l in trace if json.loads(l)["type"] == "phase1_close"]
        assert closes[0]["t"] == 150_000


class TestReport:
    def test_growth_series(self, quick_run, capsys):
        assert main(["report", "--metrics", str(quick_run / "metrics.csv")]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "block,epochs,accuracy,accuracy_float"
        rows = [line.split(",") for line in out[1:]]
        assert [r[0] for r in rows] == ["1", "2", "3", "4"]
        assert [r[1] for r in rows] == ["120", "240", "360", "480"]

    def test_missing_columns_exit_1(self, tmp_path, capsys):
        bad = tmp_path / "m.csv"
        bad.write_text("height,winner\n1,m\n")
        assert main(["report", "--metrics", str(bad)]) == 1
        assert "missing columns" in capsys.readouterr().err

    def test_empty_chain_empty_report(self, tmp_path, capsys):
        empty = tmp_path / "m.csv"
        empty.write_text(
            "height,winner,strategy,claimed_accuracy,claimed_float,verified_accuracy,"
            "verified_float,validations_performed,epochs_cumulative\n"
        )
        assert main(["report", "--metrics", str(empty)]) == 0
        assert capsys.readouterr().out.splitlines() == ["block,epochs,accuracy,accuracy_float"]


class TestVerifyCli:
    def test_honest_dump_verifies(self, quick_run, capsys):
        rc = main(["verify", "--dump", str(quick_run / "chain.json"),
                   "--datasets", str(quick_run / "datasets")])
        assert rc == 0
        assert "overall: OK" in capsys.readouterr().out

    def test_tampered_model_byte_fails_at_height(self, quick_run, tmp_path, capsys):
        raw = json.loads((quick_run / "chain.json").read_text())
        blob = bytearray(base64.b64decode(raw["blocks"][2]["model"]))
        blob[100] ^= 0x01
        raw["blocks"][2]["model"] = base64.b64encode(bytes(blob)).decode()
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(raw))
        rc = main(["verify", "--dump", str(bad), "--datasets", str(quick_run / "datasets")])
        assert rc == 2
        out = capsys.readouterr().out
        assert "height 2" in out and "FAIL" in out

    def test_missing_dataset_fails(self, quick_run, tmp_path, capsys):
        ds_dir = tmp_path / "datasets"
        ds_dir.mkdir()
        train_files = list((quick_run / "datasets").glob("train.*"))
        for f in train_files:
            shutil.copy(f, ds_dir / f.name)
        rc = main(["verify", "--dump", str(quick_run / "chain.json"), "--datasets", str(ds_dir)])
        assert rc == 2

    def test_pruned_dump_still_verifies(self, quick_run, tmp_path, capsys):
        from trainchain.chain import prune_models
        from trainchain.dump import read_chain_dump, write_chain_dump

        store, meta = read_chain_dump(quick_run / "chain.json")
        prune_models(store, keep_top_k=1)
        pruned_path = tmp_path / "pruned.json"
        write_chain_dump(store, pruned_path, meta["train_dataset_id"], meta["test_ids"])
        rc = main(["verify", "--dump", str(pruned_path), "--datasets", str(quick_run / "datasets")])
        assert rc == 0


class TestBenchCli:
    def test_bench_small_runs_and_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        rc = main(["bench", "--kind", "hash", "--mb", "1", "--trials", "2", "--out", str(out)])
        assert rc == 0
        header = out.read_text().splitlines()[0]
        assert header.startswith("kind,metric,mean_ms")
        assert "non-binding" in capsys.readouterr().out

    def test_bench_sizes_from_config_section(self, tmp_path, capsys):
        cfg = tmp_path / "b.toml"
        cfg.write_text("[bench]\nn = 10000\ntrials = 2\n")
        rc = main(["bench", "--kind", "sort", "--config", str(cfg)])
        assert rc == 0
        assert "n log n" in capsys.readouterr().out

    def test_bench_config_rejects_unknown_keys(self, tmp_path, capsys):
        cfg = tmp_path / "b.toml"
        cfg.write_text("[bench]\nnn = 10\n")
        assert main(["bench", "--kind", "sort", "--config", str(cfg)]) == 1
        assert "unknown keys" in capsys.readouterr().err
