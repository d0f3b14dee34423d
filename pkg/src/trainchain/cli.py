"""Command-line interface: run scenarios, report metrics, bench, verify.

Exit codes: 0 success, 1 usage/config error, 2 verification failure,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bench import format_rows, run_benches, write_bench_csv
from .consensus import verify_chain
from .dump import load_datasets_dir, read_chain_dump, write_artifacts
from .errors import DatasetUnavailable, DumpCorrupt, ParseError, TrainchainError
from .runner import Simulation
from .scenario import PRESETS, load_scenario


def _flush_partial(sim: Simulation, out_dir: Path, exc: Exception) -> None:
    """Best-effort artifact flush after a mid-run failure."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        sim.trace.dump_jsonl(out_dir / "trace.jsonl")
        with open(out_dir / "summary.json", "w") as fh:
            json.dump(
                {
                    "name": sim.cfg.name,
                    "seed": sim.cfg.seed,
                    "end_reason": "invariant_violation",
                    "error": str(exc),
                    "accepted_blocks": sim.node.store.tip_height,
                },
                fh,
                indent=1,
                sort_keys=True,
            )
            fh.write("\n")
    except OSError:
        pass

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY_FAILED = 2
EXIT_INVARIANT = 3


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_scenario(
            Path(args.config) if args.config else None,
            preset=args.preset,
            seed_override=args.seed,
        )
    except ParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out_dir) if args.out_dir else Path("out") / config.name
    sim = Simulation(config)
    try:
        result = sim.run()
    except TrainchainError as exc:
        print(f"invariant violation during run: {exc}", file=sys.stderr)
        _flush_partial(sim, out_dir, exc)
        print(f"partial artifacts flushed to {out_dir}", file=sys.stderr)
        return EXIT_INVARIANT
    paths = write_artifacts(result, out_dir)
    summary = result.summary
    print(f"scenario {config.name!r} seed={config.seed}: {summary['end_reason']}, "
          f"{summary['accepted_blocks']} blocks, best accuracy {summary['final_best_accuracy']}")
    print(f"recycling ratio {summary['recycling_ratio']} "
          f"(= {summary['recycling_ratio_float']:.4f})")
    if summary["attack"] is not None:
        print(f"attack outcome: {summary['attack']['outcome']}")
    for key in ("chain", "metrics", "trace", "summary"):
        print(f"  {key}: {paths[key]}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.metrics)
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"height", "epochs_cumulative", "verified_accuracy", "verified_float"}
            if reader.fieldnames is None or not required <= set(reader.fieldnames):
                raise ParseError(f"{path}: missing columns {sorted(required - set(reader.fieldnames or []))}")
            rows = [
                (int(r["height"]), int(r["epochs_cumulative"]), r["verified_accuracy"], r["verified_float"])
                for r in reader
            ]
    except FileNotFoundError:
        print(f"no such metrics file: {path}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"report error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        print("block,epochs,accuracy,accuracy_float", file=out)
        for height, epochs, acc, accf in rows:
            print(f"{height},{epochs},{acc},{accf}", file=out)
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    sizes = {"mb": args.mb, "n": args.n, "repeats": args.repeats, "trials": args.trials}
    if args.config:
        try:
            sizes.update(_bench_section(Path(args.config)))
        except ParseError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_USAGE
    kinds = ["hash", "sort", "hashtable", "validate", "kernels"] if args.kind == "all" else [args.kind]
    rows = run_benches(kinds, **sizes)
    print(format_rows(rows))
    if args.out:
        write_bench_csv(rows, Path(args.out))
        print(f"wrote {args.out}")
    return EXIT_OK


def _bench_section(path: Path) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    section = raw.get("bench", {})
    allowed = {"mb", "n", "repeats", "trials"}
    unknown = set(section) - allowed
    if unknown:
        raise ParseError(f"[bench]: unknown keys {sorted(unknown)}")
    return {k: int(v) for k, v in section.items()}


def _cmd_verify(args: argparse.Namespace) -> int:
    try:
        store, meta = read_chain_dump(Path(args.dump))
        datasets = load_datasets_dir(Path(args.datasets))
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DumpCorrupt as exc:
        print(f"corrupt dump: {exc}", file=sys.stderr)
        return EXIT_VERIFY_FAILED

    train_id = meta["train_dataset_id"].hex()
    if train_id not in datasets:
        print(f"training dataset {train_id} not present in {args.datasets}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    test_sets = {}
    for height, ds_id in meta["test_ids"].items():
        if ds_id.hex() in datasets:
            test_sets[height] = datasets[ds_id.hex()]
    try:
        report = verify_chain(store, datasets[train_id], test_sets)
    except DatasetUnavailable as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    for h in report.heights:
        flags = (
            f"retrain={'OK' if h.retrain_hash_match else 'FAIL'} "
            f"accuracy={'OK' if h.accuracy_match else 'FAIL'} "
            f"structure={'OK' if h.structure_ok else 'FAIL'}"
        )
        notes = f"  ({'; '.join(h.notes)})" if h.notes else ""
        print(f"height {h.height}: {flags}{notes}")
    print(f"overall: {'OK' if report.overall else 'FAIL'}")
    if args.report_json:
        with open(args.report_json, "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=1)
            fh.write("\n")
    return EXIT_OK if report.overall else EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trainchain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario and write artifacts")
    p_run.add_argument("--config", help="TOML scenario file (defaults apply when omitted)")
    p_run.add_argument("--seed", type=int, help="override the scenario seed")
    p_run.add_argument("--out-dir", help="artifact directory (default: out/<name>)")
    p_run.add_argument("--preset", choices=sorted(PRESETS), help="block-interval preset")
    p_run.set_defaults(fn=_cmd_run)

    p_rep = sub.add_parser("report", help="accuracy-growth series from a metrics CSV")
    p_rep.add_argument("--metrics", required=True)
    p_rep.add_argument("--out")
    p_rep.set_defaults(fn=_cmd_report)

    p_bench = sub.add_parser("bench", help="microbenchmarks")
    p_bench.add_argument("--kind", default="all",
                         choices=["hash", "sort", "hashtable", "validate", "kernels", "all"])
    p_bench.add_argument("--config", help="TOML file whose [bench] section sets sizes")
    p_bench.add_argument("--mb", type=int, default=1, help="megabytes to hash")
    p_bench.add_argument("--n", type=int, default=1_000_000, help="elements for sort/hashtable")
    p_bench.add_argument("--repeats", type=int, default=1000, help="validation repetitions")
    p_bench.add_argument("--trials", type=int, default=5)
    p_bench.add_argument("--out", help="write Table-style CSV here")
    p_bench.set_defaults(fn=_cmd_bench)

    p_ver = sub.add_parser("verify", help="re-verify a chain dump by retraining")
    p_ver.add_argument("--dump", required=True)
    p_ver.add_argument("--datasets", required=True)
    p_ver.add_argument("--report-json", help="also write the per-height report as JSON")
    p_ver.set_defaults(fn=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except TrainchainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
