"""Chain dump files and scenario artifacts.

The dump is JSON: digests hex-encoded, model bytes base64-encoded, one entry
per block, plus the dataset ids needed to re-verify the chain (training set,
and the test set each height was judged against). docs/serialization.md
documents the schema next to the binary layouts.
"""

from __future__ import annotations

import base64
import csv
import json
from pathlib import Path
from typing import Optional

from .accuracy import Accuracy
from .chain import Block, BlockHeader, ChainStore, Transaction, TxKind
from .errors import DumpCorrupt
from .hashing import as_digest
from .nn.model import TrainingParams
from .nn.task import Dataset, load_dataset, save_dataset

DUMP_FORMAT = "trainchain-chain-v1"


def _tx_to_json(tx: Transaction) -> dict:
    if tx.kind is TxKind.COINBASE:
        return {
            "kind": "coinbase",
            "reward_amount": tx.reward_amount,
            "recipient": tx.recipient.hex(),
            "payload": base64.b64encode(tx.payload).decode(),
        }
    return {"kind": "transfer", "payload": base64.b64encode(tx.payload).decode()}


def _tx_from_json(row: dict) -> Transaction:
    payload = base64.b64decode(row.get("payload", ""))
    if row["kind"] == "coinbase":
        return Transaction(TxKind.COINBASE, payload, int(row["reward_amount"]), bytes.fromhex(row["recipient"]))
    return Transaction(TxKind.TRANSFER, payload)


def _params_to_json(p: Optional[TrainingParams]) -> Optional[dict]:
    if p is None:
        return None
    return {
        "layer_sizes": list(p.layer_sizes),
        "learning_rate": p.learning_rate,
        "epochs": p.epochs,
        "init_seed": p.init_seed,
        "start_model_hash": p.start_model_hash.hex(),
        "activation": p.activation,
    }


def _params_from_json(row: Optional[dict]) -> Optional[TrainingParams]:
    if row is None:
        return None
    return TrainingParams(
        layer_sizes=tuple(int(s) for s in row["layer_sizes"]),
        learning_rate=float(row["learning_rate"]),
        epochs=int(row["epochs"]),
        init_seed=int(row["init_seed"]),
        start_model_hash=as_digest(bytes.fromhex(row["start_model_hash"])),
        activation=row.get("activation", "relu+softmax"),
    )


def _header_to_json(h: BlockHeader) -> dict:
    return {
        "height": h.height,
        "prev_header_hash": h.prev_header_hash.hex(),
        "merkle_root": h.merkle_root.hex(),
        "model_hash": h.model_hash.hex(),
        "miner_id": h.miner_id.hex(),
        "created_at": h.created_at,
        "claimed_accuracy": str(h.claimed_accuracy) if h.claimed_accuracy else None,
    }


def _header_from_json(row: dict) -> BlockHeader:
    claim = row.get("claimed_accuracy")
    return BlockHeader(
        height=int(row["height"]),
        prev_header_hash=as_digest(bytes.fromhex(row["prev_header_hash"])),
        merkle_root=as_digest(bytes.fromhex(row["merkle_root"])),
        model_hash=as_digest(bytes.fromhex(row["model_hash"])),
        miner_id=bytes.fromhex(row["miner_id"]),
        created_at=int(row["created_at"]),
        claimed_accuracy=Accuracy.parse(claim) if claim else None,
    )


def chain_to_json(
    store: ChainStore,
    train_dataset_id: bytes,
    test_ids_by_height: dict[int, bytes],
) -> dict:
    blocks = []
    for b in store.blocks:
        blocks.append(
            {
                "height": b.header.height,
                "header": _header_to_json(b.header),
                "header_hash": b.header.hash().hex(),
                "transactions": [_tx_to_json(tx) for tx in b.transactions],
                "model": base64.b64encode(b.model_bytes).decode() if b.model_bytes else None,
                "training_params": _params_to_json(b.training_params),
                "test_dataset_id": test_ids_by_height.get(b.header.height, b"").hex() or None,
            }
        )
    return {
        "format": DUMP_FORMAT,
        "train_dataset_id": train_dataset_id.hex(),
        "pruned_heights": sorted(store.pruned_heights),
        "blocks": blocks,
    }


def write_chain_dump(store: ChainStore, path: Path, train_dataset_id: bytes, test_ids: dict[int, bytes]) -> None:
    with open(path, "w") as fh:
        json.dump(chain_to_json(store, train_dataset_id, test_ids), fh, indent=1)
        fh.write("\n")


def read_chain_dump(path: Path) -> tuple[ChainStore, dict]:
    """Rebuild a ChainStore from a dump; raises DumpCorrupt on inconsistency."""
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("format") != DUMP_FORMAT:
        raise DumpCorrupt(f"unknown dump format {raw.get('format')!r}")
    pruned = set(raw.get("pruned_heights", []))
    blocks_raw = raw.get("blocks", [])
    if not blocks_raw:
        raise DumpCorrupt("dump contains no blocks")
    blocks: list[Block] = []
    test_ids: dict[int, bytes] = {}
    for row in blocks_raw:
        header = _header_from_json(row["header"])
        if header.hash().hex() != row["header_hash"]:
            raise DumpCorrupt(f"header hash mismatch at height {header.height}")
        model_bytes = base64.b64decode(row["model"]) if row.get("model") else None
        if model_bytes is None and header.height > 0 and header.height not in pruned:
            raise DumpCorrupt(f"unpruned height {header.height} is missing model bytes")
        blocks.append(
            Block(
                header,
                [_tx_from_json(t) for t in row.get("transactions", [])],
                model_bytes,
                _params_from_json(row.get("training_params")),
            )
        )
        if row.get("test_dataset_id"):
            test_ids[header.height] = bytes.fromhex(row["test_dataset_id"])
    try:
        store = ChainStore.from_blocks(blocks, pruned)
    except Exception as exc:
        raise DumpCorrupt(str(exc)) from None
    meta = {"train_dataset_id": bytes.fromhex(raw["train_dataset_id"]), "test_ids": test_ids}
    return store, meta


# -- scenario artifact bundle ----------------------------------------------


def write_artifacts(result, out_dir: Path) -> dict[str, Path]:
    """Write chain dump, metrics CSV, trace JSONL, summary JSON, datasets.

    Everything except walltimes.csv is byte-deterministic for a given
    (config, seed).
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "chain": out_dir / "chain.json",
        "metrics": out_dir / "metrics.csv",
        "walltimes": out_dir / "walltimes.csv",
        "trace": out_dir / "trace.jsonl",
        "summary": out_dir / "summary.json",
        "datasets": out_dir / "datasets",
    }

    test_ids = {h: ds.dataset_id for h, (_, ds) in result.released.items()}
    write_chain_dump(result.store, paths["chain"], result.train_set.dataset_id, test_ids)

    with open(paths["metrics"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["height", "winner", "strategy", "claimed_accuracy", "claimed_float",
             "verified_accuracy", "verified_float", "validations_performed", "epochs_cumulative"]
        )
        for r in result.rounds:
            w.writerow(
                [r.height, r.winner, r.strategy, str(r.claimed), repr(r.claimed.as_float()),
                 str(r.verified), repr(r.verified.as_float()), r.validations, r.epochs_cumulative]
            )

    with open(paths["walltimes"], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["height", "wall_ms"])
        for r in result.rounds:
            w.writerow([r.height, f"{r.wall_ms:.3f}"])

    result.trace.dump_jsonl(paths["trace"])

    with open(paths["summary"], "w") as fh:
        json.dump(result.summary, fh, indent=1, sort_keys=True)
        fh.write("\n")

    ds_dir = paths["datasets"]
    ds_dir.mkdir(exist_ok=True)
    save_dataset(result.train_set, ds_dir / "train")
    for h, (idx, ds) in sorted(result.released.items()):
        save_dataset(ds, ds_dir / f"test_{idx:04d}")
    # the attack's extra test set, when one was consumed
    if result.attack_report is not None:
        nxt = result.next_schedule_index
        if nxt < len(result.schedule):
            save_dataset(result.schedule[nxt], ds_dir / f"test_{nxt:04d}")
    return paths


def load_datasets_dir(ds_dir: Path) -> dict[str, Dataset]:
    """All datasets in a directory, keyed by hex dataset id."""
    out: dict[str, Dataset] = {}
    for sidecar in sorted(ds_dir.glob("*.json")):
        ds = load_dataset(sidecar.with_suffix(""))
        out[ds.dataset_id.hex()] = ds
    return out
