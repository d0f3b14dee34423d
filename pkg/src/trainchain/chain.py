"""Chain primitives: hashing, transactions, Merkle trees, headers, blocks.

All byte layouts are canonical (fixed field order, length-prefixed byte
fields, little-endian fixed-width integers) so every participant computes
identical hashes. The layouts are documented field-by-field in
docs/serialization.md and frozen by tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

from .accuracy import Accuracy
from .errors import CoinbaseViolation, EmptyBlock, LinkageError
from .hashing import DIGEST_LEN, ZERO_DIGEST, Digest, as_digest, hash_bytes
from .nn.model import TrainingParams


def _lp(data: bytes) -> bytes:
    """Length-prefixed byte field: u32 LE length, then the bytes."""
    return struct.pack("<I", len(data)) + data


class TxKind(Enum):
    COINBASE = 0
    TRANSFER = 1


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    payload: bytes = b""
    reward_amount: int = 0
    recipient: bytes = b""

    def serialize(self) -> bytes:
        if self.kind is TxKind.COINBASE:
            return (
                struct.pack("<B", 0)
                + struct.pack("<Q", self.reward_amount)
                + _lp(self.recipient)
                + _lp(self.payload)
            )
        return struct.pack("<B", 1) + _lp(self.payload)


def coinbase(reward_amount: int, recipient: bytes) -> Transaction:
    return Transaction(TxKind.COINBASE, b"", reward_amount, recipient)


def transfer(payload: bytes) -> Transaction:
    return Transaction(TxKind.TRANSFER, payload)


def merkle_root(transactions: Sequence[Transaction]) -> Digest:
    """Merkle root over transaction hashes.

    Leaves are the hash of each transaction's serialization; internal nodes
    hash the concatenation of their children; a level with an odd node count
    duplicates its last node (the usual Bitcoin-style convention).
    """
    if not transactions:
        raise EmptyBlock("cannot build a Merkle tree over zero transactions")
    level = [hash_bytes(tx.serialize()) for tx in transactions]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            hash_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)
        ]
    return level[0]


@dataclass(frozen=True)
class BlockHeader:
    """Chain linkage plus the model commitment fields.

    `claimed_accuracy` is optional: under the default reveal-time claim rule
    a header is committed without a claim and the miner fills it in when the
    block is revealed. The commitment key (below) excludes the claim, so the
    committed and revealed headers resolve to the same commitment.
    """

    height: int
    prev_header_hash: Digest
    merkle_root: Digest
    model_hash: Digest
    miner_id: bytes
    created_at: int
    claimed_accuracy: Optional[Accuracy] = None

    def serialize(self) -> bytes:
        claim = (
            struct.pack("<BQQ", 1, self.claimed_accuracy.correct, self.claimed_accuracy.total)
            if self.claimed_accuracy is not None
            else struct.pack("<B", 0)
        )
        return (
            struct.pack("<Q", self.height)
            + self.prev_header_hash
            + self.merkle_root
            + self.model_hash
            + claim
            + _lp(self.miner_id)
            + struct.pack("<Q", self.created_at)
        )

    def hash(self) -> Digest:
        return hash_bytes(self.serialize())

    def commitment_key(self, claim_in_header: bool = False) -> Digest:
        """Digest that a Phase-1 commitment binds.

        Binds (height, prev, merkle root, model hash, miner id). With
        `claim_in_header` the accuracy claim is bound too, which forces the
        claim to exist before the test data is released.
        """
        if claim_in_header:
            return self.hash()
        body = (
            struct.pack("<Q", self.height)
            + self.prev_header_hash
            + self.merkle_root
            + self.model_hash
            + _lp(self.miner_id)
        )
        return hash_bytes(body)

    def with_claim(self, claim: Accuracy) -> "BlockHeader":
        return replace(self, claimed_accuracy=claim)


@dataclass
class Block:
    header: BlockHeader
    transactions: list[Transaction]
    model_bytes: Optional[bytes] = None
    training_params: Optional["TrainingParams"] = None

    @property
    def has_model(self) -> bool:
        return self.model_bytes is not None


def _check_coinbase(transactions: Sequence[Transaction]) -> None:
    if not transactions:
        raise EmptyBlock("block has no transactions")
    n_coinbase = sum(1 for tx in transactions if tx.kind is TxKind.COINBASE)
    if n_coinbase != 1 or transactions[0].kind is not TxKind.COINBASE:
        raise CoinbaseViolation(
            f"expected exactly one leading coinbase, found {n_coinbase}"
        )


def make_block(
    height: int,
    prev_header_hash: Digest,
    transactions: Sequence[Transaction],
    model_bytes: Optional[bytes],
    training_params: Optional[TrainingParams],
    claimed_accuracy: Optional[Accuracy],
    miner_id: bytes,
    now: int,
) -> Block:
    """Assemble a block whose header satisfies every structural invariant."""
    _check_coinbase(transactions)
    model_hash = hash_bytes(model_bytes) if model_bytes is not None else ZERO_DIGEST
    header = BlockHeader(
        height=height,
        prev_header_hash=prev_header_hash,
        merkle_root=merkle_root(transactions),
        model_hash=model_hash,
        miner_id=bytes(miner_id),
        created_at=now,
        claimed_accuracy=claimed_accuracy,
    )
    return Block(header, list(transactions), model_bytes, training_params)


def make_genesis(created_at: int = 0, reward_amount: int = 0) -> Block:
    """Height-0 block: zero previous hash, no model, coinbase to nobody."""
    return make_block(
        height=0,
        prev_header_hash=ZERO_DIGEST,
        transactions=[coinbase(reward_amount, b"")],
        model_bytes=None,
        training_params=None,
        claimed_accuracy=None,
        miner_id=b"genesis",
        now=created_at,
    )


@dataclass
class StructureReport:
    ok: bool
    reasons: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def verify_structure(block: Block, prev_header: Optional[BlockHeader]) -> StructureReport:
    """Structural checks: linkage, Merkle root, coinbase rule, model binding.

    `prev_header=None` means the block claims to be genesis. Failures are
    collected into the report rather than raised so callers can log them.
    """
    reasons: list[str] = []
    hdr = block.header

    if prev_header is None:
        if hdr.height != 0:
            reasons.append("genesis height must be 0")
        if hdr.prev_header_hash != ZERO_DIGEST:
            reasons.append("genesis prev hash must be all zeroes")
    else:
        if hdr.height != prev_header.height + 1:
            reasons.append("height does not extend previous block")
        if hdr.prev_header_hash != prev_header.hash():
            reasons.append("prev header hash mismatch")

    try:
        _check_coinbase(block.transactions)
    except (EmptyBlock, CoinbaseViolation) as exc:
        reasons.append(str(exc))
    else:
        if merkle_root(block.transactions) != hdr.merkle_root:
            reasons.append("merkle root mismatch")

    if block.model_bytes is not None:
        if hash_bytes(block.model_bytes) != hdr.model_hash:
            reasons.append("model bytes do not match header model hash")
    if block.training_params is not None and prev_header is not None:
        # Lineage rule: training starts from the previously accepted model.
        # Genesis carries a zero model hash, so a zero start hash (fresh
        # initial weights) is only valid at height 1.
        if block.training_params.start_model_hash != prev_header.model_hash:
            reasons.append("training start model does not match previous block")

    return StructureReport(not reasons, reasons)


class ChainStore:
    """Append-only, height-indexed block store with model pruning."""

    def __init__(self, genesis: Optional[Block] = None):
        self.blocks: list[Block] = [genesis if genesis is not None else make_genesis()]
        self.pruned_heights: set[int] = set()

    @classmethod
    def from_blocks(cls, blocks: Sequence[Block], pruned_heights: set[int] = frozenset()) -> "ChainStore":
        """Rebuild a store from dumped blocks without structural checks.

        Heights must be contiguous from 0; everything else (linkage, Merkle
        roots, model binding) is verify_chain's job, so that tampered dumps
        load and produce a per-height report instead of failing opaquely.
        """
        if not blocks or any(b.header.height != i for i, b in enumerate(blocks)):
            raise LinkageError("blocks must cover contiguous heights from 0")
        store = cls(blocks[0])
        store.blocks = list(blocks)
        store.pruned_heights = set(pruned_heights)
        return store

    @property
    def tip_height(self) -> int:
        return len(self.blocks) - 1

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def block_at(self, height: int) -> Block:
        return self.blocks[height]

    def append(self, block: Block) -> None:
        report = verify_structure(block, self.tip.header)
        if not report:
            raise LinkageError("; ".join(report.reasons))
        self.blocks.append(block)

    def claimed_accuracies(self) -> dict[int, Accuracy]:
        return {
            b.header.height: b.header.claimed_accuracy
            for b in self.blocks
            if b.header.claimed_accuracy is not None
        }


def prune_models(store: ChainStore, keep_top_k: int) -> int:
    """Drop model and training-parameter bytes outside the top-k accuracies.

    Headers are untouched, so header-level verification still passes, and the
    highest-accuracy block always survives (k >= 1), keeping the chain's
    strongest tamper evidence intact.
    """
    if keep_top_k < 1:
        raise ValueError("keep_top_k must be >= 1")
    candidates = [
        b for b in store.blocks if b.has_model and b.header.claimed_accuracy is not None
    ]
    # Equal accuracies favour later blocks: they protect more of the chain.
    ranked = sorted(
        candidates,
        key=lambda b: (b.header.claimed_accuracy.as_fraction(), b.header.height),
        reverse=True,
    )
    keep = {b.header.height for b in ranked[:keep_top_k]}
    pruned = 0
    for b in store.blocks:
        if b.has_model and b.header.height not in keep:
            b.model_bytes = None
            b.training_params = None
            store.pruned_heights.add(b.header.height)
            pruned += 1
    return pruned
