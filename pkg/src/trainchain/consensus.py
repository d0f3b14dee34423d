"""Block acceptance: commitment log, ordered validation, finality, fork choice.

The protocol per height: miners commit claim-free headers while training
(Phase 1), then reveal blocks with models and accuracy claims after the test
set is released (Phase 2). A full node validates candidates in descending
claimed accuracy and accepts the first whose measured accuracy equals its
claim exactly; anything not committed in Phase 1 is ignored, which is what
defeats model stealing and post-release retraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Sequence

from .accuracy import Accuracy
from .chain import Block, BlockHeader, ChainStore, verify_structure
from .errors import (
    BadModel,
    CommitCapExceeded,
    DatasetUnavailable,
    ForeignChain,
    LinkageError,
    PhaseClosed,
)
from .hashing import ZERO_DIGEST, Digest, hash_bytes
from .nn.model import Model, TrainingParams, deserialize_model, init_weights
from .nn.task import Dataset
from .nn.train import evaluate, train


@dataclass(frozen=True)
class RoundConfig:
    phase1_duration: int
    phase2_duration: int
    max_model_bytes: int = 10 * 1024 * 1024
    pipeline_phases: bool = True
    claim_in_header: bool = False
    commit_cap: int = 1  # commitments per miner per height

    def __post_init__(self) -> None:
        if self.phase1_duration <= 0 or self.phase2_duration <= 0:
            raise ValueError("phase durations must be positive")


class CommitOutcome(Enum):
    RECORDED = "recorded"
    DUPLICATE = "duplicate"


@dataclass
class _HeightLog:
    window: tuple[int, int]  # [open, close)
    entries: dict[Digest, tuple[BlockHeader, int]] = field(default_factory=dict)
    per_miner: dict[bytes, int] = field(default_factory=dict)
    closed: bool = False


class CommitmentLog:
    """Per-height registry of Phase-1 header commitments.

    A height's log accepts entries only while its commit window is open;
    reopening a height (after a failed round) discards the failed attempt's
    entries.
    """

    def __init__(self, config: RoundConfig):
        self.config = config
        self._heights: dict[int, _HeightLog] = {}

    def open_window(self, height: int, start: int, end: int) -> None:
        self._heights[height] = _HeightLog(window=(start, end))

    def close_window(self, height: int) -> None:
        if height in self._heights:
            self._heights[height].closed = True

    def window(self, height: int) -> Optional[tuple[int, int]]:
        log = self._heights.get(height)
        return log.window if log else None

    def commit_header(self, height: int, header: BlockHeader, now: int) -> CommitOutcome:
        log = self._heights.get(height)
        if log is None or log.closed or not log.window[0] <= now < log.window[1]:
            raise PhaseClosed(f"commit window for height {height} is not open at t={now}")
        key = header.commitment_key(self.config.claim_in_header)
        if key in log.entries:
            return CommitOutcome.DUPLICATE
        miner = bytes(header.miner_id)
        if log.per_miner.get(miner, 0) >= self.config.commit_cap:
            raise CommitCapExceeded(
                f"miner {miner!r} exceeded {self.config.commit_cap} commitment(s) at height {height}"
            )
        log.entries[key] = (header, now)
        log.per_miner[miner] = log.per_miner.get(miner, 0) + 1
        return CommitOutcome.RECORDED

    def is_committed(self, height: int, header: BlockHeader) -> bool:
        log = self._heights.get(height)
        if log is None:
            return False
        return header.commitment_key(self.config.claim_in_header) in log.entries

    def entries(self, height: int) -> dict[Digest, tuple[BlockHeader, int]]:
        log = self._heights.get(height)
        return dict(log.entries) if log else {}


@dataclass(frozen=True)
class Submission:
    block: Block
    arrival_time: int
    submitter: bytes

    @property
    def claimed(self) -> Accuracy:
        claim = self.block.header.claimed_accuracy
        if claim is None:
            raise ValueError("submission carries no accuracy claim")
        return claim


class SkipReason(Enum):
    NOT_COMMITTED = "NotCommitted"
    ACCURACY_MISMATCH = "AccuracyMismatch"
    STRUCTURE_INVALID = "StructureInvalid"
    OVERSIZE_MODEL = "OversizeModel"


@dataclass
class AcceptanceDecision:
    accepted: Optional[Block]
    validations_performed: int
    skipped: list[tuple[Digest, SkipReason]]
    failure_reason: Optional[str] = None

    @property
    def is_accepted(self) -> bool:
        return self.accepted is not None

    def to_json_dict(self) -> dict:
        return {
            "outcome": "accepted" if self.is_accepted else "round_failed",
            "validations_performed": self.validations_performed,
            "accepted_header": self.accepted.header.hash().hex() if self.accepted else None,
            "failure_reason": self.failure_reason,
            "skipped": [[h.hex(), r.value] for h, r in self.skipped],
        }


def order_submissions(subs: Sequence[Submission]) -> list[Submission]:
    """Deterministic validation order.

    Descending claimed accuracy (exact rational), then ascending arrival
    time (earlier wins, as in ordinary chains), then ascending header hash.
    """
    return sorted(
        subs,
        key=lambda s: (
            -s.claimed.as_fraction(),
            s.arrival_time,
            s.block.header.hash(),
        ),
    )


def accept_block(
    log: CommitmentLog,
    subs: Sequence[Submission],
    test_set: Dataset,
    prev_header: BlockHeader,
    config: RoundConfig,
) -> AcceptanceDecision:
    """Pick the winning block for one height from gathered submissions.

    Walks candidates in `order_submissions` order; the first candidate that
    was committed in Phase 1, is structurally valid, fits the model size
    limit, and measures exactly its claimed accuracy is accepted. Validation
    stops there, so one honest top-ranked candidate costs one evaluation.
    """
    skipped: list[tuple[Digest, SkipReason]] = []
    validations = 0
    height = prev_header.height + 1
    for sub in order_submissions(subs):
        hdr_hash = sub.block.header.hash()
        if not log.is_committed(height, sub.block.header):
            skipped.append((hdr_hash, SkipReason.NOT_COMMITTED))
            continue
        if not verify_structure(sub.block, prev_header):
            skipped.append((hdr_hash, SkipReason.STRUCTURE_INVALID))
            continue
        if sub.block.model_bytes is None or len(sub.block.model_bytes) > config.max_model_bytes:
            skipped.append((hdr_hash, SkipReason.OVERSIZE_MODEL))
            continue
        try:
            model = deserialize_model(sub.block.model_bytes)
        except BadModel:
            skipped.append((hdr_hash, SkipReason.STRUCTURE_INVALID))
            continue
        validations += 1
        if evaluate(model, test_set) == sub.claimed:
            return AcceptanceDecision(sub.block, validations, skipped)
        skipped.append((hdr_hash, SkipReason.ACCURACY_MISMATCH))
    return AcceptanceDecision(None, validations, skipped, failure_reason="no valid submission")


def finalize_height(store: ChainStore, decision: AcceptanceDecision) -> bool:
    """Append an accepted block; a RoundFailed decision leaves the store alone.

    Once appended the height is final for this node: later single blocks at
    that height are rejected outright, and only whole-chain comparison
    (compare_chains) can replace anything.
    """
    if not decision.is_accepted:
        return False
    block = decision.accepted
    if block.header.height != store.tip_height + 1:
        raise LinkageError(
            f"cannot finalize height {block.header.height} onto tip {store.tip_height}"
        )
    store.append(block)
    return True


@dataclass
class HeightVerification:
    height: int
    retrain_hash_match: bool
    accuracy_match: bool
    structure_ok: bool
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.retrain_hash_match and self.accuracy_match and self.structure_ok


@dataclass
class ChainVerificationReport:
    heights: list[HeightVerification]

    @property
    def overall(self) -> bool:
        return all(h.ok for h in self.heights)

    def failing_heights(self) -> list[int]:
        return [h.height for h in self.heights if not h.ok]

    def to_json_dict(self) -> dict:
        return {
            "overall": self.overall,
            "heights": [
                {
                    "height": h.height,
                    "retrain_hash_match": h.retrain_hash_match,
                    "accuracy_match": h.accuracy_match,
                    "structure_ok": h.structure_ok,
                    "notes": h.notes,
                }
                for h in self.heights
            ],
        }


def verify_chain(
    store: ChainStore,
    train_set: Dataset,
    test_sets: Mapping[int, Dataset],
) -> ChainVerificationReport:
    """Full verification by deterministic retraining.

    Walks the chain keeping the retrained model of the previous height;
    each unpruned block is retrained from its recorded start (fresh initial
    weights at height 1, otherwise the previous block's model) and must
    reproduce its model hash bit for bit, measure exactly its claimed
    accuracy on that height's test set, and link structurally. Pruned
    blocks get structure-only checks; the first unpruned block after a
    pruned stretch anchors on its own hash-checked bytes, noted in the
    report.
    """
    results: list[HeightVerification] = []
    lineage: Optional[Model] = None  # retrained (or hash-anchored) model of previous height
    for height in range(store.tip_height + 1):
        block = store.block_at(height)
        prev_header = store.block_at(height - 1).header if height > 0 else None
        structure_ok = bool(verify_structure(block, prev_header))
        entry = HeightVerification(height, True, True, structure_ok)

        if height == 0 or not block.has_model:
            lineage = None
            if height > 0:
                entry.notes.append("pruned: structure-only checks")
            results.append(entry)
            continue

        params = block.training_params
        if params is None:
            entry.retrain_hash_match = False
            entry.notes.append("model present but training params missing")
            results.append(entry)
            lineage = None
            continue

        if height not in test_sets:
            raise DatasetUnavailable(f"no test dataset for height {height}")

        try:
            stored = deserialize_model(block.model_bytes)
        except BadModel as exc:
            entry.retrain_hash_match = False
            entry.accuracy_match = False
            entry.notes.append(f"model bytes unusable: {exc}")
            results.append(entry)
            lineage = None
            continue

        start: Optional[Model]
        if params.start_model_hash == ZERO_DIGEST:
            start = init_weights(params)
        elif lineage is not None and hash_bytes(_model_bytes(lineage)) == params.start_model_hash:
            start = lineage
        else:
            start = None

        if start is None:
            entry.notes.append("start model unavailable (pruned ancestor): retrain skipped")
        else:
            retrained = train(params, train_set, start_model=start, epochs_to_run=params.epochs)
            entry.retrain_hash_match = hash_bytes(_model_bytes(retrained)) == block.header.model_hash

        claimed = block.header.claimed_accuracy
        if claimed is None:
            entry.accuracy_match = False
            entry.notes.append("block carries no accuracy claim")
        else:
            entry.accuracy_match = evaluate(stored, test_sets[height]) == claimed

        # Anchor the lineage on the stored bytes; they are bound to the header
        # hash, which structure checking has already tied to the chain.
        lineage = stored if hash_bytes(block.model_bytes) == block.header.model_hash else None
        results.append(entry)
    return ChainVerificationReport(results)


def _model_bytes(model: Model) -> bytes:
    from .nn.model import serialize_model

    return serialize_model(model)


class ChainChoice(Enum):
    KEEP_CURRENT = "KeepCurrent"
    REPLACE = "Replace"


def compare_chains(
    current: ChainStore,
    challenger: ChainStore,
    train_set: Dataset,
    test_sets: Mapping[int, Dataset],
    *,
    require_full_dominance: bool = True,
) -> ChainChoice:
    """Whole-chain replacement rule.

    Replace only if the challenger is strictly longer, fully verifiable by
    retraining, and strictly higher-accuracy at every height past the
    divergence point where both chains have blocks. `require_full_dominance`
    can be relaxed for experiments (dominance at the final shared height
    only).
    """
    if current.block_at(0).header.hash() != challenger.block_at(0).header.hash():
        raise ForeignChain("chains do not share a genesis block")
    if challenger.tip_height <= current.tip_height:
        return ChainChoice.KEEP_CURRENT

    divergence = None
    for h in range(min(current.tip_height, challenger.tip_height) + 1):
        if current.block_at(h).header.hash() != challenger.block_at(h).header.hash():
            divergence = h
            break
    if divergence is None:
        divergence = current.tip_height + 1

    shared = range(divergence, min(current.tip_height, challenger.tip_height) + 1)
    heights_to_check = list(shared) if require_full_dominance else list(shared)[-1:]
    for h in heights_to_check:
        cur_claim = current.block_at(h).header.claimed_accuracy
        cha_claim = challenger.block_at(h).header.claimed_accuracy
        if cur_claim is None or cha_claim is None:
            return ChainChoice.KEEP_CURRENT
        if not cha_claim > cur_claim:
            return ChainChoice.KEEP_CURRENT

    if not verify_chain(challenger, train_set, test_sets).overall:
        return ChainChoice.KEEP_CURRENT
    return ChainChoice.REPLACE


def reversibility_index(store: ChainStore) -> dict[int, Fraction]:
    """Difficulty proxy for reversing each height: suffix-max of accuracies.

    Reversing block t means out-training every accepted model at heights
    >= t, so the suffix maximum is what an attacker has to beat.
    """
    claims = store.claimed_accuracies()
    out: dict[int, Fraction] = {}
    best = Fraction(0)
    for height in sorted(claims, reverse=True):
        frac = claims[height].as_fraction()
        if frac > best:
            best = frac
        out[height] = best
    return dict(sorted(out.items()))
