"""Participant behaviors: model requester, miner strategies, full node.

Actors are plain state machines; the simulation driver (runner.py) owns the
clock and calls into them, so every behavior here is deterministic given its
inputs. Training happens lazily at the event that needs its result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np

from .accuracy import Accuracy
from .chain import Block, BlockHeader, ChainStore, Transaction, coinbase, make_block, transfer
from .consensus import (
    AcceptanceDecision,
    CommitmentLog,
    CommitOutcome,
    RoundConfig,
    Submission,
    accept_block,
    finalize_height,
)
from .errors import CommitCapExceeded, PhaseClosed, ScheduleExhausted
from .hashing import ZERO_DIGEST, Digest, hash_bytes
from .nn import kernels_np
from .nn.model import Model, TrainingParams, init_weights, serialize_model
from .nn.rng import CounterRng
from .nn.task import Dataset
from .nn.train import evaluate, train
from .scenario import MinerConfig, ScenarioConfig


class RequesterSignal(Enum):
    RELEASE_TEST = "ReleaseTest"
    COLLECT_AND_STOP = "CollectModelAndStop"
    CONTINUE = "Continue"


@dataclass
class RequesterDecision:
    signal: RequesterSignal
    dataset: Optional[Dataset] = None
    schedule_index: Optional[int] = None


class ModelRequester:
    """Provides the training set and releases one fresh test set per round.

    Signals a stop when the best accepted accuracy improved by less than
    `stop_epsilon` over the last `stop_window` accepted blocks.
    """

    def __init__(self, train_set: Dataset, schedule: list[Dataset], stop_window: int, stop_epsilon: Fraction):
        self.train_set = train_set
        self.schedule = schedule
        self.stop_window = stop_window
        self.stop_epsilon = stop_epsilon
        self._next_index = 0
        self._attempt = 0
        self._released: set[tuple[int, int]] = set()
        self._best_by_height: dict[int, Fraction] = {}

    @property
    def next_index(self) -> int:
        return self._next_index

    def observe_accepted(self, height: int, accuracy: Accuracy) -> None:
        prev = max(self._best_by_height.values(), default=Fraction(0))
        self._best_by_height[height] = max(prev, accuracy.as_fraction())

    def observe_round_failed(self, height: int) -> None:
        self._attempt += 1

    def _should_stop(self) -> bool:
        heights = sorted(self._best_by_height)
        if len(heights) <= self.stop_window:
            return False
        latest = self._best_by_height[heights[-1]]
        earlier = self._best_by_height[heights[-1 - self.stop_window]]
        return latest - earlier < self.stop_epsilon

    def tick(self, height: int) -> RequesterDecision:
        """Decision at a round boundary: stop, release this height's test set,
        or (if already released for the current attempt) just continue."""
        if self._should_stop():
            return RequesterDecision(RequesterSignal.COLLECT_AND_STOP)
        key = (height, self._attempt)
        if key in self._released:
            return RequesterDecision(RequesterSignal.CONTINUE)
        if self._next_index >= len(self.schedule):
            raise ScheduleExhausted(f"no test dataset left for height {height}")
        index = self._next_index
        self._next_index += 1
        self._released.add(key)
        return RequesterDecision(RequesterSignal.RELEASE_TEST, self.schedule[index], index)


@dataclass
class Candidate:
    """A miner's Phase-1 product: committed header plus what backs it."""

    header: BlockHeader
    transactions: list[Transaction]
    model_bytes: bytes
    params: TrainingParams
    flat: np.ndarray
    heldout_accuracy: Accuracy


class MinerActor:
    """One miner. Strategy hooks change only Phase-2 behavior; Phase 1
    (train + commit) is shared, since even adversaries must look honest
    while the commitment window is open."""

    def __init__(self, index: int, cfg: MinerConfig, scenario: ScenarioConfig, train_set: Dataset):
        self.index = index
        self.cfg = cfg
        self.name = cfg.name
        self.miner_id = cfg.name.encode()
        self.scenario = scenario
        self.train_set = train_set
        self.layer_sizes = scenario.trainer.layer_sizes(train_set.input_dim, train_set.num_classes)
        self.init_seed = scenario.miner_init_seed(index)
        self.learning_rate = scenario.trainer.learning_rate
        # assessment slice: last 10% of the training set (at least one record)
        n = len(train_set)
        cut = n - max(1, n // 10)
        self._heldout = train_set.slice(cut, n)
        base = init_weights(self._params(ZERO_DIGEST, 0))
        self.lineage_flat = base.flat
        self.lineage_epochs = 0
        self.base_hash: Digest = ZERO_DIGEST
        self.pending: Optional[Candidate] = None
        self.stolen: Optional[Submission] = None
        self.overfit_gain: Optional[tuple[Accuracy, Accuracy]] = None

    def _params(self, start_hash: Digest, epochs: int) -> TrainingParams:
        return TrainingParams(
            layer_sizes=self.layer_sizes,
            learning_rate=self.learning_rate,
            epochs=epochs,
            init_seed=self.init_seed,
            start_model_hash=start_hash,
        )

    def _model(self, flat: np.ndarray) -> Model:
        return Model(self.layer_sizes, flat.copy())

    def _heldout_accuracy(self, flat: np.ndarray) -> Accuracy:
        sizes = np.asarray(self.layer_sizes, dtype=np.int64)
        correct = kernels_np.evaluate_count(flat, sizes, self._heldout.X, self._heldout.y)
        return Accuracy(correct, len(self._heldout))

    def epochs_this_round(self) -> int:
        return self.scenario.epochs_for(self.cfg.share)

    def train_candidate(self, height: int, prev_header: BlockHeader, now: int, attempt: int) -> Candidate:
        """Phase 1: continue the lineage, pick the best self-assessed
        checkpoint, and build the block + header to commit."""
        budget = self.epochs_this_round()
        start_epochs = self.lineage_epochs
        best_flat = self.lineage_flat.copy()
        best_epochs = start_epochs
        best_acc = self._heldout_accuracy(best_flat)

        if budget > 0:
            n_ck = max(1, self.scenario.trainer.checkpoints)
            marks = sorted({max(1, budget * i // n_ck) for i in range(1, n_ck + 1)} | {budget})
            state = {"best_flat": best_flat, "best_epochs": best_epochs, "best_acc": best_acc}

            def on_epoch(epoch: int, flat: np.ndarray) -> None:
                if epoch in marks:
                    acc = self._heldout_accuracy(flat)
                    if acc >= state["best_acc"]:  # ties go to the later checkpoint
                        state["best_acc"] = acc
                        state["best_flat"] = flat.copy()
                        state["best_epochs"] = start_epochs + epoch

            trained = train(
                self._params(self.base_hash, budget),
                self.train_set,
                start_model=self._model(self.lineage_flat),
                epochs_to_run=budget,
                on_epoch=on_epoch,
            )
            self.lineage_flat = trained.flat
            self.lineage_epochs = start_epochs + budget
            best_flat = state["best_flat"]
            best_epochs = state["best_epochs"]
            best_acc = state["best_acc"]

        params = self._params(self.base_hash, best_epochs)
        model_bytes = serialize_model(Model(self.layer_sizes, best_flat))
        txs = self._transactions(height, attempt)
        claim = best_acc if self.scenario.round.claim_in_header else None
        block = make_block(
            height=height,
            prev_header_hash=prev_header.hash(),
            transactions=txs,
            model_bytes=model_bytes,
            training_params=params,
            claimed_accuracy=claim,
            miner_id=self.miner_id,
            now=now,
        )
        self.pending = Candidate(block.header, txs, model_bytes, params, best_flat, best_acc)
        return self.pending

    def _transactions(self, height: int, attempt: int) -> list[Transaction]:
        rng = CounterRng(self.scenario.seed, (height * 1009 + attempt) * 31 + self.index)
        txs = [coinbase(self.scenario.reward, self.miner_id)]
        for _ in range(self.scenario.transfers_per_block):
            txs.append(transfer(rng.next_bytes(16)))
        return txs

    def reveal(self, test_set: Dataset, arrival_time: int) -> Optional[Submission]:
        """Phase 2: evaluate the committed candidate and submit the block."""
        if self.pending is None:
            return None
        if self.cfg.strategy == "thief":
            return None  # waits to copy someone else's reveal
        if self.cfg.strategy == "overfitter":
            return self._reveal_overfit(test_set, arrival_time)
        true_acc = evaluate(self._model(self.pending.flat), test_set)
        claim = true_acc
        if self.cfg.strategy == "inflator":
            claim = _inflate(true_acc, self.cfg.inflate_by)
        header = self.pending.header if self.scenario.round.claim_in_header else self.pending.header.with_claim(claim)
        block = Block(header, self.pending.transactions, self.pending.model_bytes, self.pending.params)
        return Submission(block, arrival_time, self.miner_id)

    def _reveal_overfit(self, test_set: Dataset, arrival_time: int) -> Submission:
        committed_acc = evaluate(self._model(self.pending.flat), test_set)
        boosted = train(
            self._params(self.base_hash, self.cfg.overfit_epochs),
            test_set,
            start_model=self._model(self.pending.flat),
            epochs_to_run=self.cfg.overfit_epochs,
        )
        boosted_acc = evaluate(boosted, test_set)
        self.overfit_gain = (committed_acc, boosted_acc)
        model_bytes = serialize_model(boosted)
        block = make_block(
            height=self.pending.header.height,
            prev_header_hash=self.pending.header.prev_header_hash,
            transactions=self.pending.transactions,
            model_bytes=model_bytes,
            training_params=self.pending.params,
            claimed_accuracy=boosted_acc,
            miner_id=self.miner_id,
            now=self.pending.header.created_at,
        )
        return Submission(block, arrival_time, self.miner_id)

    def steal(self, observed: Submission, arrival_time: int) -> Optional[Submission]:
        """Thief: republish someone else's revealed model under our name."""
        if self.cfg.strategy != "thief" or self.stolen is not None:
            return None
        victim = observed.block
        txs = self._transactions(victim.header.height, 0)
        block = make_block(
            height=victim.header.height,
            prev_header_hash=victim.header.prev_header_hash,
            transactions=txs,
            model_bytes=victim.model_bytes,
            training_params=victim.training_params,
            claimed_accuracy=victim.header.claimed_accuracy,
            miner_id=self.miner_id,
            now=victim.header.created_at,
        )
        self.stolen = Submission(block, arrival_time, self.miner_id)
        return self.stolen

    def adopt(self, accepted: Block) -> None:
        """Start the next round from the accepted model, as everyone does."""
        from .nn.model import deserialize_model

        model = deserialize_model(accepted.model_bytes)
        self.lineage_flat = model.flat
        self.lineage_epochs = 0
        self.base_hash = accepted.header.model_hash
        self.pending = None
        self.stolen = None


def _inflate(true_acc: Accuracy, by: Fraction) -> Accuracy:
    bump = max(1, int(by * true_acc.total))
    return Accuracy(min(true_acc.total, true_acc.correct + bump), true_acc.total)


class FullNodeActor:
    """Honest full node: commitment log plus the acceptance pipeline."""

    def __init__(self, name: str, store: ChainStore, config: RoundConfig):
        self.name = name
        self.store = store
        self.config = config
        self.log = CommitmentLog(config)
        self.pending: dict[int, list[Submission]] = {}
        self.commit_rejections: list[tuple[int, str]] = []

    def open_commit_window(self, height: int, start: int, end: int) -> None:
        self.log.open_window(height, start, end)
        self.pending[height] = []

    def close_commit_window(self, height: int) -> None:
        self.log.close_window(height)

    def on_commit(self, height: int, header: BlockHeader, now: int) -> Optional[CommitOutcome]:
        try:
            return self.log.commit_header(height, header, now)
        except (PhaseClosed, CommitCapExceeded) as exc:
            self.commit_rejections.append((height, str(exc)))
            return None

    def on_submission(self, height: int, sub: Submission) -> bool:
        if height != self.store.tip_height + 1:
            return False  # height already final (or not yet open): ignored
        self.pending.setdefault(height, []).append(sub)
        return True

    def decide(self, height: int, test_set: Dataset) -> AcceptanceDecision:
        subs = self.pending.get(height, [])
        decision = accept_block(self.log, subs, test_set, self.store.tip.header, self.config)
        if decision.is_accepted:
            finalize_height(self.store, decision)
        return decision
