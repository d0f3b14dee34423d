"""Scenario driver: wires actors to the event scheduler and collects artifacts.

One `Simulation` runs one scenario: per height, a commit window (Phase 1)
where miners train and commit headers, then a reveal window (Phase 2) opened
by the requester's test-set release, closed by the full node's acceptance
decision. With pipelining on, the next height's commit window opens when the
reveal window opens. A failed round bumps an attempt counter, which both
invalidates every in-flight event of the failed layout and reopens the same
height with the next scheduled test set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .accuracy import Accuracy
from .actors import FullNodeActor, MinerActor, ModelRequester, RequesterSignal
from .chain import Block, ChainStore, coinbase, make_block, make_genesis
from .consensus import AcceptanceDecision, ChainChoice, compare_chains
from .errors import LinkageError, ScheduleExhausted
from .hashing import ZERO_DIGEST
from .netsim import Scheduler, SimEvent, Trace, recycling_ratio
from .nn.model import Model, deserialize_model, init_weights, serialize_model, TrainingParams
from .nn.task import Dataset, generate_task
from .nn.train import evaluate, train
from .scenario import ScenarioConfig


@dataclass
class RoundRecord:
    height: int
    attempt: int
    winner: str
    strategy: str
    claimed: Accuracy
    verified: Accuracy
    validations: int
    epochs_cumulative: int
    wall_ms: float


@dataclass
class SimResult:
    config: ScenarioConfig
    store: ChainStore
    trace: Trace
    rounds: list[RoundRecord]
    decisions: list[tuple[int, int, AcceptanceDecision]]
    train_set: Dataset
    released: dict[int, tuple[int, Dataset]]
    schedule: list[Dataset]
    next_schedule_index: int
    node: FullNodeActor
    miners: list[MinerActor]
    end_reason: str
    recycling: Fraction
    wins_by_strategy: dict[str, int]
    attack_report: Optional[dict] = None

    @property
    def summary(self) -> dict:
        best = max(
            (b.header.claimed_accuracy for b in self.store.blocks if b.header.claimed_accuracy),
            default=None,
        )
        adversary_wins = {
            s: self.wins_by_strategy.get(s, 0) for s in ("thief", "overfitter", "inflator")
        }
        return {
            "name": self.config.name,
            "seed": self.config.seed,
            "end_reason": self.end_reason,
            "accepted_blocks": self.store.tip_height,
            "final_best_accuracy": str(best) if best else None,
            "final_best_accuracy_float": best.as_float() if best else None,
            "recycling_ratio": str(self.recycling),
            "recycling_ratio_float": float(self.recycling),
            "wins_by_strategy": dict(self.wins_by_strategy),
            "adversary_wins": adversary_wins,
            "commit_rejections": len(self.node.commit_rejections),
            "decisions": [
                {"height": h, "attempt": a, **d.to_json_dict()} for h, a, d in self.decisions
            ],
            "attack": self.attack_report,
        }


class Simulation:
    def __init__(self, config: ScenarioConfig):
        self.cfg = config
        n_sets = config.rounds + max(1, config.task.extra_test_sets)
        self.train_set, self.schedule = generate_task(
            config.task_seed(),
            config.task.n_train,
            config.task.n_test,
            n_sets,
            input_dim=config.task.input_dim,
            num_classes=config.task.classes,
            center_radius=config.task.center_radius,
            noise=config.task.noise,
        )
        self.requester = ModelRequester(
            self.train_set, self.schedule, config.requester.stop_window, config.requester.stop_epsilon
        )
        self.miners = [
            MinerActor(i, mc, config, self.train_set) for i, mc in enumerate(config.miners)
        ]
        self.node = FullNodeActor("node0", ChainStore(make_genesis()), config.round)
        self.sched = Scheduler()
        self.trace = Trace()
        self.delay = config.network.sampler()

        self.attempt = 0
        self.done = False
        self.end_reason = "incomplete"
        self.released: dict[int, tuple[int, Dataset]] = {}
        self.node_tests: dict[int, Dataset] = {}
        self.rounds: list[RoundRecord] = []
        self.decisions: list[tuple[int, int, AcceptanceDecision]] = []
        self.wins: dict[str, int] = {}
        self._span_start: dict[int, Optional[int]] = {i: 0 for i in range(len(self.miners))}
        self._round_clock = time.perf_counter()
        self._end_time = 0

    # -- span bookkeeping for the energy-recycling measurement ----------------

    def _flush_train_span(self, i: int, until: int) -> None:
        start = self._span_start[i]
        if start is not None and until > start:
            self.trace.log(start, "train", self.miners[i].name, self.miners[i].name, until=until)
        self._span_start[i] = None

    def _begin_span(self, i: int, now: int) -> None:
        if self._span_start[i] is None:
            self._span_start[i] = now

    # -- event machine ---------------------------------------------------------

    def run(self) -> SimResult:
        self.sched.schedule(0, "phase1_open", {"height": 1, "attempt": 0})
        self.sched.run(self._handle)
        ratio = recycling_ratio(self.trace)
        result = SimResult(
            config=self.cfg,
            store=self.node.store,
            trace=self.trace,
            rounds=self.rounds,
            decisions=self.decisions,
            train_set=self.train_set,
            released=self.released,
            schedule=self.schedule,
            next_schedule_index=self.requester.next_index,
            node=self.node,
            miners=self.miners,
            end_reason=self.end_reason,
            recycling=ratio,
            wins_by_strategy=self.wins,
        )
        if self.cfg.attack.enabled:
            if self.node.store.tip_height > self.cfg.attack.fork_height:
                result.attack_report = run_double_spend(result)
            else:
                result.attack_report = {
                    "outcome": "NotRun",
                    "reason": "honest chain never grew past the fork height",
                    "replaced": False,
                }
        return result

    def _stale(self, payload: dict) -> bool:
        return self.done or payload.get("attempt", self.attempt) != self.attempt

    def _handle(self, ev: SimEvent) -> None:
        if self._stale(ev.payload or {}):
            return
        handler = getattr(self, "_on_" + ev.kind)
        handler(ev)

    def _on_phase1_open(self, ev: SimEvent) -> None:
        h, a = ev.payload["height"], ev.payload["attempt"]
        now = self.sched.now
        end = now + self.cfg.round.phase1_duration
        self.node.open_commit_window(h, now, end)
        self.trace.log(now, "phase1_open", "node0", "", height=h, attempt=a)
        for i in range(len(self.miners)):
            self._begin_span(i, now)
            self.sched.schedule(
                self.cfg.round.phase1_duration - self.cfg.commit_lead_ms,
                "commit_due",
                {"height": h, "attempt": a, "miner": i},
            )
        self.sched.schedule(self.cfg.round.phase1_duration, "phase1_close", {"height": h, "attempt": a})

    def _on_commit_due(self, ev: SimEvent) -> None:
        h, a, i = ev.payload["height"], ev.payload["attempt"], ev.payload["miner"]
        miner = self.miners[i]
        cand = miner.train_candidate(h, self.node.store.tip.header, self.sched.now, a)
        key = cand.header.commitment_key(self.cfg.round.claim_in_header)
        self.trace.log(self.sched.now, "commit_send", miner.name, "node0", key.hex(), height=h)
        self.sched.schedule(
            self.delay(), "commit_recv", {"height": h, "attempt": a, "miner": i, "header": cand.header},
            sender=miner.name, receiver="node0",
        )

    def _on_commit_recv(self, ev: SimEvent) -> None:
        h, a = ev.payload["height"], ev.payload["attempt"]
        header = ev.payload["header"]
        outcome = self.node.on_commit(h, header, self.sched.now)
        self.trace.log(
            self.sched.now, "commit_recv", self.miners[ev.payload["miner"]].name, "node0",
            header.commitment_key(self.cfg.round.claim_in_header).hex(),
            height=h, outcome=outcome.value if outcome else "rejected",
        )

    def _on_phase1_close(self, ev: SimEvent) -> None:
        h, a = ev.payload["height"], ev.payload["attempt"]
        self.node.close_commit_window(h)
        self.trace.log(self.sched.now, "phase1_close", "node0", "", height=h, attempt=a)
        self.sched.schedule(0, "phase2_open", {"height": h, "attempt": a})
        if self.cfg.round.pipeline_phases and h + 1 <= self.cfg.rounds:
            self.sched.schedule(0, "phase1_open", {"height": h + 1, "attempt": a})

    def _on_phase2_open(self, ev: SimEvent) -> None:
        h, a = ev.payload["height"], ev.payload["attempt"]
        now = self.sched.now
        try:
            decision = self.requester.tick(h)
        except ScheduleExhausted:
            self._end("schedule_exhausted")
            return
        if decision.signal is RequesterSignal.COLLECT_AND_STOP:
            self.trace.log(now, "collect_and_stop", "requester", "")
            self._end("stopped_by_requester")
            return
        if decision.signal is not RequesterSignal.RELEASE_TEST:
            return
        ds, idx = decision.dataset, decision.schedule_index
        self.released[h] = (idx, ds)
        self.trace.log(now, "release_test", "requester", "", ds.dataset_id.hex(), height=h, index=idx)
        self.sched.schedule(self.delay(), "test_recv_node", {"height": h, "attempt": a, "index": idx})
        for i in range(len(self.miners)):
            self.sched.schedule(
                self.delay(), "test_recv", {"height": h, "attempt": a, "miner": i, "index": idx},
                sender="requester", receiver=self.miners[i].name,
            )
        self.sched.schedule(self.cfg.round.phase2_duration, "phase2_close", {"height": h, "attempt": a})

    def _on_test_recv_node(self, ev: SimEvent) -> None:
        h = ev.payload["height"]
        self.node_tests[h] = self.released[h][1]
        self.trace.log(self.sched.now, "test_recv", "requester", "node0", self.released[h][1].dataset_id.hex(), height=h)

    def _on_test_recv(self, ev: SimEvent) -> None:
        h, a, i = ev.payload["height"], ev.payload["attempt"], ev.payload["miner"]
        now = self.sched.now
        miner = self.miners[i]
        ds = self.released[h][1]
        self.trace.log(now, "test_recv", "requester", miner.name, ds.dataset_id.hex(), height=h)
        v = self.cfg.validate_ms
        self._flush_train_span(i, now)
        if v > 0:
            self.trace.log(now, "validate", miner.name, miner.name, until=now + v)
        if self.cfg.round.pipeline_phases:
            self._span_start[i] = now + v  # training resumes immediately after
        self.sched.schedule(v, "submit_due", {"height": h, "attempt": a, "miner": i})

    def _on_submit_due(self, ev: SimEvent) -> None:
        h, a, i = ev.payload["height"], ev.payload["attempt"], ev.payload["miner"]
        miner = self.miners[i]
        ds = self.released[h][1]
        d = self.delay()
        sub = miner.reveal(ds, self.sched.now + d)
        if sub is None:
            return
        self.trace.log(
            self.sched.now, "submit_send", miner.name, "node0", sub.block.header.hash().hex(),
            height=h, claim=str(sub.claimed),
        )
        self.sched.schedule(d, "submit_recv", {"height": h, "attempt": a, "sub": sub})
        if miner.cfg.strategy != "thief":
            for j, other in enumerate(self.miners):
                if other.cfg.strategy == "thief" and j != i:
                    self.sched.schedule(
                        self.delay(), "snoop_recv", {"height": h, "attempt": a, "miner": j, "sub": sub}
                    )

    def _on_snoop_recv(self, ev: SimEvent) -> None:
        h, a, j = ev.payload["height"], ev.payload["attempt"], ev.payload["miner"]
        thief = self.miners[j]
        d = self.delay()
        stolen = thief.steal(ev.payload["sub"], self.sched.now + d)
        if stolen is None:
            return
        self.trace.log(
            self.sched.now, "steal_submit", thief.name, "node0", stolen.block.header.hash().hex(), height=h
        )
        self.sched.schedule(d, "submit_recv", {"height": h, "attempt": a, "sub": stolen})

    def _on_submit_recv(self, ev: SimEvent) -> None:
        h = ev.payload["height"]
        sub = ev.payload["sub"]
        ok = self.node.on_submission(h, sub)
        self.trace.log(
            self.sched.now, "submit_recv", sub.submitter.decode(), "node0",
            sub.block.header.hash().hex(), height=h, admitted=ok,
        )

    def _on_phase2_close(self, ev: SimEvent) -> None:
        h, a = ev.payload["height"], ev.payload["attempt"]
        now = self.sched.now
        ds = self.node_tests.get(h, self.released[h][1])
        decision = self.node.decide(h, ds)
        self.decisions.append((h, a, decision))
        if decision.is_accepted:
            block = decision.accepted
            miner = next(m for m in self.miners if m.miner_id == block.header.miner_id)
            self.wins[miner.cfg.strategy] = self.wins.get(miner.cfg.strategy, 0) + 1
            self.requester.observe_accepted(h, block.header.claimed_accuracy)
            wall_ms = (time.perf_counter() - self._round_clock) * 1000.0
            self._round_clock = time.perf_counter()
            self.rounds.append(
                RoundRecord(
                    height=h,
                    attempt=a,
                    winner=miner.name,
                    strategy=miner.cfg.strategy,
                    claimed=block.header.claimed_accuracy,
                    verified=block.header.claimed_accuracy,
                    validations=decision.validations_performed,
                    epochs_cumulative=h * self.cfg.epoch_budget,
                    wall_ms=wall_ms,
                )
            )
            self.trace.log(
                now, "accept", "node0", "", block.header.hash().hex(),
                height=h, winner=miner.name, validations=decision.validations_performed,
            )
            if h >= self.cfg.rounds:
                self._end("completed")
                return
            for i in range(len(self.miners)):
                self.sched.schedule(self.delay(), "accept_recv", {"height": h, "attempt": a, "miner": i, "block": block})
            if not self.cfg.round.pipeline_phases:
                self.sched.schedule(0, "phase1_open", {"height": h + 1, "attempt": a})
        else:
            self.trace.log(
                now, "round_failed", "node0", "", height=h,
                skipped=[r.value for _, r in decision.skipped], validations=decision.validations_performed,
            )
            self.requester.observe_round_failed(h)
            self.attempt += 1
            self.sched.schedule(0, "phase1_open", {"height": h, "attempt": self.attempt})

    def _on_accept_recv(self, ev: SimEvent) -> None:
        i = ev.payload["miner"]
        block = ev.payload["block"]
        self.miners[i].adopt(block)
        self.trace.log(self.sched.now, "accept_recv", "node0", self.miners[i].name, block.header.hash().hex())
        if not self.cfg.round.pipeline_phases:
            self._begin_span(i, self.sched.now)

    def _end(self, reason: str) -> None:
        self.done = True
        self.end_reason = reason
        self._end_time = self.sched.now
        for i in range(len(self.miners)):
            self._flush_train_span(i, self._end_time)
        self.trace.log(self._end_time, "sim_end", "", "", reason=reason)


def run_scenario(config: ScenarioConfig) -> SimResult:
    return Simulation(config).run()


# -- double-spend attack -------------------------------------------------------


def run_double_spend(result: SimResult) -> dict:
    """Private-fork attack against a finished honest run.

    The attacker re-mines heights fork+1..tip+1 with its own compute share,
    training its own lineage on the same schedule of released test sets plus
    the next unreleased one for the extra block, then presents the fork.
    Colluding full nodes deliver it to the honest node as a whole chain
    (compare_chains); without collusion the blocks arrive one by one and die
    on finality.
    """
    cfg = result.config
    attack = cfg.attack
    store = result.store
    fork = attack.fork_height
    if fork >= store.tip_height:
        raise LinkageError("fork height must be below the honest tip")

    test_map: dict[int, Dataset] = {h: ds for h, (_, ds) in result.released.items()}
    extra_height = store.tip_height + 1
    if result.next_schedule_index >= len(result.schedule):
        raise ScheduleExhausted("no unreleased test set left for the attack's extra block")
    test_map[extra_height] = result.schedule[result.next_schedule_index]

    layer_sizes = cfg.trainer.layer_sizes(result.train_set.input_dim, result.train_set.num_classes)
    attacker_seed = cfg.seed * 9_999_991 + 7
    epochs = cfg.epochs_for(attack.share)

    challenger = ChainStore(result.store.block_at(0))
    for h in range(1, fork + 1):
        challenger.append(store.block_at(h))

    if fork == 0:
        base_flat = init_weights(
            TrainingParams(layer_sizes, cfg.trainer.learning_rate, 0, attacker_seed)
        ).flat
        base_hash = ZERO_DIGEST
    else:
        base_model = deserialize_model(store.block_at(fork).model_bytes)
        base_flat = base_model.flat
        base_hash = store.block_at(fork).header.model_hash

    gaps = []
    rng_tag = 0
    flat = base_flat
    for h in range(fork + 1, extra_height + 1):
        params = TrainingParams(layer_sizes, cfg.trainer.learning_rate, epochs, attacker_seed, base_hash)
        model = train(params, result.train_set, start_model=Model(layer_sizes, flat.copy()), epochs_to_run=epochs)
        model_bytes = serialize_model(model)
        claim = evaluate(model, test_map[h])
        block = make_block(
            height=h,
            prev_header_hash=challenger.tip.header.hash(),
            transactions=[_attacker_coinbase(cfg, rng_tag)],
            model_bytes=model_bytes,
            training_params=params,
            claimed_accuracy=claim,
            miner_id=b"attacker",
            now=0,
        )
        challenger.append(block)
        honest_claim = (
            store.block_at(h).header.claimed_accuracy if h <= store.tip_height else None
        )
        gaps.append(
            {
                "height": h,
                "honest": str(honest_claim) if honest_claim else None,
                "attacker": str(claim),
                "dominates": honest_claim is not None and claim > honest_claim,
            }
        )
        base_hash = block.header.model_hash
        flat = model.flat
        rng_tag += 1

    if attack.colluding_full_nodes:
        choice = compare_chains(store, challenger, result.train_set, test_map)
        outcome = choice.value
    else:
        # Without collusion the fork arrives one block at a time, all at
        # heights the honest node has already finalized.
        admitted = sum(
            result.node.on_submission(b.header.height, _as_submission(b))
            for b in challenger.blocks[fork + 1 :]
            if b.header.height <= store.tip_height
        )
        outcome = "RejectedAtFinality" if admitted == 0 else "PartiallyAdmitted"
    return {
        "share": str(attack.share),
        "fork_height": fork,
        "colluding_full_nodes": attack.colluding_full_nodes,
        "challenger_length": challenger.tip_height,
        "honest_length": store.tip_height,
        "outcome": outcome,
        "replaced": outcome == ChainChoice.REPLACE.value,
        "per_height": gaps,
    }


def _attacker_coinbase(cfg: ScenarioConfig, tag: int):
    return coinbase(cfg.reward, b"attacker")


def _as_submission(block: Block):
    from .consensus import Submission

    return Submission(block, 0, block.header.miner_id)
