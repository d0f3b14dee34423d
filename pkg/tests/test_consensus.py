"""Protocol semantics: commitments, ordered acceptance, finality, fork choice."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trainchain.accuracy import Accuracy
from trainchain.chain import Block, ChainStore, coinbase, make_block, make_genesis
from trainchain.consensus import (
    AcceptanceDecision,
    ChainChoice,
    CommitOutcome,
    CommitmentLog,
    RoundConfig,
    SkipReason,
    Submission,
    accept_block,
    compare_chains,
    finalize_height,
    order_submissions,
    reversibility_index,
    verify_chain,
)
from trainchain.errors import CommitCapExceeded, ForeignChain, LinkageError, PhaseClosed
from trainchain.hashing import ZERO_DIGEST, hash_bytes
from trainchain.nn.model import TrainingParams, init_weights, model_hash, serialize_model
from trainchain.nn.task import generate_task
from trainchain.nn.train import evaluate, train

CFG = RoundConfig(phase1_duration=100, phase2_duration=50)


@pytest.fixture(scope="module")
def world():
    """A tiny trained world: genesis, one honest block candidate, datasets."""
    train_set, tests = generate_task(31, 48, 96, 4, num_classes=3, noise=1.1)
    genesis = make_genesis()
    params = TrainingParams((2, 8, 3), 0.05, 12, 7, start_model_hash=ZERO_DIGEST)
    model = train(params, train_set, epochs_to_run=12)
    return {
        "train": train_set,
        "tests": tests,
        "genesis": genesis,
        "params": params,
        "model": model,
        "model_bytes": serialize_model(model),
    }


def honest_block(world, *, height=1, miner=b"m1", test_index=0, claim=None, prev=None):
    prev_header = (prev or world["genesis"]).header
    acc = claim or evaluate(world["model"], world["tests"][test_index])
    return make_block(
        height=height,
        prev_header_hash=prev_header.hash(),
        transactions=[coinbase(50, miner)],
        model_bytes=world["model_bytes"],
        training_params=world["params"],
        claimed_accuracy=acc,
        miner_id=miner,
        now=90,
    )


class TestCommitmentLog:
    def test_commit_inside_window(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        hdr = honest_block(world).header
        assert log.commit_header(1, hdr, 0) is CommitOutcome.RECORDED
        assert log.is_committed(1, hdr)

    def test_boundaries(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 10, 100)
        hdr = honest_block(world).header
        with pytest.raises(PhaseClosed):
            log.commit_header(1, hdr, 9)
        with pytest.raises(PhaseClosed):
            log.commit_header(1, hdr, 100)
        with pytest.raises(PhaseClosed):
            log.commit_header(1, hdr, 101)
        assert log.commit_header(1, hdr, 99) is CommitOutcome.RECORDED

    def test_idempotent(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        hdr = honest_block(world).header
        log.commit_header(1, hdr, 5)
        assert log.commit_header(1, hdr, 6) is CommitOutcome.DUPLICATE
        assert len(log.entries(1)) == 1

    def test_closed_window_rejects_even_if_time_claims_otherwise(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        log.close_window(1)
        with pytest.raises(PhaseClosed):
            log.commit_header(1, honest_block(world).header, 50)

    def test_per_miner_cap(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        log.commit_header(1, honest_block(world).header, 1)
        other = honest_block(world, claim=Accuracy(1, 2))  # different claim: same key though
        # same commitment key is a duplicate, not a cap violation
        assert log.commit_header(1, other.header, 2) is CommitOutcome.DUPLICATE
        third = make_block(1, world["genesis"].header.hash(), [coinbase(9, b"m1")],
                           world["model_bytes"], world["params"], None, b"m1", 3)
        with pytest.raises(CommitCapExceeded):
            log.commit_header(1, third.header, 3)

    def test_reopen_resets_entries(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        log.commit_header(1, honest_block(world).header, 1)
        log.close_window(1)
        log.open_window(1, 200, 300)
        assert log.entries(1) == {}


class TestOrderSubmissions:
    def test_higher_claim_first(self, world):
        hi = Submission(honest_block(world, claim=Accuracy(95, 100)), 5, b"a")
        lo = Submission(honest_block(world, claim=Accuracy(90, 100), miner=b"b"), 2, b"b")
        assert order_submissions([lo, hi]) == [hi, lo]

    def test_equal_claims_earlier_arrival_first(self, world):
        a = Submission(honest_block(world, claim=Accuracy(9, 10)), 2, b"a")
        b = Submission(honest_block(world, claim=Accuracy(90, 100), miner=b"b"), 5, b"b")
        assert order_submissions([b, a]) == [a, b]

    def test_full_tie_breaks_on_header_hash(self, world):
        a = Submission(honest_block(world, claim=Accuracy(9, 10), miner=b"a"), 2, b"a")
        b = Submission(honest_block(world, claim=Accuracy(9, 10), miner=b"b"), 2, b"b")
        want = sorted([a, b], key=lambda s: s.block.header.hash())
        assert order_submissions([b, a]) == want



def test_order_permutation_invariant(world):
    subs = [
        Submission(honest_block(world, claim=Accuracy(c, 10), miner=bytes([65 + i])), t, bytes([65 + i]))
        for i, (c, t) in enumerate([(9, 1), (9, 2), (8, 1), (7, 9), (10, 4), (8, 1)])
    ]
    base = order_submissions(subs)
    import itertools

    for perm in itertools.islice(itertools.permutations(subs), 0, 120, 7):
        assert order_submissions(list(perm)) == base


class TestAcceptBlock:
    def _log_with(self, world, *blocks):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        for b in blocks:
            log.commit_header(1, b.header, 10)
        return log

    def test_inflated_claim_skipped_then_honest_accepted(self, world):
        honest = honest_block(world)
        true_acc = evaluate(world["model"], world["tests"][0])
        inflated = Accuracy(min(true_acc.total, true_acc.correct + 1), true_acc.total)
        assert inflated != true_acc, "fixture model unexpectedly perfect"
        liar_block = honest_block(world, miner=b"liar", claim=inflated)
        log = self._log_with(world, honest, liar_block)
        subs = [Submission(honest, 120, b"m1"), Submission(liar_block, 110, b"liar")]
        decision = accept_block(log, subs, world["tests"][0], world["genesis"].header, CFG)
        assert decision.is_accepted
        assert decision.accepted.header.miner_id == b"m1"
        assert decision.validations_performed == 2
        assert [r for _, r in decision.skipped] == [SkipReason.ACCURACY_MISMATCH]

    def test_uncommitted_submission_ignored(self, world):
        honest = honest_block(world)
        thief = honest_block(world, miner=b"thief")
        log = self._log_with(world, honest)  # thief never committed
        subs = [Submission(thief, 105, b"thief"), Submission(honest, 120, b"m1")]
        decision = accept_block(log, subs, world["tests"][0], world["genesis"].header, CFG)
        assert decision.is_accepted and decision.accepted.header.miner_id == b"m1"
        assert (thief.header.hash(), SkipReason.NOT_COMMITTED) in decision.skipped
        # the skip costs no model evaluation
        assert decision.validations_performed == 1

    def test_empty_submissions_round_fails(self, world):
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        decision = accept_block(log, [], world["tests"][0], world["genesis"].header, CFG)
        assert not decision.is_accepted and decision.validations_performed == 0

    def test_oversize_model_skipped(self, world):
        small_cfg = RoundConfig(100, 50, max_model_bytes=16)
        honest = honest_block(world)
        log = CommitmentLog(small_cfg)
        log.open_window(1, 0, 100)
        log.commit_header(1, honest.header, 10)
        decision = accept_block(log, [Submission(honest, 120, b"m1")], world["tests"][0],
                                world["genesis"].header, small_cfg)
        assert not decision.is_accepted
        assert [r for _, r in decision.skipped] == [SkipReason.OVERSIZE_MODEL]

    def test_structure_invalid_skipped(self, world):
        honest = honest_block(world)
        bad = honest_block(world, miner=b"bad", height=2)  # wrong height for this round
        log = self._log_with(world, honest)
        log.open_window(2, 0, 100)
        log.commit_header(1, bad.header, 10)
        subs = [Submission(bad, 100, b"bad"), Submission(honest, 120, b"m1")]
        decision = accept_block(log, subs, world["tests"][0], world["genesis"].header, CFG)
        assert decision.is_accepted and decision.accepted.header.miner_id == b"m1"
        assert (bad.header.hash(), SkipReason.STRUCTURE_INVALID) in decision.skipped

    def test_honest_top_candidate_costs_one_validation(self, world):
        honest = honest_block(world)
        log = self._log_with(world, honest)
        decision = accept_block(log, [Submission(honest, 120, b"m1")], world["tests"][0],
                                world["genesis"].header, CFG)
        assert decision.is_accepted and decision.validations_performed == 1


class TestFinality:
    def test_resubmission_after_finalize_rejected(self, world):
        store = ChainStore(world["genesis"])
        honest = honest_block(world)
        log = CommitmentLog(CFG)
        log.open_window(1, 0, 100)
        log.commit_header(1, honest.header, 10)
        decision = accept_block(log, [Submission(honest, 120, b"m1")], world["tests"][0],
                                world["genesis"].header, CFG)
        assert finalize_height(store, decision)
        assert store.tip_height == 1
        # a different single block at the same height is refused outright
        from trainchain.actors import FullNodeActor

        node = FullNodeActor("n", store, CFG)
        rival = honest_block(world, miner=b"rival")
        assert node.on_submission(1, Submission(rival, 130, b"rival")) is False

    def test_round_failed_leaves_store_unchanged(self, world):
        store = ChainStore(world["genesis"])
        decision = AcceptanceDecision(None, 0, [], failure_reason="none")
        assert finalize_height(store, decision) is False
        assert store.tip_height == 0

    def test_linkage_error_on_wrong_tip(self, world):
        store = ChainStore(world["genesis"])
        block2 = honest_block(world, height=3)
        with pytest.raises(LinkageError):
            finalize_height(store, AcceptanceDecision(block2, 1, []))


def _grown_chain(world, heights=3):
    """Chain where each block retrains from the previous accepted model."""
    store = ChainStore(world["genesis"])
    train_set, tests = world["train"], world["tests"]
    prev_model = None
    prev_hash = ZERO_DIGEST
    for h in range(1, heights + 1):
        params = TrainingParams((2, 8, 3), 0.05, 6, 7, start_model_hash=prev_hash)
        model = train(params, train_set, start_model=prev_model, epochs_to_run=6)
        block = make_block(
            height=h,
            prev_header_hash=store.tip.header.hash(),
            transactions=[coinbase(50, b"m")],
            model_bytes=serialize_model(model),
            training_params=params,
            claimed_accuracy=evaluate(model, tests[h - 1]),
            miner_id=b"m",
            now=h,
        )
        store.append(block)
        prev_model, prev_hash = model, block.header.model_hash
    return store, {h: tests[h - 1] for h in range(1, heights + 1)}


class TestVerifyChain:
    def test_honest_chain_verifies(self, world):
        store, tmap = _grown_chain(world)
        report = verify_chain(store, world["train"], tmap)
        assert report.overall and report.failing_heights() == []

    def test_wrong_epochs_fails_retrain(self, world):
        store, tmap = _grown_chain(world)
        b = store.block_at(2)
        b.training_params = TrainingParams((2, 8, 3), 0.05, 5, 7,
                                           start_model_hash=b.training_params.start_model_hash)
        report = verify_chain(store, world["train"], tmap)
        assert not report.overall and 2 in report.failing_heights()

    def test_self_consistent_model_swap_caught_only_by_retraining(self, world):
        """An adversary who flips a model byte and rebuilds every hash
        downstream defeats structural checks; deterministic retraining is
        what catches the swap."""
        from dataclasses import replace

        store, tmap = _grown_chain(world)
        blocks = [Block(b.header, list(b.transactions), b.model_bytes, b.training_params)
                  for b in store.blocks]
        target = 2
        blob = bytearray(blocks[target].model_bytes)
        blob[200] ^= 0x01
        prev_hash = blocks[target - 1].header.hash()
        for h in range(target, len(blocks)):
            hdr, params, mb = blocks[h].header, blocks[h].training_params, blocks[h].model_bytes
            if h == target:
                mb = bytes(blob)
                hdr = replace(hdr, model_hash=hash_bytes(mb))
            if h == target + 1:
                params = replace(params, start_model_hash=blocks[target].header.model_hash)
            hdr = replace(hdr, prev_header_hash=prev_hash)
            blocks[h] = Block(hdr, blocks[h].transactions, mb, params)
            prev_hash = hdr.hash()
        forged = ChainStore.from_blocks(blocks)
        report = verify_chain(forged, world["train"], tmap)
        entry = report.heights[target]
        assert entry.structure_ok, "tamper was supposed to be structurally self-consistent"
        assert not entry.retrain_hash_match
        assert not report.overall and target in report.failing_heights()

    def test_pruned_chain_structure_only(self, world):
        from trainchain.chain import prune_models

        store, tmap = _grown_chain(world)
        prune_models(store, keep_top_k=1)
        report = verify_chain(store, world["train"], tmap)
        assert report.overall  # pruned heights get vacuous retrain/accuracy checks
        pruned_notes = [h.notes for h in report.heights if h.height in store.pruned_heights]
        assert all(any("pruned" in n for n in notes) for notes in pruned_notes)


class TestCompareChains:
    def test_longer_dominant_verifiable_replaces(self, world):
        current, tmap = _grown_chain(world, heights=2)
        challenger, tmap4 = _grown_chain(world, heights=3)
        # make challenger strictly better: retrain longer per height
        store = ChainStore(world["genesis"])
        prev_model, prev_hash = None, ZERO_DIGEST
        for h in range(1, 4):
            params = TrainingParams((2, 8, 3), 0.05, 40, 8, start_model_hash=prev_hash)
            model = train(params, world["train"], start_model=prev_model, epochs_to_run=40)
            block = make_block(h, store.tip.header.hash(), [coinbase(50, b"rich")],
                               serialize_model(model), params,
                               evaluate(model, world["tests"][h - 1]), b"rich", h)
            store.append(block)
            prev_model, prev_hash = model, block.header.model_hash
        tmap = {h: world["tests"][h - 1] for h in range(1, 4)}
        cur_accs = [current.block_at(h).header.claimed_accuracy for h in (1, 2)]
        cha_accs = [store.block_at(h).header.claimed_accuracy for h in (1, 2)]
        if all(c > a for c, a in zip(cha_accs, cur_accs)):
            assert compare_chains(current, store, world["train"], tmap) is ChainChoice.REPLACE
        else:
            assert compare_chains(current, store, world["train"], tmap) is ChainChoice.KEEP_CURRENT

    def test_equal_length_keeps_current(self, world):
        current, tmap = _grown_chain(world, heights=2)
        challenger, _ = _grown_chain(world, heights=2)
        assert compare_chains(current, challenger, world["train"], tmap) is ChainChoice.KEEP_CURRENT

    def test_pure_extension_of_current_chain_is_adopted(self, world):
        # not a fork: the challenger agrees at every height and adds one more
        current, _ = _grown_chain(world, heights=2)
        challenger, tmap3 = _grown_chain(world, heights=3)
        assert compare_chains(current, challenger, world["train"], tmap3) is ChainChoice.REPLACE

    def test_lower_accuracy_at_one_height_keeps_current(self, world):
        current, tmap = _grown_chain(world, heights=2)
        # true fork from genesis: fewer epochs per height, so accuracy trails
        store = ChainStore(world["genesis"])
        prev_model, prev_hash = None, ZERO_DIGEST
        for h in range(1, 4):
            params = TrainingParams((2, 8, 3), 0.05, 2, 9, start_model_hash=prev_hash)
            model = train(params, world["train"], start_model=prev_model, epochs_to_run=2)
            block = make_block(h, store.tip.header.hash(), [coinbase(50, b"rival")],
                               serialize_model(model), params,
                               evaluate(model, world["tests"][h - 1]), b"rival", h)
            store.append(block)
            prev_model, prev_hash = model, block.header.model_hash
        tmap3 = {h: world["tests"][h - 1] for h in range(1, 4)}
        dominated = all(
            store.block_at(h).header.claimed_accuracy > current.block_at(h).header.claimed_accuracy
            for h in (1, 2)
        )
        assert not dominated, "rival unexpectedly dominates; pick different seeds"
        assert compare_chains(current, store, world["train"], tmap3) is ChainChoice.KEEP_CURRENT

    def test_foreign_genesis_rejected(self, world):
        current, tmap = _grown_chain(world, heights=2)
        from trainchain.chain import make_genesis

        foreign = ChainStore(make_genesis(created_at=999))
        with pytest.raises(ForeignChain):
            compare_chains(current, foreign, world["train"], tmap)


class TestReversibility:
    def test_suffix_max_examples(self, world):
        store, _ = _grown_chain(world, heights=3)
        claims = {h: store.block_at(h).header.claimed_accuracy for h in (1, 2, 3)}
        idx = reversibility_index(store)
        for h in (1, 2, 3):
            want = max(claims[j].as_fraction() for j in range(h, 4))
            assert idx[h] == want

    def test_hand_cases(self):
        genesis = make_genesis()
        store = ChainStore(genesis)
        for i, acc in enumerate([Accuracy(6, 10), Accuracy(9, 10), Accuracy(8, 10)], start=1):
            block = make_block(i, store.tip.header.hash(), [coinbase(1, b"m")],
                               f"m{i}".encode(), None, acc, b"m", i)
            store.append(block)
        idx = reversibility_index(store)
        assert [idx[h] for h in (1, 2, 3)] == [Fraction(9, 10), Fraction(9, 10), Fraction(8, 10)]

    def test_single_block(self):
        store = ChainStore(make_genesis())
        block = make_block(1, store.tip.header.hash(), [coinbase(1, b"m")], b"m1", None,
                           Accuracy(3, 4), b"m", 1)
        store.append(block)
        assert reversibility_index(store) == {1: Fraction(3, 4)}


class TestClaimInHeaderMode:
    def test_claim_bound_at_commit(self, world):
        cfg = RoundConfig(100, 50, claim_in_header=True)
        log = CommitmentLog(cfg)
        log.open_window(1, 0, 100)
        true_acc = evaluate(world["model"], world["tests"][0])
        block = honest_block(world, claim=true_acc)
        log.commit_header(1, block.header, 10)
        decision = accept_block(log, [Submission(block, 120, b"m1")], world["tests"][0],
                                world["genesis"].header, cfg)
        assert decision.is_accepted

    def test_claim_change_after_commit_breaks_commitment(self, world):
        cfg = RoundConfig(100, 50, claim_in_header=True)
        log = CommitmentLog(cfg)
        log.open_window(1, 0, 100)
        block = honest_block(world, claim=Accuracy(1, 2))
        log.commit_header(1, block.header, 10)
        revealed = honest_block(world, claim=evaluate(world["model"], world["tests"][0]))
        decision = accept_block(log, [Submission(revealed, 120, b"m1")], world["tests"][0],
                                world["genesis"].header, cfg)
        assert not decision.is_accepted
        assert [r for _, r in decision.skipped] == [SkipReason.NOT_COMMITTED]
