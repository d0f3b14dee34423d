"""Scheduler determinism, delay models, and the recycling measurement."""

from fractions import Fraction

import pytest

from trainchain.netsim import DelayModel, Scheduler, Trace, TraceEvent, recycling_ratio


class TestScheduler:
    def test_fifo_among_equal_times(self):
        sched = Scheduler()
        seen = []
        sched.schedule(5, "a")
        sched.schedule(5, "b")
        sched.schedule(0, "c")
        sched.run(lambda ev: seen.append(ev.kind))
        assert seen == ["c", "a", "b"]

    def test_zero_delay_fires_after_queued_same_time_events(self):
        sched = Scheduler()
        seen = []

        def handler(ev):
            seen.append(ev.kind)
            if ev.kind == "first":
                sched.schedule(0, "child")

        sched.schedule(3, "first")
        sched.schedule(3, "second")
        sched.run(handler)
        assert seen == ["first", "second", "child"]

    def test_negative_delay_rejected(self):
        with pytest.raises(ValueError):
            Scheduler().schedule(-1, "x")

    def test_clock_monotone(self):
        sched = Scheduler()
        times = []
        for d in (7, 3, 3, 9, 0):
            sched.schedule(d, "e")
        sched.run(lambda ev: times.append(ev.fire_at))
        assert times == sorted(times)


class TestDelayModel:
    def test_constant(self):
        assert DelayModel("constant", delay_ms=9).sampler()() == 9

    def test_uniform_bounds_and_determinism(self):
        model = DelayModel("uniform", lo=2, hi=11, stream_seed=4)
        a = [model.sampler()() for _ in range(200)]
        b = [model.sampler()() for _ in range(200)]
        assert a == b
        assert min(a) >= 2 and max(a) <= 11

    def test_validation(self):
        with pytest.raises(ValueError):
            DelayModel("constant", delay_ms=-1)
        with pytest.raises(ValueError):
            DelayModel("uniform", lo=5, hi=4)
        with pytest.raises(ValueError):
            DelayModel("weird")


def _span(t, until, miner="m"):
    return TraceEvent(t, "train", miner, miner, extra={"until": until})


def _validate(t, until, miner="m"):
    return TraceEvent(t, "validate", miner, miner, extra={"until": until})


class TestRecyclingRatio:
    def test_all_training_is_one(self):
        trace = [_span(0, 100), TraceEvent(100, "sim_end", "", "")]
        assert recycling_ratio(trace) == Fraction(1)

    def test_half_overhead_is_half(self):
        trace = [_span(0, 50), _validate(50, 100), TraceEvent(100, "sim_end", "", "")]
        assert recycling_ratio(trace) == Fraction(1, 2)

    def test_bitcoin_like_interval(self):
        # 600 s interval, 2 s validation per round
        events = []
        t = 0
        for _ in range(4):
            events.append(_span(t, t + 598_000))
            events.append(_validate(t + 598_000, t + 600_000))
            t += 600_000
        ratio = recycling_ratio(events)
        assert ratio == Fraction(598_000 * 4, 600_000 * 4)
        assert ratio >= Fraction(99, 100)

    def test_multiple_miners_average(self):
        trace = [_span(0, 100, "a"), _span(0, 50, "b"), TraceEvent(100, "sim_end", "", "")]
        assert recycling_ratio(trace) == Fraction(150, 200)

    def test_empty_trace(self):
        assert recycling_ratio([]) == Fraction(0)


class TestTraceExport:
    def test_jsonl_deterministic(self, tmp_path):
        t1, t2 = Trace(), Trace()
        for t in (t1, t2):
            t.log(1, "a", "x", "y", "00ff", height=2)
            t.log(2, "b", "", "", note="n")
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        t1.dump_jsonl(p1)
        t2.dump_jsonl(p2)
        assert p1.read_bytes() == p2.read_bytes()
        lines = p1.read_text().splitlines()
        assert len(lines) == 2 and '"type": "a"' in lines[0]
