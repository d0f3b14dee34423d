"""Deterministic discrete-event scheduler, delay models, and trace analysis.

Simulated time is integer milliseconds. Events with equal fire times are
processed in scheduling order (a monotone sequence number breaks ties), so a
run's event trace is a pure function of the scenario config and master seed.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional

from .nn.rng import CounterRng


@dataclass(frozen=True)
class SimEvent:
    fire_at: int
    seq: int
    kind: str
    sender: str
    receiver: str
    payload: Any


class Scheduler:
    def __init__(self) -> None:
        self.now = 0
        self._seq = 0
        self._heap: list[tuple[int, int, SimEvent]] = []

    def schedule(self, delay: int, kind: str, payload: Any = None, sender: str = "", receiver: str = "") -> int:
        """Enqueue an event `delay` ms from now; returns its sequence id."""
        if delay < 0:
            raise ValueError("delay must be non-negative")
        self._seq += 1
        ev = SimEvent(self.now + delay, self._seq, kind, sender, receiver, payload)
        heapq.heappush(self._heap, (ev.fire_at, ev.seq, ev))
        return ev.seq

    def pop(self) -> Optional[SimEvent]:
        if not self._heap:
            return None
        _, _, ev = heapq.heappop(self._heap)
        assert ev.fire_at >= self.now, "clock went backwards"
        self.now = ev.fire_at
        return ev

    def run(self, handler: Callable[[SimEvent], None]) -> None:
        """Drain the queue; the handler may schedule further events."""
        while True:
            ev = self.pop()
            if ev is None:
                return
            handler(ev)


@dataclass(frozen=True)
class DelayModel:
    """Message delay: constant, or uniform integers from a seeded stream."""

    kind: str = "constant"  # "constant" | "uniform"
    delay_ms: int = 5
    lo: int = 1
    hi: int = 50
    stream_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "uniform"):
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.kind == "constant" and self.delay_ms < 0:
            raise ValueError("delay must be non-negative")
        if self.kind == "uniform" and not 0 <= self.lo <= self.hi:
            raise ValueError("uniform delay needs 0 <= lo <= hi")

    def max_delay(self) -> int:
        return self.delay_ms if self.kind == "constant" else self.hi

    def sampler(self) -> Callable[[], int]:
        if self.kind == "constant":
            return lambda: self.delay_ms
        rng = CounterRng(self.stream_seed, 0xDE1A)
        return lambda: rng.randint(self.lo, self.hi)


@dataclass
class TraceEvent:
    t: int
    kind: str
    sender: str
    receiver: str
    digest: str = ""
    extra: dict = field(default_factory=dict)

    def to_json_line(self) -> str:
        row = {"t": self.t, "type": self.kind, "sender": self.sender, "receiver": self.receiver, "digest": self.digest}
        row.update(self.extra)
        return json.dumps(row, sort_keys=True)


class Trace:
    def __init__(self) -> None:
        self.events: list[TraceEvent] = []

    def log(self, t: int, kind: str, sender: str = "", receiver: str = "", digest: str = "", **extra: Any) -> None:
        self.events.append(TraceEvent(t, kind, sender, receiver, digest, extra))

    def dump_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for ev in self.events:
                fh.write(ev.to_json_line() + "\n")

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)


def recycling_ratio(trace: Iterable[TraceEvent]) -> Fraction:
    """Fraction of miner time spent training.

    Miners emit `train` and `validate` span events carrying an `until`
    field; the ratio is total training time over the total simulated span
    for every miner that emitted at least one span.
    """
    events = list(trace)
    miners = {e.sender for e in events if e.kind in ("train", "validate")}
    if not miners:
        return Fraction(0)
    end = 0
    for e in events:
        end = max(end, e.t, int(e.extra.get("until", e.t)))
    if end == 0:
        return Fraction(0)
    trained = sum(
        int(e.extra["until"]) - e.t for e in events if e.kind == "train" and e.sender in miners
    )
    return Fraction(trained, len(miners) * end)
