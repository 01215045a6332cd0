"""Deterministic discrete-event engine and named reproducible random streams.

Simulated time is kept as integer microseconds so that slot boundaries land
exactly on the same instants at every node; float arithmetic never touches
the clock. Event dispatch order is total: (fire_at, insertion id).
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

US_PER_S = 1_000_000

# Tagged event kinds; the tag is informational (tracing), dispatch goes
# through the stored callback.
KIND_SLOT = "slot-boundary"
KIND_FRAME = "frame-arrival"
KIND_MOBILITY = "mobility-step"
KIND_TIMER = "timer-expiry"
KIND_TRAFFIC = "traffic-generation"

_KINDS = {KIND_SLOT, KIND_FRAME, KIND_MOBILITY, KIND_TIMER, KIND_TRAFFIC}


class SchedulingError(Exception):
    """An event was scheduled in the past: a protocol logic bug."""


class InvariantViolation(Exception):
    """A run-time invariant check failed; carries diagnostics."""


@dataclass
class EventRecord:
    id: int
    fire_at: int  # microseconds
    kind: str
    target: Optional[int]  # node id, or None for network-global events
    fn: Callable[["EventRecord"], None] = field(repr=False)
    data: Any = None
    cancelled: bool = False
    fired: bool = False


class SimEngine:
    """Priority queue of timestamped events plus a monotonic clock.

    The clock only moves when an event is dequeued (and jumps to t_end when a
    run_until() call drains everything due). Ties between events at the same
    instant resolve by insertion id, which makes simultaneous events
    deterministic and replayable.
    """

    def __init__(self) -> None:
        self.now: int = 0
        self._heap: list[tuple[int, int]] = []
        self._pending: dict[int, EventRecord] = {}
        self._next_id = 0
        self.dispatched = 0

    def schedule(
        self,
        fire_at: int,
        kind: str,
        fn: Callable[[EventRecord], None],
        target: Optional[int] = None,
        data: Any = None,
    ) -> int:
        """Queue an event; returns its id. Rejects fire_at < now."""
        if kind not in _KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        if fire_at < self.now:
            raise SchedulingError(
                f"event scheduled at t={fire_at}us but clock is at {self.now}us"
            )
        ev = EventRecord(self._next_id, int(fire_at), kind, target, fn, data)
        self._next_id += 1
        self._pending[ev.id] = ev
        heapq.heappush(self._heap, (ev.fire_at, ev.id))
        return ev.id

    def cancel(self, event_id: int) -> bool:
        """True iff the event existed and had not fired; it will never fire."""
        ev = self._pending.pop(event_id, None)
        if ev is None:
            return False
        ev.cancelled = True
        return True

    def run_until(self, t_end: int) -> int:
        """Dispatch every event with fire_at <= t_end in order; clock ends at t_end."""
        if t_end < self.now:
            raise SchedulingError(f"run_until({t_end}) but clock is at {self.now}")
        fired = 0
        heap = self._heap
        pending = self._pending
        while heap and heap[0][0] <= t_end:
            fire_at, eid = heapq.heappop(heap)
            ev = pending.pop(eid, None)
            if ev is None:  # cancelled
                continue
            self.now = fire_at
            ev.fired = True
            self.dispatched += 1
            fired += 1
            ev.fn(ev)
        self.now = t_end
        return fired

    def peek_next(self) -> Optional[int]:
        """fire_at of the next live event, or None."""
        while self._heap:
            fire_at, eid = self._heap[0]
            if eid in self._pending:
                return fire_at
            heapq.heappop(self._heap)
        return None


class RngStream:
    """One reproducible draw sequence, seeded from (run_seed, name).

    Seeding goes through a string so the sequence depends only on the pair,
    never on interpreter hash randomization or platform word size.
    """

    def __init__(self, run_seed: int, name: str) -> None:
        self.name = name
        self._rng = random.Random(f"{run_seed}/{name}")

    def uniform01(self) -> float:
        """Uniform draw in [0, 1)."""
        return self._rng.random()

    def int_below(self, n: int) -> int:
        """Uniform integer in [0, n); n must be >= 1."""
        if n < 1:
            raise ValueError(f"int_below requires n >= 1, got {n}")
        return self._rng.randrange(n)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self._rng.random()

    def sample(self, population, k: int):
        return self._rng.sample(population, k)


class RngHub:
    """Hands out named streams for one run; one stream per concern so that
    extra draws in one protocol never perturb another."""

    def __init__(self, run_seed: int) -> None:
        self.run_seed = run_seed
        self._streams: dict[str, RngStream] = {}

    def stream(self, name: str) -> RngStream:
        st = self._streams.get(name)
        if st is None:
            st = RngStream(self.run_seed, name)
            self._streams[name] = st
        return st
