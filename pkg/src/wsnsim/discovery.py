"""Neighbor-discovery baselines and discovery bookkeeping.

Two schedule families are implemented:

* randomized talk/listen beaconing: in each slot every node independently
  talks with probability p or listens; a listener discovers a talker only if
  that talker is its sole in-range talker that slot;
* prime-multiple wake schedules: a node with prime set P and offset o is
  awake in slot t iff (t - o) is divisible by some p in P. Two nodes holding
  coprime primes are guaranteed a shared awake slot (Chinese remainder).

The ledger records who discovered whom and when; it only ever grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .core import RngStream


@dataclass(frozen=True)
class DiscoSchedule:
    node_id: int
    primes: tuple[int, ...]
    offset: int = 0

    def __post_init__(self) -> None:
        if not self.primes:
            raise ValueError("schedule needs at least one prime")
        if len(set(self.primes)) != len(self.primes) or min(self.primes) < 2:
            raise ValueError("primes must be distinct and >= 2")
        if self.offset < 0:
            raise ValueError("offset must be >= 0")
        object.__setattr__(self, "primes", tuple(sorted(self.primes)))

    @property
    def period(self) -> int:
        return math.lcm(*self.primes)


def disco_awake(s: DiscoSchedule, t: int) -> bool:
    """Awake in slot t iff (t - offset) is a multiple of one of the primes."""
    if t < 0:
        raise ValueError("slot index must be >= 0")
    return any((t - s.offset) % p == 0 for p in s.primes)


def disco_duty_cycle(s: DiscoSchedule) -> tuple[Fraction, Fraction]:
    """Exact awake fraction over one period, plus the nominal sum of prime
    reciprocals it is usually quoted as.

    The exact value comes from inclusion-exclusion over the prime set; the
    nominal sum double-counts slots that several primes hit, so the two only
    agree for a single prime.
    """
    period = s.period
    n = len(s.primes)
    count = 0
    for mask in range(1, 1 << n):
        subset = [s.primes[i] for i in range(n) if mask >> i & 1]
        l = math.lcm(*subset)
        sign = -1 if len(subset) % 2 == 0 else 1
        count += sign * (period // l)
    exact = Fraction(count, period)
    nominal = sum(Fraction(1, p) for p in s.primes)
    return exact, nominal


def disco_first_meeting(
    a: DiscoSchedule, b: DiscoSchedule, horizon: int
) -> Optional[int]:
    """First slot in [0, horizon) where both schedules are awake, or None."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    for t in range(horizon):
        if disco_awake(a, t) and disco_awake(b, t):
            return t
    return None


def default_prime_sets(node_ids: Iterable[int]) -> dict[int, DiscoSchedule]:
    """Rotating assignment of coprime-rich prime pairs; offsets spread by
    node id modulo the smallest prime so identical sets rarely align."""
    pool = ((3, 5), (5, 7), (7, 11))
    out = {}
    for nid in sorted(node_ids):
        primes = pool[nid % len(pool)]
        out[nid] = DiscoSchedule(nid, primes, offset=nid % min(primes))
    return out


class NeighborLedger:
    """Per node, the first time each neighbor was discovered. Entries are
    write-once; the discovered set only grows."""

    def __init__(self) -> None:
        self.first: dict[int, dict[int, int]] = {}

    def record(self, node: int, neighbor: int, t_us: int) -> bool:
        """True iff this is a first discovery."""
        if node == neighbor:
            return False
        known = self.first.setdefault(node, {})
        if neighbor in known:
            return False
        known[neighbor] = t_us
        return True

    def count(self) -> int:
        return sum(len(v) for v in self.first.values())

    def pairs(self) -> set[tuple[int, int]]:
        return {(n, m) for n, known in self.first.items() for m in known}


def hello_slot(
    node_ids: Iterable[int],
    adjacency: dict[int, set[int]],
    talk_prob: float,
    rng: RngStream,
) -> tuple[set[int], set[tuple[int, int]]]:
    """One talk/listen slot.

    Returns (talkers, discoveries) where discoveries are (listener, talker)
    pairs: the talker was the listener's only in-range talker this slot.
    Draw order is ascending node id, so replays are exact.
    """
    if not 0.0 <= talk_prob <= 1.0:
        raise ValueError("talk probability must be in [0, 1]")
    ids = sorted(node_ids)
    talkers = {nid for nid in ids if rng.uniform01() < talk_prob}
    discoveries = set()
    for listener in ids:
        if listener in talkers:
            continue
        audible = adjacency.get(listener, set()) & talkers
        if len(audible) == 1:
            discoveries.add((listener, next(iter(audible))))
    return talkers, discoveries
