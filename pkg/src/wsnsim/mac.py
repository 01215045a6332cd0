"""Duty-cycled MAC built on per-node wakeup slots plus shared data slots,
and an always-on baseline MAC.

A MAC frame is n_wslots short wakeup slots (one per node, unique network
wide) followed by n_islots longer data slots. A unicast sender picks a data
slot at random, announces it with a wakeup message inside the receiver's
wakeup slot, and transmits the payload in that data slot of the same MAC
frame; everyone else sleeps through it. A broadcast repeats the wakeup in
every wakeup slot except the sender's own, then transmits once.

This module is also the authoritative source of each node's radio state
(TX / RX / LISTEN / SLEEP); the energy ledger is fed from the state
transitions recorded here.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import KIND_FRAME, KIND_SLOT, RngStream, SimEngine, US_PER_S
from .radio import Channel, DELIVERED, FrameOnAir

BROADCAST = -1

WAKEUP = "WAKEUP"
DATA = "DATA"
RREQ = "RREQ"
RREP = "RREP"
RERR = "RERR"
HELLO = "HELLO"

TX = "TX"
RX = "RX"
LISTEN = "LISTEN"
SLEEP = "SLEEP"

RADIO_STATES = (TX, RX, LISTEN, SLEEP)


def bits_duration_us(bits: int, bitrate_bps: int) -> int:
    """Air time of a payload, rounded up to the microsecond."""
    return (bits * US_PER_S + bitrate_bps - 1) // bitrate_bps


@dataclass
class Frame:
    uid: int
    kind: str
    src: int
    dst: int  # node id or BROADCAST
    payload_bits: int
    islot_index: Optional[int] = None  # wakeup frames only
    routing_payload: object = None


@dataclass(frozen=True)
class SlotSchedule:
    """Frame layout shared by all nodes: who owns which wakeup slot, and
    where every slot starts on the global microsecond grid."""

    wslot_len: int
    islot_len: int
    n_islots: int
    owners: tuple[int, ...]  # wakeup slot index -> node id, ascending ids

    def __post_init__(self) -> None:
        if not self.owners:
            raise ValueError("schedule needs at least one node")
        if len(set(self.owners)) != len(self.owners):
            raise ValueError("duplicate node ids in slot schedule")
        if self.wslot_len <= 0 or self.islot_len <= 0 or self.n_islots < 1:
            raise ValueError("slot lengths must be positive, n_islots >= 1")
        if not self.wslot_len < self.islot_len:
            raise ValueError("wakeup slots must be shorter than data slots")
        object.__setattr__(
            self, "_slot_of", {node: i for i, node in enumerate(self.owners)}
        )

    @property
    def n_wslots(self) -> int:
        return len(self.owners)

    @property
    def frame_len(self) -> int:
        return self.n_wslots * self.wslot_len + self.n_islots * self.islot_len

    def wslot_index(self, node: int) -> int:
        return self._slot_of[node]

    def frame_index(self, t: int) -> int:
        return t // self.frame_len

    def frame_start(self, f: int) -> int:
        return f * self.frame_len

    def wslot_start(self, f: int, node: int) -> int:
        return self.frame_start(f) + self.wslot_index(node) * self.wslot_len

    def islot_start(self, f: int, j: int) -> int:
        if not 0 <= j < self.n_islots:
            raise ValueError(f"data slot index {j} out of range")
        return self.frame_start(f) + self.n_wslots * self.wslot_len + j * self.islot_len

    def next_wslot_frame(self, node: int, t: int) -> int:
        """Earliest frame whose wakeup slot for `node` starts at or after t."""
        f = self.frame_index(t)
        if self.wslot_start(f, node) >= t:
            return f
        return f + 1

    def next_full_frame(self, t: int) -> int:
        """Earliest frame starting at or after t (needed for broadcasts)."""
        f = self.frame_index(t)
        if self.frame_start(f) >= t:
            return f
        return f + 1


def build_frame_schedule(
    node_ids, wslot_len: int, islot_len: int, n_islots: int
) -> SlotSchedule:
    """Assign wakeup slot i to the i-th node id in ascending order."""
    ids = sorted(node_ids)
    return SlotSchedule(wslot_len, islot_len, n_islots, tuple(ids))


class RadioController:
    """Per-node radio state machine.

    State is derived from three facts (transmitting-until, receiving-until,
    awake-window-until) plus the always-on flag, with priority
    TX > RX > LISTEN > SLEEP. Every positive-length stretch in one state is
    recorded as a segment and accrued to the energy ledger, so the four
    state durations partition simulated time exactly.
    """

    __slots__ = (
        "node", "always_on", "dead", "state", "since",
        "tx_until", "rx_until", "wake_until",
        "seg_starts", "segments", "accrue", "on_transition",
    )

    def __init__(self, node: int, always_on: bool,
                 accrue: Callable[[int, str, int, int], None],
                 on_transition: Optional[Callable[[int, int, str], None]] = None) -> None:
        self.node = node
        self.always_on = always_on
        self.dead = False
        self.state = LISTEN if always_on else SLEEP
        self.since = 0
        self.tx_until = 0
        self.rx_until = 0
        self.wake_until = 0
        self.seg_starts: list[int] = []
        self.segments: list[tuple[int, int, str]] = []
        self.accrue = accrue
        self.on_transition = on_transition

    def _desired(self, now: int) -> str:
        if self.dead:
            return SLEEP
        if now < self.tx_until:
            return TX
        if now < self.rx_until:
            return RX
        if self.always_on or now < self.wake_until:
            return LISTEN
        return SLEEP

    def reevaluate(self, now: int) -> None:
        desired = self._desired(now)
        if desired == self.state:
            return
        if now > self.since:
            self.seg_starts.append(self.since)
            self.segments.append((self.since, now, self.state))
            self.accrue(self.node, self.state, self.since, now - self.since)
        self.state = desired
        self.since = now
        if self.on_transition is not None:
            self.on_transition(self.node, now, desired)

    def set_tx(self, now: int, until: int) -> None:
        if self.dead:
            return
        if self.tx_until > now:
            raise AssertionError(f"node {self.node}: overlapping transmissions")
        self.tx_until = until
        self.reevaluate(now)

    def extend_rx(self, now: int, until: int) -> None:
        if until > self.rx_until:
            self.rx_until = until
        self.reevaluate(now)

    def extend_wake(self, now: int, until: int) -> None:
        if until > self.wake_until:
            self.wake_until = until
        self.reevaluate(now)

    def kill(self, now: int) -> None:
        self.dead = True
        self.tx_until = self.rx_until = self.wake_until = 0
        self.reevaluate(now)

    def flush(self, t_end: int) -> None:
        """Close the open segment at end of run."""
        if t_end > self.since:
            self.seg_starts.append(self.since)
            self.segments.append((self.since, t_end, self.state))
            self.accrue(self.node, self.state, self.since, t_end - self.since)
            self.since = t_end

    def receive_capable(self, t0: int, t1: int) -> bool:
        """True iff the radio is in LISTEN or RX over all of (t0, t1)."""
        if self.since < t1 and self.state not in (LISTEN, RX):
            return False
        for start, end, state in reversed(self.segments):
            if end <= t0:
                break
            if start < t1 and state not in (LISTEN, RX):
                return False
        return True

    def state_at(self, t: int) -> str:
        """Radio state at instant t (closed segments, then the open one)."""
        if t >= self.since:
            return self.state
        i = bisect.bisect_right(self.seg_starts, t) - 1
        if i < 0:
            return self.segments[0][2] if self.segments else self.state
        return self.segments[i][2]

    def awake_us(self) -> int:
        """Total non-sleep time over closed segments."""
        return sum(e - s for s, e, st in self.segments if st != SLEEP)


class HmacMac:
    """Slot-synchronized duty-cycled MAC.

    One data transmission per MAC frame per sender; extra traffic queues
    into later frames. Broadcast forwarding is jittered by a small random
    number of frames so that simultaneous rebroadcasts do not collide
    deterministically forever.
    """

    def __init__(
        self,
        engine: SimEngine,
        channel: Channel,
        schedule: SlotSchedule,
        controllers: dict[int, RadioController],
        rng: RngStream,
        bitrate_bps: int,
        bcast_jitter_frames: int = 3,
        recorder=None,
    ) -> None:
        self.engine = engine
        self.channel = channel
        self.schedule = schedule
        self.controllers = controllers
        self.rng = rng
        self.bitrate = bitrate_bps
        self.bcast_jitter = bcast_jitter_frames
        self.recorder = recorder
        self.next_free_frame: dict[int, int] = {n: 0 for n in schedule.owners}
        self._frame_uid = 0
        self.on_receive: Callable[[int, Frame, int], None] = lambda n, f, p: None
        self.on_unicast_outcome: Callable[[int, Frame, int, str], None] = (
            lambda s, f, r, oc: None
        )
        channel.receive_capable = self._receive_capable
        channel.try_mark_rx = self._try_mark_rx
        channel.on_frame_end = self._on_frame_end

    # -- channel hooks -----------------------------------------------------

    def _receive_capable(self, node: int, t0: int, t1: int) -> bool:
        return self.controllers[node].receive_capable(t0, t1)

    def _try_mark_rx(self, node: int, fa: FrameOnAir) -> None:
        ctl = self.controllers[node]
        if ctl.dead or ctl.state not in (LISTEN, RX):
            return
        ctl.extend_rx(self.engine.now, fa.end)
        fa.rx_marked.append(node)

    def _on_frame_end(self, fa: FrameOnAir, outcomes: dict[int, str]) -> None:
        now = self.engine.now
        frame: Frame = fa.frame
        if self.recorder is not None:
            self.recorder.frame_outcome(now, fa, outcomes)
        self.controllers[fa.sender].reevaluate(now)
        for node in fa.rx_marked:  # RX windows ending here
            self.controllers[node].reevaluate(now)
        if frame.kind == WAKEUP:
            f = self.schedule.frame_index(fa.start)
            for node in sorted(outcomes):
                if outcomes[node] == DELIVERED and self._addressed(frame, node):
                    self._commit_wake(node, f, frame.islot_index)
            return
        # link-layer address filter: only the addressed node processes a
        # unicast, even if bystanders were awake and in range
        if frame.dst == BROADCAST:
            for node in sorted(outcomes):
                if outcomes[node] == DELIVERED:
                    self.on_receive(node, frame, fa.sender)
        else:
            if outcomes.get(frame.dst) == DELIVERED:
                self.on_receive(frame.dst, frame, fa.sender)
            self.on_unicast_outcome(
                fa.sender, frame, frame.dst, outcomes.get(frame.dst, "no_receiver")
            )

    @staticmethod
    def _addressed(frame: Frame, node: int) -> bool:
        return frame.dst == BROADCAST or frame.dst == node

    def _commit_wake(self, node: int, f: int, islot: int) -> None:
        start = self.schedule.islot_start(f, islot)
        end = start + self.schedule.islot_len
        ctl = self.controllers[node]
        self.engine.schedule(
            start, KIND_SLOT, lambda ev: ctl.extend_wake(ev.fire_at, end), target=node
        )
        self.engine.schedule(
            end, KIND_SLOT, lambda ev: ctl.reevaluate(ev.fire_at), target=node
        )

    # -- node duty cycle ---------------------------------------------------

    def start_wslot_chains(self) -> None:
        for node in self.schedule.owners:
            self.engine.schedule(
                self.schedule.wslot_start(0, node), KIND_SLOT,
                self._wslot_tick, target=node,
            )

    def _wslot_tick(self, ev) -> None:
        node = ev.target
        ctl = self.controllers[node]
        if ctl.dead:
            return
        start = ev.fire_at
        end = start + self.schedule.wslot_len
        ctl.extend_wake(start, end)
        self.engine.schedule(
            end, KIND_SLOT, lambda e: ctl.reevaluate(e.fire_at), target=node
        )
        f = self.schedule.frame_index(start)
        self.engine.schedule(
            self.schedule.wslot_start(f + 1, node), KIND_SLOT,
            self._wslot_tick, target=node,
        )

    # -- transmission ------------------------------------------------------

    def new_frame(self, kind: str, src: int, dst: int, payload_bits: int,
                  islot_index: Optional[int] = None, routing_payload=None) -> Frame:
        self._frame_uid += 1
        if kind == WAKEUP and not 0 <= islot_index < self.schedule.n_islots:
            raise ValueError("wakeup frame needs a valid data slot index")
        return Frame(self._frame_uid, kind, src, dst, payload_bits, islot_index,
                     routing_payload)

    def _tx_at(self, sender: int, frame: Frame, start: int, end: int) -> None:
        def fire(ev):
            ctl = self.controllers[sender]
            if ctl.dead:
                return
            ctl.set_tx(ev.fire_at, end)
            self.channel.begin(sender, frame, ev.fire_at, end)
            if self.recorder is not None:
                self.recorder.frame_tx(ev.fire_at, sender, frame, end)

        self.engine.schedule(start, KIND_FRAME, fire, target=sender)

    def send(self, sender: int, receiver: int, frame: Frame) -> None:
        """Unicast: wakeup in the receiver's next wakeup slot, payload in a
        randomly chosen data slot of the same MAC frame."""
        if sender == receiver:
            raise ValueError("unicast to self")
        if frame.kind == WAKEUP:
            raise ValueError("wakeup frames are generated by the MAC")
        if self.controllers[sender].dead:
            return
        now = self.engine.now
        dur = bits_duration_us(frame.payload_bits, self.bitrate)
        if dur > self.schedule.islot_len:
            raise ValueError(
                f"{frame.payload_bits}-bit payload does not fit one data slot"
            )
        f = max(self.schedule.next_wslot_frame(receiver, now),
                self.next_free_frame[sender])
        j = self.rng.int_below(self.schedule.n_islots)
        ws = self.schedule.wslot_start(f, receiver)
        wak = self.new_frame(WAKEUP, sender, receiver, 0, islot_index=j)
        self._tx_at(sender, wak, ws, ws + self.schedule.wslot_len)
        ds = self.schedule.islot_start(f, j)
        self._tx_at(sender, frame, ds, ds + dur)
        self.next_free_frame[sender] = f + 1

    def broadcast(self, sender: int, frame: Frame) -> None:
        """One-hop broadcast: wakeup in every wakeup slot except the
        sender's own, then a single payload transmission."""
        if frame.dst != BROADCAST:
            raise ValueError("broadcast frame must use the broadcast address")
        if self.controllers[sender].dead:
            return
        now = self.engine.now
        dur = bits_duration_us(frame.payload_bits, self.bitrate)
        if dur > self.schedule.islot_len:
            raise ValueError(
                f"{frame.payload_bits}-bit payload does not fit one data slot"
            )
        f = max(self.schedule.next_full_frame(now), self.next_free_frame[sender])
        if self.bcast_jitter > 0:
            f += self.rng.int_below(self.bcast_jitter + 1)
        j = self.rng.int_below(self.schedule.n_islots)
        for owner in self.schedule.owners:
            if owner == sender:
                continue
            ws = self.schedule.wslot_start(f, owner)
            wak = self.new_frame(WAKEUP, sender, BROADCAST, 0, islot_index=j)
            self._tx_at(sender, wak, ws, ws + self.schedule.wslot_len)
        ds = self.schedule.islot_start(f, j)
        self._tx_at(sender, frame, ds, ds + dur)
        self.next_free_frame[sender] = f + 1

    def kill_node(self, node: int) -> None:
        self.controllers[node].kill(self.engine.now)


class AlwaysOnMac:
    """Baseline MAC: radios never sleep; frames go on air immediately with a
    small random jitter to de-synchronize floods."""

    def __init__(
        self,
        engine: SimEngine,
        channel: Channel,
        controllers: dict[int, RadioController],
        rng: RngStream,
        bitrate_bps: int,
        jitter_us: int = 5000,
        recorder=None,
    ) -> None:
        self.engine = engine
        self.channel = channel
        self.controllers = controllers
        self.rng = rng
        self.bitrate = bitrate_bps
        self.jitter_us = jitter_us
        self.recorder = recorder
        self.tx_free_at: dict[int, int] = {n: 0 for n in controllers}
        self._frame_uid = 0
        self.on_receive: Callable[[int, Frame, int], None] = lambda n, f, p: None
        self.on_unicast_outcome: Callable[[int, Frame, int, str], None] = (
            lambda s, f, r, oc: None
        )
        channel.receive_capable = self._receive_capable
        channel.try_mark_rx = self._try_mark_rx
        channel.on_frame_end = self._on_frame_end

    def _receive_capable(self, node: int, t0: int, t1: int) -> bool:
        return self.controllers[node].receive_capable(t0, t1)

    def _try_mark_rx(self, node: int, fa: FrameOnAir) -> None:
        ctl = self.controllers[node]
        if ctl.dead or ctl.state not in (LISTEN, RX):
            return
        ctl.extend_rx(self.engine.now, fa.end)
        fa.rx_marked.append(node)

    def _on_frame_end(self, fa: FrameOnAir, outcomes: dict[int, str]) -> None:
        now = self.engine.now
        frame: Frame = fa.frame
        if self.recorder is not None:
            self.recorder.frame_outcome(now, fa, outcomes)
        self.controllers[fa.sender].reevaluate(now)
        for node in fa.rx_marked:
            self.controllers[node].reevaluate(now)
        if frame.dst == BROADCAST:
            for node in sorted(outcomes):
                if outcomes[node] == DELIVERED:
                    self.on_receive(node, frame, fa.sender)
        else:
            if outcomes.get(frame.dst) == DELIVERED:
                self.on_receive(frame.dst, frame, fa.sender)
            self.on_unicast_outcome(
                fa.sender, frame, frame.dst, outcomes.get(frame.dst, "no_receiver")
            )

    def new_frame(self, kind: str, src: int, dst: int, payload_bits: int,
                  routing_payload=None) -> Frame:
        self._frame_uid += 1
        return Frame(self._frame_uid, kind, src, dst, payload_bits, None,
                     routing_payload)

    def _transmit(self, sender: int, frame: Frame) -> None:
        if self.controllers[sender].dead:
            return
        now = self.engine.now
        jitter = self.rng.int_below(self.jitter_us) if self.jitter_us > 0 else 0
        start = max(now, self.tx_free_at[sender]) + jitter
        end = start + bits_duration_us(frame.payload_bits, self.bitrate)
        self.tx_free_at[sender] = end

        def fire(ev):
            ctl = self.controllers[sender]
            if ctl.dead:
                return
            ctl.set_tx(ev.fire_at, end)
            self.channel.begin(sender, frame, ev.fire_at, end)
            if self.recorder is not None:
                self.recorder.frame_tx(ev.fire_at, sender, frame, end)

        self.engine.schedule(start, KIND_FRAME, fire, target=sender)

    def send(self, sender: int, receiver: int, frame: Frame) -> None:
        if sender == receiver:
            raise ValueError("unicast to self")
        self._transmit(sender, frame)

    def broadcast(self, sender: int, frame: Frame) -> None:
        if frame.dst != BROADCAST:
            raise ValueError("broadcast frame must use the broadcast address")
        self._transmit(sender, frame)

    def kill_node(self, node: int) -> None:
        self.controllers[node].kill(self.engine.now)
