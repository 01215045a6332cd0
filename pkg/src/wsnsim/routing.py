"""On-demand routing: multipath distance-vector with loop-free link-disjoint
paths per destination, and a source-routing baseline.

Multipath rules (per destination entry):

* every stored path shares the entry's destination sequence number;
* a node never accepts a path unless it is strictly shorter than the hop
  count it has itself advertised for that (destination, seq) pair, which is
  what makes the next-hop graph acyclic;
* paths must stay link-disjoint: pairwise-distinct next hops AND
  pairwise-distinct last hops.

Route requests flood; duplicates are never re-broadcast, but a duplicate
arriving over a new first hop may still install an extra disjoint reverse
path, and at the destination such a copy also earns a route reply along the
new reverse path (the replies all carry the sequence number minted for the
first copy). Route errors travel to precursors when a destination loses its
last path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .core import KIND_TIMER, SimEngine
from .mac import BROADCAST, DATA, Frame, RERR, RREP, RREQ
from .radio import DELIVERED

AD_STATIC = "static"
AD_AOMDV = "aomdv"
AD_DSR = "dsr"

DEFAULT_AD_TABLE = {AD_STATIC: 0, AD_AOMDV: 1, AD_DSR: 2}


@dataclass
class PathRecord:
    next_hop: int
    last_hop: int  # the hop adjacent to the destination
    hop_count: int
    energy_cost: Fraction
    source: str = AD_AOMDV

    def __post_init__(self) -> None:
        if self.hop_count < 1:
            raise ValueError("hop_count must be >= 1")


@dataclass
class RouteEntry:
    destination: int
    seq: int
    advertised: Optional[int] = None  # None until first advertised for this seq
    paths: list[PathRecord] = field(default_factory=list)
    precursors: set[int] = field(default_factory=set)
    expires_at: int = 0
    unreachable: bool = False


@dataclass
class RreqPacket:
    origin: int
    bcast_id: int
    destination: int
    origin_seq: int
    dest_seq_known: int
    hop_count: int
    first_hop: Optional[int]  # first hop after the origin; None until set

    @property
    def rreq_id(self) -> tuple[int, int]:
        return (self.origin, self.bcast_id)


@dataclass
class RrepPacket:
    origin: int
    destination: int
    dest_seq: int
    hop_count: int
    last_hop: int
    retries: int = 0


@dataclass
class RerrPacket:
    unreachable: tuple[tuple[int, int], ...]  # (destination, seq) pairs

    def __post_init__(self) -> None:
        if not self.unreachable:
            raise ValueError("route error must name at least one destination")


@dataclass
class DataPacket:
    pid: int
    origin: int
    destination: int
    payload_bits: int
    created_at: int
    route: Optional[tuple[int, ...]] = None  # source route (DSR only)
    attempts_on_hop: int = 0
    total_sends: int = 0


@dataclass
class DsrSourceRoute:
    hops: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(set(self.hops)) != len(self.hops):
            raise ValueError("source route contains a loop")


@dataclass
class DsrRreq:
    origin: int
    rid: int
    destination: int
    path: tuple[int, ...]


@dataclass
class DsrRrep:
    route: tuple[int, ...]


@dataclass
class DsrRerr:
    origin: int
    destination: int
    broken_from: int
    broken_to: int
    route: tuple[int, ...]


def insert_path(
    table: dict[int, RouteEntry],
    destination: int,
    seq: int,
    next_hop: int,
    last_hop: int,
    hop_count: int,
    energy_cost: Fraction,
    now: int = 0,
    expiry_us: int = 10_000_000,
    source: str = AD_AOMDV,
) -> bool:
    """Try to add one path to the entry table.

    Accepted iff the sequence number is fresher than the stored one (the
    entry resets), or it is equal and the path is strictly shorter than this
    node's own advertised hop count for that (destination, seq) while
    preserving link-disjointness. Everything else is rejected.
    """
    if hop_count < 1:
        raise ValueError("hop_count must be >= 1")
    path = PathRecord(next_hop, last_hop, hop_count, energy_cost, source)
    entry = table.get(destination)
    if entry is None:
        table[destination] = RouteEntry(
            destination, seq, None, [path], set(), now + expiry_us
        )
        return True
    if seq > entry.seq:
        entry.seq = seq
        entry.paths = [path]
        entry.advertised = None
        entry.unreachable = False
        entry.expires_at = now + expiry_us
        return True
    if seq < entry.seq:
        return False
    if entry.advertised is not None and hop_count >= entry.advertised:
        return False
    if any(p.next_hop == next_hop or p.last_hop == last_hop for p in entry.paths):
        return False
    entry.paths.append(path)
    entry.unreachable = False
    entry.expires_at = now + expiry_us
    return True


def rank_key(ad: int, path: PathRecord) -> tuple[int, int, Fraction, int]:
    """Route preference: lowest protocol preference class first, then fewest
    hops, then least per-packet energy, then lowest next-hop id."""
    return (ad, path.hop_count, path.energy_cost, path.next_hop)


@dataclass
class PendingDiscovery:
    retries: int = 0
    timer_id: Optional[int] = None
    buffer: list[DataPacket] = field(default_factory=list)


class _NodeState:
    __slots__ = (
        "table", "static_paths", "own_seq", "next_bcast_id",
        "rreq_seen", "rreq_reply_seq", "pending", "fail_counts",
        "dsr_cache", "dsr_seen", "next_rid",
    )

    def __init__(self) -> None:
        self.table: dict[int, RouteEntry] = {}
        self.static_paths: dict[int, PathRecord] = {}
        self.own_seq = 0
        self.next_bcast_id = 0
        self.rreq_seen: dict[tuple[int, int], set[int]] = {}
        self.rreq_reply_seq: dict[tuple[int, int], int] = {}
        self.pending: dict[int, PendingDiscovery] = {}
        self.fail_counts: dict[int, int] = {}
        self.dsr_cache: dict[int, tuple[int, ...]] = {}
        self.dsr_seen: set[tuple[int, int]] = set()
        self.next_rid = 0


class _RoutingBase:
    """Shared plumbing: packet registry hooks, per-neighbor failure counting,
    discovery buffering and retry timers."""

    MAX_TOTAL_SENDS = 12

    def __init__(
        self,
        engine: SimEngine,
        mac,
        node_ids,
        *,
        ctrl_bits: int = 256,
        reply_wait_us: int = 1_000_000,
        rreq_retries: int = 2,
        route_expiry_us: int = 10_000_000,
        link_fail_threshold: int = 2,
        ad_table: Optional[dict[str, int]] = None,
        cost_fn: Optional[Callable[[int], Fraction]] = None,
        recorder=None,
        ledger=None,
        checker=None,
    ) -> None:
        self.engine = engine
        self.mac = mac
        self.nodes: dict[int, _NodeState] = {n: _NodeState() for n in node_ids}
        self.ctrl_bits = ctrl_bits
        self.reply_wait_us = reply_wait_us
        self.rreq_retries = rreq_retries
        self.route_expiry_us = route_expiry_us
        self.link_fail_threshold = link_fail_threshold
        self.ad_table = dict(DEFAULT_AD_TABLE if ad_table is None else ad_table)
        self.cost_fn = cost_fn or (lambda hops: Fraction(hops))
        self.recorder = recorder
        self.ledger = ledger
        self.checker = checker
        self.flows: dict[int, set[int]] = {}
        mac.on_receive = self.on_frame
        mac.on_unicast_outcome = self.on_unicast_outcome

    def register_flow(self, origin: int, destination: int) -> None:
        self.flows.setdefault(origin, set()).add(destination)

    def _note_discovery(self, node: int, neighbor: int) -> None:
        if self.ledger is not None and self.ledger.record(node, neighbor, self.engine.now):
            if self.recorder is not None:
                self.recorder.discovery(self.engine.now, node, neighbor)

    def _drop(self, pkt: DataPacket, reason: str) -> None:
        if self.recorder is not None:
            self.recorder.packet_dropped(self.engine.now, pkt.pid, reason)

    def _deliver(self, pkt: DataPacket) -> None:
        if self.recorder is not None:
            self.recorder.packet_delivered(self.engine.now, pkt.pid)

    def on_frame(self, node: int, frame: Frame, prev: int) -> None:
        raise NotImplementedError

    def on_unicast_outcome(self, sender: int, frame: Frame, receiver: int, outcome: str) -> None:
        raise NotImplementedError


class AomdvRouting(_RoutingBase):
    """Multipath distance-vector routing over the MAC."""

    # -- table operations ---------------------------------------------------

    def _insert(self, node: int, destination: int, seq: int, next_hop: int,
                last_hop: int, hop_count: int) -> bool:
        if destination == node or next_hop == node:
            return False
        st = self.nodes[node]
        accepted = insert_path(
            st.table, destination, seq, next_hop, last_hop, hop_count,
            self.cost_fn(hop_count), now=self.engine.now,
            expiry_us=self.route_expiry_us,
        )
        if accepted:
            if self.recorder is not None:
                self.recorder.route_insert(
                    self.engine.now, node, destination, seq, next_hop, last_hop, hop_count
                )
            self._note_discovery(node, next_hop)
            if self.checker is not None:
                self.checker.on_route_mutation(node, destination)
        return accepted

    def _advertise(self, node: int, destination: int) -> None:
        entry = self.nodes[node].table.get(destination)
        if entry is None or not entry.paths:
            return
        if entry.advertised is None:
            entry.advertised = max(p.hop_count for p in entry.paths)
        if self.checker is not None:
            self.checker.on_advertise(node, destination, entry.seq, entry.advertised)

    def _valid_entry(self, st: _NodeState, destination: int) -> Optional[RouteEntry]:
        entry = st.table.get(destination)
        if entry is None or not entry.paths or entry.expires_at < self.engine.now:
            return None
        return entry

    def select_next_hop(self, node: int, destination: int) -> Optional[PathRecord]:
        """Best valid path by (preference class, hops, energy, next hop)."""
        st = self.nodes[node]
        candidates: list[tuple[tuple, PathRecord, Optional[RouteEntry]]] = []
        sp = st.static_paths.get(destination)
        if sp is not None:
            candidates.append((rank_key(self.ad_table[AD_STATIC], sp), sp, None))
        entry = self._valid_entry(st, destination)
        if entry is not None:
            ad = self.ad_table[AD_AOMDV]
            for p in entry.paths:
                candidates.append((rank_key(ad, p), p, entry))
        if not candidates:
            return None
        key, path, entry = min(candidates, key=lambda c: c[0])
        if entry is not None:
            entry.expires_at = self.engine.now + self.route_expiry_us
        return path

    def add_static_route(self, node: int, destination: int, next_hop: int,
                         hop_count: int) -> None:
        self.nodes[node].static_paths[destination] = PathRecord(
            next_hop, next_hop, hop_count, self.cost_fn(hop_count), AD_STATIC
        )

    # -- data plane ----------------------------------------------------------

    def send_data(self, origin: int, destination: int, pkt: DataPacket) -> None:
        self._dispatch(origin, pkt)

    def _dispatch(self, node: int, pkt: DataPacket) -> None:
        if node == pkt.destination:
            self._deliver(pkt)
            return
        if pkt.total_sends >= self.MAX_TOTAL_SENDS:
            self._drop(pkt, "too_many_attempts")
            return
        path = self.select_next_hop(node, pkt.destination)
        if path is not None:
            self._send_data_frame(node, path.next_hop, pkt)
            return
        if node == pkt.origin:
            self._buffer_and_discover(node, pkt)
        else:
            self._drop(pkt, "no_route_at_relay")

    def _send_data_frame(self, node: int, next_hop: int, pkt: DataPacket) -> None:
        pkt.total_sends += 1
        frame = self.mac.new_frame(DATA, node, next_hop, pkt.payload_bits,
                                   routing_payload=pkt)
        self.mac.send(node, next_hop, frame)

    def _buffer_and_discover(self, origin: int, pkt: DataPacket) -> None:
        st = self.nodes[origin]
        pend = st.pending.get(pkt.destination)
        if pend is None:
            pend = st.pending[pkt.destination] = PendingDiscovery()
            pend.buffer.append(pkt)
            self.originate_rreq(origin, pkt.destination)
        else:
            pend.buffer.append(pkt)

    # -- route discovery ------------------------------------------------------

    def originate_rreq(self, origin: int, destination: int) -> RreqPacket:
        st = self.nodes[origin]
        st.own_seq += 1
        bid = st.next_bcast_id
        st.next_bcast_id += 1
        entry = st.table.get(destination)
        known = entry.seq if entry is not None else 0
        rreq = RreqPacket(origin, bid, destination, st.own_seq, known, 0, None)
        frame = self.mac.new_frame(RREQ, origin, BROADCAST, self.ctrl_bits,
                                   routing_payload=rreq)
        self.mac.broadcast(origin, frame)
        if self.recorder is not None:
            self.recorder.rreq_flood(self.engine.now, origin, destination)
        pend = st.pending.setdefault(destination, PendingDiscovery())
        pend.timer_id = self.engine.schedule(
            self.engine.now + self.reply_wait_us, KIND_TIMER,
            lambda ev: self._reply_timeout(origin, destination), target=origin,
        )
        return rreq

    def _reply_timeout(self, origin: int, destination: int) -> None:
        st = self.nodes[origin]
        pend = st.pending.get(destination)
        if pend is None:
            return
        if self._valid_entry(st, destination) is not None:
            self._flush_pending(origin, destination)
            return
        pend.retries += 1
        if pend.retries <= self.rreq_retries:
            self.originate_rreq(origin, destination)
            return
        del st.pending[destination]
        if self.recorder is not None:
            self.recorder.no_route(self.engine.now, origin, destination)
        for pkt in pend.buffer:
            self._drop(pkt, "no_route")

    def _flush_pending(self, origin: int, destination: int) -> None:
        st = self.nodes[origin]
        pend = st.pending.pop(destination, None)
        if pend is None:
            return
        if pend.timer_id is not None:
            self.engine.cancel(pend.timer_id)
        if self.recorder is not None:
            self.recorder.route_ready(self.engine.now, origin, destination)
        for pkt in pend.buffer:
            self._dispatch(origin, pkt)

    # -- control plane ---------------------------------------------------------

    def on_frame(self, node: int, frame: Frame, prev: int) -> None:
        kind = frame.kind
        if kind == RREQ:
            self._on_rreq(node, frame.routing_payload, prev)
        elif kind == RREP:
            self._on_rrep(node, frame.routing_payload, prev)
        elif kind == RERR:
            self._on_rerr(node, frame.routing_payload, prev)
        elif kind == DATA:
            self._dispatch(node, frame.routing_payload)

    def _on_rreq(self, node: int, rreq: RreqPacket, prev: int) -> str:
        st = self.nodes[node]
        if node == rreq.origin:
            return "discard"
        eff_first = rreq.first_hop if rreq.first_hop is not None else node
        key = rreq.rreq_id
        seen = st.rreq_seen.get(key)
        first_copy = seen is None
        if seen is not None and eff_first in seen:
            return "discard"
        st.rreq_seen.setdefault(key, set()).add(eff_first)
        accepted = self._insert(
            node, rreq.origin, rreq.origin_seq, prev, eff_first, rreq.hop_count + 1
        )
        if node == rreq.destination:
            if first_copy:
                st.own_seq = max(st.own_seq + 1, rreq.dest_seq_known)
                st.rreq_reply_seq[key] = st.own_seq
            reply_seq = st.rreq_reply_seq.get(key)
            if accepted and reply_seq is not None:
                rrep = RrepPacket(rreq.origin, node, reply_seq, 0, last_hop=prev)
                fr = self.mac.new_frame(RREP, node, prev, self.ctrl_bits,
                                        routing_payload=rrep)
                self.mac.send(node, prev, fr)
                return "reply"
            return "record_only" if accepted else "discard"
        if first_copy and accepted:
            self._advertise(node, rreq.origin)
            if self.checker is not None:
                self.checker.on_rreq_broadcast(node, key)
            fwd = RreqPacket(rreq.origin, rreq.bcast_id, rreq.destination,
                             rreq.origin_seq, rreq.dest_seq_known,
                             rreq.hop_count + 1, eff_first)
            fr = self.mac.new_frame(RREQ, node, BROADCAST, self.ctrl_bits,
                                    routing_payload=fwd)
            self.mac.broadcast(node, fr)
            return "forward"
        return "record_only" if accepted else "discard"

    def _on_rrep(self, node: int, rrep: RrepPacket, prev: int) -> str:
        st = self.nodes[node]
        accepted = self._insert(
            node, rrep.destination, rrep.dest_seq, prev, rrep.last_hop,
            rrep.hop_count + 1,
        )
        rev = st.table.get(rrep.origin)
        if rev is not None:
            rev.precursors.add(prev)
        if node == rrep.origin:
            if accepted:
                self._flush_pending(node, rrep.destination)
                return "accept_terminal"
            return "discard"
        if not accepted:
            return "discard"
        self._advertise(node, rrep.destination)
        back = self.select_next_hop(node, rrep.origin)
        if back is None:
            return "discard"  # orphan: no reverse path toward the origin
        fwd = RrepPacket(rrep.origin, rrep.destination, rrep.dest_seq,
                         rrep.hop_count + 1, rrep.last_hop)
        fr = self.mac.new_frame(RREP, node, back.next_hop, self.ctrl_bits,
                                routing_payload=fwd)
        self.mac.send(node, back.next_hop, fr)
        self.nodes[node].table[rrep.destination].precursors.add(back.next_hop)
        return "accept_forward"

    def _on_rerr(self, node: int, rerr: RerrPacket, prev: int) -> None:
        st = self.nodes[node]
        newly_empty: list[int] = []
        for destination, useq in sorted(rerr.unreachable):
            entry = st.table.get(destination)
            if entry is None:
                continue
            kept = [p for p in entry.paths if p.next_hop != prev]
            if len(kept) == len(entry.paths):
                continue
            entry.paths = kept
            if self.recorder is not None:
                self.recorder.route_remove(self.engine.now, node, destination, prev)
            if self.checker is not None:
                self.checker.on_route_mutation(node, destination)
            if not kept and not entry.unreachable:
                entry.seq = max(entry.seq + 1, useq)
                entry.advertised = None
                entry.unreachable = True
                newly_empty.append(destination)
        if newly_empty:
            self._propagate_rerr(node, newly_empty, exclude=prev)
        for destination in newly_empty:
            if destination in self.flows.get(node, ()):
                self._ensure_discovery(node, destination)

    def _propagate_rerr(self, node: int, destinations: list[int], exclude: int = -1) -> None:
        st = self.nodes[node]
        by_precursor: dict[int, list[tuple[int, int]]] = {}
        for destination in destinations:
            entry = st.table[destination]
            for p in sorted(entry.precursors):
                if p != exclude:
                    by_precursor.setdefault(p, []).append((destination, entry.seq))
        for precursor in sorted(by_precursor):
            rerr = RerrPacket(tuple(sorted(by_precursor[precursor])))
            fr = self.mac.new_frame(RERR, node, precursor, self.ctrl_bits,
                                    routing_payload=rerr)
            self.mac.send(node, precursor, fr)
            if self.recorder is not None:
                self.recorder.rerr_sent(self.engine.now, node, precursor)

    def _ensure_discovery(self, origin: int, destination: int) -> None:
        st = self.nodes[origin]
        if destination not in st.pending:
            st.pending[destination] = PendingDiscovery()
            self.originate_rreq(origin, destination)

    # -- link maintenance -------------------------------------------------------

    def handle_link_break(self, node: int, dead_neighbor: int) -> None:
        """Purge every path through a neighbor that stopped answering; if a
        destination loses its last path it is marked unreachable (sequence
        bumped) and reported to that entry's precursors."""
        st = self.nodes[node]
        st.fail_counts[dead_neighbor] = 0
        newly_empty: list[int] = []
        for destination in sorted(st.table):
            entry = st.table[destination]
            kept = [p for p in entry.paths if p.next_hop != dead_neighbor]
            if len(kept) == len(entry.paths):
                continue
            entry.paths = kept
            if self.recorder is not None:
                self.recorder.route_remove(self.engine.now, node, destination,
                                           dead_neighbor)
            if self.checker is not None:
                self.checker.on_route_mutation(node, destination)
            if not kept and not entry.unreachable:
                entry.seq += 1
                entry.advertised = None
                entry.unreachable = True
                newly_empty.append(destination)
        if self.recorder is not None:
            self.recorder.link_break(self.engine.now, node, dead_neighbor)
        if newly_empty:
            self._propagate_rerr(node, newly_empty, exclude=dead_neighbor)
        for destination in newly_empty:
            if destination in self.flows.get(node, ()):
                self._ensure_discovery(node, destination)

    def on_unicast_outcome(self, sender: int, frame: Frame, receiver: int,
                           outcome: str) -> None:
        if frame.kind not in (DATA, RREP):
            return
        st = self.nodes[sender]
        if outcome == DELIVERED:
            st.fail_counts[receiver] = 0
            if frame.kind == DATA:
                frame.routing_payload.attempts_on_hop = 0
            return
        st.fail_counts[receiver] = st.fail_counts.get(receiver, 0) + 1
        broke = st.fail_counts[receiver] >= self.link_fail_threshold
        if broke:
            self.handle_link_break(sender, receiver)
        if frame.kind == DATA:
            pkt: DataPacket = frame.routing_payload
            pkt.attempts_on_hop += 1
            if not broke and pkt.attempts_on_hop < self.link_fail_threshold:
                self._send_data_frame(sender, receiver, pkt)
            else:
                pkt.attempts_on_hop = 0
                self._dispatch(sender, pkt)
        elif frame.kind == RREP:
            rrep: RrepPacket = frame.routing_payload
            if not broke and rrep.retries < 1:
                rrep.retries += 1
                fr = self.mac.new_frame(RREP, sender, receiver, self.ctrl_bits,
                                        routing_payload=rrep)
                self.mac.send(sender, receiver, fr)
            elif broke:
                back = self.select_next_hop(sender, rrep.origin)
                if back is not None:
                    fr = self.mac.new_frame(RREP, sender, back.next_hop,
                                            self.ctrl_bits, routing_payload=rrep)
                    self.mac.send(sender, back.next_hop, fr)


class DsrRouting(_RoutingBase):
    """Source routing: the full hop list is discovered once, cached at the
    origin, and carried inside every data packet."""

    def send_data(self, origin: int, destination: int, pkt: DataPacket) -> None:
        st = self.nodes[origin]
        route = st.dsr_cache.get(destination)
        if route is not None:
            pkt.route = route
            self._forward(origin, pkt)
            return
        pend = st.pending.get(destination)
        if pend is None:
            pend = st.pending[destination] = PendingDiscovery()
            pend.buffer.append(pkt)
            self.dsr_discover(origin, destination)
        else:
            pend.buffer.append(pkt)

    def dsr_discover(self, origin: int, destination: int) -> None:
        st = self.nodes[origin]
        rid = st.next_rid
        st.next_rid += 1
        st.dsr_seen.add((origin, rid))
        req = DsrRreq(origin, rid, destination, (origin,))
        frame = self.mac.new_frame(RREQ, origin, BROADCAST, self.ctrl_bits,
                                   routing_payload=req)
        self.mac.broadcast(origin, frame)
        if self.recorder is not None:
            self.recorder.rreq_flood(self.engine.now, origin, destination)
        pend = st.pending.setdefault(destination, PendingDiscovery())
        pend.timer_id = self.engine.schedule(
            self.engine.now + self.reply_wait_us, KIND_TIMER,
            lambda ev: self._reply_timeout(origin, destination), target=origin,
        )

    def _reply_timeout(self, origin: int, destination: int) -> None:
        st = self.nodes[origin]
        pend = st.pending.get(destination)
        if pend is None:
            return
        if destination in st.dsr_cache:
            self._flush_pending(origin, destination)
            return
        pend.retries += 1
        if pend.retries <= self.rreq_retries:
            self.dsr_discover(origin, destination)
            return
        del st.pending[destination]
        if self.recorder is not None:
            self.recorder.no_route(self.engine.now, origin, destination)
        for pkt in pend.buffer:
            self._drop(pkt, "no_route")

    def _flush_pending(self, origin: int, destination: int) -> None:
        st = self.nodes[origin]
        pend = st.pending.pop(destination, None)
        if pend is None:
            return
        if pend.timer_id is not None:
            self.engine.cancel(pend.timer_id)
        if self.recorder is not None:
            self.recorder.route_ready(self.engine.now, origin, destination)
        route = st.dsr_cache.get(destination)
        for pkt in pend.buffer:
            pkt.route = route
            if route is not None:
                self._forward(origin, pkt)
            else:
                self._drop(pkt, "no_route")

    def _forward(self, node: int, pkt: DataPacket) -> None:
        if node == pkt.destination:
            self._deliver(pkt)
            return
        route = pkt.route
        if route is None or node not in route:
            self._drop(pkt, "not_on_route")
            return
        if pkt.total_sends >= self.MAX_TOTAL_SENDS:
            self._drop(pkt, "too_many_attempts")
            return
        idx = route.index(node)
        if idx + 1 >= len(route):
            self._drop(pkt, "route_exhausted")
            return
        succ = route[idx + 1]
        pkt.total_sends += 1
        frame = self.mac.new_frame(DATA, node, succ, pkt.payload_bits,
                                   routing_payload=pkt)
        self.mac.send(node, succ, frame)

    def on_frame(self, node: int, frame: Frame, prev: int) -> None:
        kind = frame.kind
        if kind == RREQ:
            self._on_rreq(node, frame.routing_payload, prev)
        elif kind == RREP:
            self._on_rrep(node, frame.routing_payload, prev)
        elif kind == RERR:
            self._on_rerr(node, frame.routing_payload, prev)
        elif kind == DATA:
            self._forward(node, frame.routing_payload)

    def _on_rreq(self, node: int, req: DsrRreq, prev: int) -> None:
        st = self.nodes[node]
        self._note_discovery(node, prev)
        key = (req.origin, req.rid)
        if key in st.dsr_seen or node in req.path:
            return
        st.dsr_seen.add(key)
        path = req.path + (node,)
        if node == req.destination:
            rrep = DsrRrep(route=path)
            fr = self.mac.new_frame(RREP, node, prev, self.ctrl_bits,
                                    routing_payload=rrep)
            self.mac.send(node, prev, fr)
            return
        fwd = DsrRreq(req.origin, req.rid, req.destination, path)
        fr = self.mac.new_frame(RREQ, node, BROADCAST, self.ctrl_bits,
                                routing_payload=fwd)
        self.mac.broadcast(node, fr)

    def _on_rrep(self, node: int, rrep: DsrRrep, prev: int) -> None:
        st = self.nodes[node]
        self._note_discovery(node, prev)
        route = rrep.route
        if node == route[0]:
            destination = route[-1]
            if destination not in st.dsr_cache:  # first reply wins
                st.dsr_cache[destination] = DsrSourceRoute(route).hops
            self._flush_pending(node, destination)
            return
        if node not in route:
            return
        idx = route.index(node)
        if idx == 0:
            return
        fr = self.mac.new_frame(RREP, node, route[idx - 1], self.ctrl_bits,
                                routing_payload=rrep)
        self.mac.send(node, route[idx - 1], fr)

    def _on_rerr(self, node: int, rerr: DsrRerr, prev: int) -> None:
        if node == rerr.origin:
            self._invalidate_link(node, rerr.broken_from, rerr.broken_to)
            return
        route = rerr.route
        if node not in route:
            return
        idx = route.index(node)
        if idx == 0:
            return
        fr = self.mac.new_frame(RERR, node, route[idx - 1], self.ctrl_bits,
                                routing_payload=rerr)
        self.mac.send(node, route[idx - 1], fr)

    def _invalidate_link(self, node: int, a: int, b: int) -> None:
        st = self.nodes[node]
        stale = [
            dest for dest, route in st.dsr_cache.items()
            if any(route[i] == a and route[i + 1] == b for i in range(len(route) - 1))
        ]
        for dest in stale:
            del st.dsr_cache[dest]
            if self.recorder is not None:
                self.recorder.route_remove(self.engine.now, node, dest, b)

    def on_unicast_outcome(self, sender: int, frame: Frame, receiver: int,
                           outcome: str) -> None:
        if frame.kind not in (DATA, RREP, RERR):
            return
        st = self.nodes[sender]
        if outcome == DELIVERED:
            st.fail_counts[receiver] = 0
            if frame.kind == DATA:
                frame.routing_payload.attempts_on_hop = 0
            return
        st.fail_counts[receiver] = st.fail_counts.get(receiver, 0) + 1
        broke = st.fail_counts[receiver] >= self.link_fail_threshold
        if frame.kind != DATA:
            return  # control frames are not retried; timers recover
        pkt: DataPacket = frame.routing_payload
        pkt.attempts_on_hop += 1
        if not broke and pkt.attempts_on_hop < self.link_fail_threshold:
            pkt.total_sends += 1
            fr = self.mac.new_frame(DATA, sender, receiver, pkt.payload_bits,
                                    routing_payload=pkt)
            self.mac.send(sender, receiver, fr)
            return
        # Next hop is gone: the packet is lost here. The origin invalidates
        # its cache and re-runs discovery; a relay reports the broken link
        # back along the source route instead.
        st.fail_counts[receiver] = 0
        pkt.attempts_on_hop = 0
        self._drop(pkt, "link_failed")
        if self.recorder is not None:
            self.recorder.link_break(self.engine.now, sender, receiver)
        if sender == pkt.origin:
            self._invalidate_link(sender, sender, receiver)
            if pkt.destination not in st.pending:
                st.pending[pkt.destination] = PendingDiscovery()
                self.dsr_discover(sender, pkt.destination)
        else:
            route = pkt.route or ()
            if sender in route:
                idx = route.index(sender)
                if idx > 0:
                    rerr = DsrRerr(pkt.origin, pkt.destination, sender, receiver,
                                   route)
                    fr = self.mac.new_frame(RERR, sender, route[idx - 1],
                                            self.ctrl_bits, routing_payload=rerr)
                    self.mac.send(sender, route[idx - 1], fr)
