"""Per-node energy accounting over radio states, run bookkeeping, and the
run-level QoS report.

All arithmetic is exact: durations are integer microseconds and powers are
rationals, so energy totals in nanojoules are Fractions with no float drift.
A node's four state durations must partition the simulated run length to the
microsecond; the ledger enforces that by construction (each accrual must
start where the previous one ended).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Optional

from .core import InvariantViolation, US_PER_S
from .mac import LISTEN, RX, SLEEP, TX, RADIO_STATES
from .radio import COLLIDED, DELIVERED


def _mw(value) -> Fraction:
    """Power in milliwatts, held exactly; accepts int/float/str/Decimal,
    with strings in decimal ("0.09") or ratio ("9/100") form."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        value = repr(value)
    return Fraction(str(value))


@dataclass(frozen=True)
class PowerProfile:
    tx_mw: Fraction
    rx_mw: Fraction
    listen_mw: Fraction
    sleep_mw: Fraction

    def __post_init__(self) -> None:
        for name in ("tx_mw", "rx_mw", "listen_mw", "sleep_mw"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.sleep_mw < self.listen_mw:
            raise ValueError("sleep power must be below listen power")

    @classmethod
    def make(cls, tx_mw, rx_mw, listen_mw, sleep_mw) -> "PowerProfile":
        return cls(_mw(tx_mw), _mw(rx_mw), _mw(listen_mw), _mw(sleep_mw))

    def power(self, state: str) -> Fraction:
        return {TX: self.tx_mw, RX: self.rx_mw,
                LISTEN: self.listen_mw, SLEEP: self.sleep_mw}[state]


# Default profile, loosely shaped on commodity sensor radios. Purely a
# configuration default; every check treats these as parameters.
DEFAULT_PROFILE = PowerProfile.make("60", "45", "45", "0.09")


class EnergyLedger:
    """Per-node, per-state durations and energies.

    accrue() must be fed back-to-back intervals per node; a gap or an
    overlap is a MAC bookkeeping bug and raises immediately.
    """

    def __init__(self, profile: PowerProfile) -> None:
        self.profile = profile
        self.durations: dict[int, dict[str, int]] = {}
        self._cursor: dict[int, int] = {}

    def register_node(self, node: int) -> None:
        self.durations.setdefault(node, {s: 0 for s in RADIO_STATES})
        self._cursor.setdefault(node, 0)

    def accrue(self, node: int, state: str, start: int, duration: int) -> None:
        if duration < 0:
            raise InvariantViolation(f"negative duration for node {node}")
        if duration == 0:
            return
        self.register_node(node)
        if start != self._cursor[node]:
            raise InvariantViolation(
                f"node {node}: interval starting at {start}us does not abut "
                f"the previous one ending at {self._cursor[node]}us"
            )
        self.durations[node][state] += duration
        self._cursor[node] = start + duration

    def finalize(self, t_end: int) -> None:
        """Assert the time-partition invariant for every node."""
        for node in sorted(self.durations):
            total = sum(self.durations[node].values())
            if total != t_end or self._cursor[node] != t_end:
                raise InvariantViolation(
                    f"node {node}: state durations sum to {total}us, "
                    f"run length is {t_end}us"
                )

    def node_energy_nj(self, node: int) -> dict[str, Fraction]:
        durs = self.durations[node]
        return {s: self.profile.power(s) * durs[s] for s in RADIO_STATES}

    def node_total_nj(self, node: int) -> Fraction:
        return sum(self.node_energy_nj(node).values(), Fraction(0))

    def network_total_nj(self) -> Fraction:
        return sum((self.node_total_nj(n) for n in self.durations), Fraction(0))

    def awake_fraction(self, node: int) -> Fraction:
        durs = self.durations[node]
        total = sum(durs.values())
        awake = durs[TX] + durs[RX] + durs[LISTEN]
        return Fraction(awake, total) if total else Fraction(0)

    def node_rows(self) -> list[dict]:
        rows = []
        for node in sorted(self.durations):
            durs = self.durations[node]
            energies = self.node_energy_nj(node)
            row = {"node": node}
            for s in RADIO_STATES:
                row[f"{s.lower()}_s"] = durs[s] / US_PER_S
                row[f"{s.lower()}_j"] = float(energies[s] / 10**9)
            row["total_j"] = float(self.node_total_nj(node) / 10**9)
            rows.append(row)
        return rows


@dataclass
class PacketRecord:
    pid: int
    origin: int
    destination: int
    payload_bits: int
    created_at: int
    state: str = "in_flight"  # in_flight | delivered | dropped
    finished_at: Optional[int] = None
    drop_reason: Optional[str] = None


# Packets that were never sent for want of a route count against delivery
# only, not against the channel error rate.
_PRE_SEND_DROPS = {"no_route"}


class Recorder:
    """Accumulates the run trace and every counter the metrics need."""

    def __init__(self, trace_enabled: bool = False) -> None:
        self.trace_enabled = trace_enabled
        self.trace: list[str] = []
        self._last_t = 0
        self.packets: dict[int, PacketRecord] = {}
        self._next_pid = 0
        self.frames_sent: dict[str, int] = {}
        self.frames_collided = 0
        self.frames_delivered = 0
        self.discoveries: list[tuple[int, int, int]] = []
        self.floods: list[tuple[int, int, int]] = []
        self.route_ready_at: dict[tuple[int, int], int] = {}
        self.no_route_events: list[tuple[int, int, int]] = []
        self.true_pairs: set[tuple[int, int]] = set()

    def _emit(self, t: int, line: str) -> None:
        if not self.trace_enabled:
            return
        if t < self._last_t:
            raise InvariantViolation("trace timestamps went backwards")
        self._last_t = t
        self.trace.append(f"{t:012d} {line}")

    # -- traffic ------------------------------------------------------------

    def packet_sent(self, t: int, origin: int, destination: int, bits: int) -> int:
        pid = self._next_pid
        self._next_pid += 1
        self.packets[pid] = PacketRecord(pid, origin, destination, bits, t)
        self._emit(t, f"APP_SEND pid={pid} src={origin} dst={destination} bits={bits}")
        return pid

    def packet_delivered(self, t: int, pid: int) -> None:
        rec = self.packets[pid]
        if rec.state != "in_flight":
            return
        rec.state = "delivered"
        rec.finished_at = t
        self._emit(t, f"APP_DELIVER pid={pid} delay_us={t - rec.created_at}")

    def packet_dropped(self, t: int, pid: int, reason: str) -> None:
        rec = self.packets[pid]
        if rec.state != "in_flight":
            return
        rec.state = "dropped"
        rec.finished_at = t
        rec.drop_reason = reason
        self._emit(t, f"APP_DROP pid={pid} reason={reason}")

    # -- frames ---------------------------------------------------------------

    def frame_tx(self, t: int, sender: int, frame, end: int) -> None:
        self.frames_sent[frame.kind] = self.frames_sent.get(frame.kind, 0) + 1
        self._emit(
            t,
            f"TX kind={frame.kind} uid={frame.uid} src={sender} dst={frame.dst} "
            f"end_us={end}",
        )

    def count_frames(self, kind: str, n: int) -> None:
        """Bulk count for slot protocols that bypass the channel."""
        if n:
            self.frames_sent[kind] = self.frames_sent.get(kind, 0) + n

    def frame_outcome(self, t: int, fa, outcomes: dict[int, str]) -> None:
        frame = fa.frame
        relevant = {n: oc for n, oc in outcomes.items() if oc in (DELIVERED, COLLIDED)}
        if frame.dst == -1:
            if any(oc == COLLIDED for oc in relevant.values()):
                self.frames_collided += 1
            if any(oc == DELIVERED for oc in relevant.values()):
                self.frames_delivered += 1
        else:
            oc = outcomes.get(frame.dst)
            if oc == COLLIDED:
                self.frames_collided += 1
            elif oc == DELIVERED:
                self.frames_delivered += 1
        if self.trace_enabled:
            parts = " ".join(
                f"{n}:{outcomes[n]}" for n in sorted(relevant)
            )
            self._emit(t, f"RXO kind={frame.kind} uid={frame.uid} {parts}".rstrip())

    # -- routing/state ----------------------------------------------------------

    def route_insert(self, t, node, destination, seq, next_hop, last_hop, hops) -> None:
        self._emit(
            t,
            f"ROUTE_ADD node={node} dst={destination} seq={seq} "
            f"next={next_hop} last={last_hop} hops={hops}",
        )

    def route_remove(self, t, node, destination, via) -> None:
        self._emit(t, f"ROUTE_DEL node={node} dst={destination} via={via}")

    def link_break(self, t, node, neighbor) -> None:
        self._emit(t, f"LINK_BREAK node={node} neighbor={neighbor}")

    def rerr_sent(self, t, node, precursor) -> None:
        self._emit(t, f"RERR node={node} to={precursor}")

    def rreq_flood(self, t, origin, destination) -> None:
        self.floods.append((t, origin, destination))
        self._emit(t, f"RREQ_FLOOD origin={origin} dst={destination}")

    def route_ready(self, t, origin, destination) -> None:
        self.route_ready_at.setdefault((origin, destination), t)
        self._emit(t, f"ROUTE_READY origin={origin} dst={destination}")

    def no_route(self, t, origin, destination) -> None:
        self.no_route_events.append((t, origin, destination))
        self._emit(t, f"NO_ROUTE origin={origin} dst={destination}")

    def discovery(self, t, node, neighbor) -> None:
        self.discoveries.append((t, node, neighbor))
        self._emit(t, f"DISCOVER node={node} neighbor={neighbor}")

    def radio_transition(self, node, t, state) -> None:
        self._emit(t, f"RADIO node={node} state={state}")

    def node_off(self, t, node) -> None:
        self._emit(t, f"NODE_OFF node={node}")

    def observe_pairs(self, pairs) -> None:
        self.true_pairs.update(pairs)

    # -- derived ------------------------------------------------------------------

    def counts(self) -> tuple[int, int, int, int]:
        sent = len(self.packets)
        delivered = sum(1 for p in self.packets.values() if p.state == "delivered")
        dropped = sum(1 for p in self.packets.values() if p.state == "dropped")
        return sent, delivered, dropped, sent - delivered - dropped


@dataclass
class MetricsReport:
    run_s: float
    sent: int
    delivered: int
    dropped: int
    in_flight: int
    pdr: Optional[float]
    throughput_bps: float
    mean_delay_s: Optional[float]
    p95_delay_s: Optional[float]
    error_rate: Optional[float]
    discovery_count: int
    discovery_rate: float
    discovery_completeness: Optional[float]
    rreq_floods: int
    control_frames: dict[str, int]
    energy_j: float
    energy_per_node_j: dict[int, float]
    energy_per_delivered_bit: Optional[float]

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["control_frames"] = dict(sorted(self.control_frames.items()))
        d["energy_per_node_j"] = {str(k): v for k, v in sorted(self.energy_per_node_j.items())}
        return d


def p95(sorted_values: list) -> float:
    """Nearest-rank 95th percentile."""
    n = len(sorted_values)
    idx = max(0, -(-95 * n // 100) - 1)  # ceil(0.95 n) - 1
    return sorted_values[idx]


def compute_metrics(recorder: Recorder, ledger: EnergyLedger, t_end: int) -> MetricsReport:
    """Fold the run records into the QoS report. Exact where it can be;
    floats only at the reporting boundary."""
    run_s = t_end / US_PER_S
    sent, delivered, dropped, in_flight = recorder.counts()
    delays = sorted(
        p.finished_at - p.created_at
        for p in recorder.packets.values()
        if p.state == "delivered"
    )
    delivered_bits = sum(
        p.payload_bits for p in recorder.packets.values() if p.state == "delivered"
    )
    frames_total = sum(recorder.frames_sent.values())
    channel_drops = sum(
        1
        for p in recorder.packets.values()
        if p.state == "dropped" and p.drop_reason not in _PRE_SEND_DROPS
    )
    total_nj = ledger.network_total_nj()
    completeness: Optional[float] = None
    if recorder.true_pairs:
        discovered = {(n, m) for _, n, m in recorder.discoveries}
        completeness = len(discovered & recorder.true_pairs) / len(recorder.true_pairs)
    return MetricsReport(
        run_s=run_s,
        sent=sent,
        delivered=delivered,
        dropped=dropped,
        in_flight=in_flight,
        pdr=(delivered / sent) if sent else None,
        throughput_bps=delivered_bits / run_s if run_s else 0.0,
        mean_delay_s=(sum(delays) / len(delays) / US_PER_S) if delays else None,
        p95_delay_s=(p95(delays) / US_PER_S) if delays else None,
        error_rate=((recorder.frames_collided + channel_drops) / frames_total)
        if frames_total
        else None,
        discovery_count=len(recorder.discoveries),
        discovery_rate=len(recorder.discoveries) / run_s if run_s else 0.0,
        discovery_completeness=completeness,
        rreq_floods=len(recorder.floods),
        control_frames=dict(sorted(recorder.frames_sent.items())),
        energy_j=float(total_nj / 10**9),
        energy_per_node_j={
            n: float(ledger.node_total_nj(n) / 10**9) for n in sorted(ledger.durations)
        },
        energy_per_delivered_bit=(float(total_nj / 10**9) / delivered_bits)
        if delivered_bits
        else None,
    )
