"""Scenario orchestration: builds every subsystem from a ScenarioConfig,
runs the event engine to the configured horizon, and folds the results into
a metrics report.

One scenario runs exactly one discovery mode: the routing protocols (aomdv,
dsr) discover neighbors through route traffic over the configured MAC, while
the hello and disco baselines replace the MAC with their own slot grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

from .core import (
    InvariantViolation,
    KIND_MOBILITY,
    KIND_SLOT,
    KIND_TIMER,
    KIND_TRAFFIC,
    RngHub,
    SimEngine,
    US_PER_S,
)
from .discovery import DiscoSchedule, NeighborLedger, disco_awake, hello_slot
from .energy import EnergyLedger, MetricsReport, Recorder, compute_metrics
from .mac import (
    AlwaysOnMac,
    HmacMac,
    RadioController,
    bits_duration_us,
    build_frame_schedule,
)
from .radio import Channel, World
from .routing import AomdvRouting, DataPacket, DsrRouting
from .scenario import ScenarioConfig, validate_scenario


@dataclass
class RunResult:
    cfg: ScenarioConfig
    report: MetricsReport
    recorder: Recorder
    energy: EnergyLedger
    neighbor_ledger: NeighborLedger
    trace: list[str]
    routing: object = None
    controllers: dict[int, RadioController] = field(default_factory=dict)
    world: Optional[World] = None
    disco_schedules: dict[int, DiscoSchedule] = field(default_factory=dict)


class RoutingChecker:
    """Inline invariant checks, enabled by --check: loop freedom of the
    per-destination next-hop graph after every route-table mutation,
    path disjointness, advertised-hop-count immutability, and at-most-once
    flood forwarding."""

    def __init__(self, engine: SimEngine) -> None:
        self.engine = engine
        self.routing: Optional[AomdvRouting] = None
        self._advertised: dict[tuple[int, int, int], int] = {}
        self._broadcast: set[tuple[int, tuple[int, int]]] = set()
        self.mutations = 0

    def _fail(self, message: str) -> None:
        raise InvariantViolation(
            f"{message} (t={self.engine.now}us, event #{self.engine.dispatched})"
        )

    def on_route_mutation(self, node: int, destination: int) -> None:
        self.mutations += 1
        entry = self.routing.nodes[node].table.get(destination)
        if entry is not None:
            nexts = [p.next_hop for p in entry.paths]
            lasts = [p.last_hop for p in entry.paths]
            if len(set(nexts)) != len(nexts) or len(set(lasts)) != len(lasts):
                self._fail(f"paths to {destination} at node {node} are not disjoint")
        # cycle detection over {x -> next_hop} for this destination
        edges: dict[int, list[int]] = {}
        for nid, st in self.routing.nodes.items():
            e = st.table.get(destination)
            if e is not None and e.paths:
                edges[nid] = [p.next_hop for p in e.paths]
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {n: WHITE for n in edges}
        for start in edges:
            if color[start] != WHITE:
                continue
            stack = [(start, iter(edges[start]))]
            color[start] = GRAY
            while stack:
                current, it = stack[-1]
                advanced = False
                for nxt in it:
                    if nxt == destination or nxt not in edges:
                        continue
                    if color[nxt] == GRAY:
                        self._fail(
                            f"next-hop cycle for destination {destination} via {nxt}"
                        )
                    if color[nxt] == WHITE:
                        color[nxt] = GRAY
                        stack.append((nxt, iter(edges[nxt])))
                        advanced = True
                        break
                if not advanced:
                    color[current] = BLACK
                    stack.pop()

    def on_advertise(self, node: int, destination: int, seq: int, adv: int) -> None:
        key = (node, destination, seq)
        prior = self._advertised.setdefault(key, adv)
        if prior != adv:
            self._fail(
                f"node {node} re-advertised destination {destination} seq {seq} "
                f"as {adv} hops after {prior}"
            )

    def on_rreq_broadcast(self, node: int, rreq_id: tuple[int, int]) -> None:
        key = (node, rreq_id)
        if key in self._broadcast:
            self._fail(f"node {node} re-broadcast flood {rreq_id}")
        self._broadcast.add(key)


def _place_nodes(cfg: ScenarioConfig, world: World, hub: RngHub) -> None:
    placement = hub.stream("placement")
    mobility = hub.stream("mobility")
    explicit_mobile: dict[int, bool] = {}
    for nid in range(cfg.n_nodes):
        spec = cfg.node_spec(nid)
        if spec is not None and spec.x is not None:
            x, y = spec.x, spec.y
        else:
            x = placement.uniform01() * cfg.arena_w
            y = placement.uniform01() * cfg.arena_h
        world.add_node(nid, x, y)
        if spec is not None and spec.mobile is not None:
            explicit_mobile[nid] = spec.mobile
    target = round(cfg.mobile_fraction * cfg.n_nodes)
    forced_on = sum(1 for v in explicit_mobile.values() if v)
    pool = [n for n in range(cfg.n_nodes) if n not in explicit_mobile]
    extra = min(len(pool), max(0, target - forced_on))
    chosen = set(mobility.sample(pool, extra)) if extra else set()
    for nid in range(cfg.n_nodes):
        mobile = explicit_mobile.get(nid, nid in chosen)
        world.poses[nid].mobile = mobile
        if mobile:
            world.init_waypoint(world.poses[nid], mobility, cfg.v_min, cfg.v_max)


def _per_hop_cost(cfg: ScenarioConfig):
    """Per-packet energy estimate used for route preference: hop count times
    the TX+RX energy of one maximum-size data frame (nanojoules)."""
    max_bits = max(
        [cfg.ctrl_bits] + [f.payload_bits for f in cfg.flows], default=cfg.ctrl_bits
    )
    dur = bits_duration_us(max_bits, cfg.bitrate_bps)
    per_hop = (cfg.profile.tx_mw + cfg.profile.rx_mw) * dur

    def cost(hops: int) -> Fraction:
        return per_hop * hops

    return cost


def run_scenario(
    cfg: ScenarioConfig, check: bool = False, trace: bool = False,
    seed: Optional[int] = None,
) -> RunResult:
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    validate_scenario(cfg)
    engine = SimEngine()
    hub = RngHub(cfg.seed)
    world = World(cfg.arena_w, cfg.arena_h, cfg.range_m)
    _place_nodes(cfg, world, hub)
    recorder = Recorder(trace_enabled=trace)
    ledger = EnergyLedger(cfg.profile)
    neighbors = NeighborLedger()
    ids = list(range(cfg.n_nodes))

    always_on = cfg.mode == "hello" or (cfg.mode in ("aomdv", "dsr") and cfg.mac == "always_on")
    controllers = {
        nid: RadioController(
            nid, always_on, ledger.accrue,
            on_transition=recorder.radio_transition if trace else None,
        )
        for nid in ids
    }
    for nid in ids:
        ledger.register_node(nid)

    recorder.observe_pairs(world.adjacency_pairs())

    routing = None
    mac = None
    disco_schedules: dict[int, DiscoSchedule] = {}

    if cfg.mode in ("aomdv", "dsr"):
        channel = Channel(engine, world)
        if cfg.mac == "hmac":
            schedule = build_frame_schedule(
                ids, cfg.wslot_us, cfg.islot_us, cfg.islots_resolved
            )
            mac = HmacMac(
                engine, channel, schedule, controllers, hub.stream("mac"),
                cfg.bitrate_bps, cfg.bcast_jitter_frames, recorder,
            )
            mac.start_wslot_chains()
        else:
            mac = AlwaysOnMac(
                engine, channel, controllers, hub.stream("mac"),
                cfg.bitrate_bps, cfg.jitter_us, recorder,
            )
        checker = RoutingChecker(engine) if check else None
        cls = AomdvRouting if cfg.mode == "aomdv" else DsrRouting
        routing = cls(
            engine, mac, ids,
            ctrl_bits=cfg.ctrl_bits,
            reply_wait_us=cfg.reply_wait_us,
            rreq_retries=cfg.rreq_retries,
            route_expiry_us=cfg.route_expiry_us,
            link_fail_threshold=cfg.link_fail_threshold,
            ad_table=dict(cfg.ad_table),
            cost_fn=_per_hop_cost(cfg),
            recorder=recorder,
            ledger=neighbors,
            checker=checker,
        )
        if checker is not None:
            checker.routing = routing
        if cfg.mode == "aomdv":
            for sr in cfg.static_routes:
                routing.add_static_route(sr.node, sr.destination, sr.next_hop, sr.hop_count)
        _wire_traffic(cfg, engine, routing, recorder, controllers)
    elif cfg.mode == "hello":
        _wire_hello(cfg, engine, world, controllers, hub, recorder, neighbors)
    elif cfg.mode == "disco":
        disco_schedules = _build_disco_schedules(cfg)
        _wire_disco(
            cfg, engine, world, controllers, recorder, neighbors, disco_schedules
        )

    _wire_mobility(cfg, engine, world, hub, recorder)
    _wire_deaths(cfg, engine, controllers, recorder)

    engine.run_until(cfg.run_us)

    for nid in ids:
        controllers[nid].flush(cfg.run_us)
    ledger.finalize(cfg.run_us)

    report = compute_metrics(recorder, ledger, cfg.run_us)
    sent, delivered, dropped, in_flight = recorder.counts()
    if delivered + dropped + in_flight != sent or in_flight < 0:
        raise InvariantViolation(
            f"packet conservation broken: {sent} != {delivered}+{dropped}+{in_flight}"
        )
    return RunResult(
        cfg, report, recorder, ledger, neighbors,
        list(recorder.trace), routing, controllers, world, disco_schedules,
    )


def _wire_traffic(cfg, engine, routing, recorder, controllers) -> None:
    for flow in cfg.flows:
        routing.register_flow(flow.origin, flow.destination)

        def make_tick(flow):
            def tick(ev):
                k = ev.data
                if not controllers[flow.origin].dead:
                    pid = recorder.packet_sent(
                        engine.now, flow.origin, flow.destination, flow.payload_bits
                    )
                    pkt = DataPacket(
                        pid, flow.origin, flow.destination, flow.payload_bits,
                        engine.now,
                    )
                    routing.send_data(flow.origin, flow.destination, pkt)
                nxt = flow.start_us + int((k + 1) * US_PER_S / flow.rate_pps)
                if nxt < cfg.run_us:
                    engine.schedule(nxt, KIND_TRAFFIC, tick, target=flow.origin,
                                    data=k + 1)
            return tick

        if flow.start_us < cfg.run_us:
            engine.schedule(
                flow.start_us, KIND_TRAFFIC, make_tick(flow),
                target=flow.origin, data=0,
            )


def _wire_mobility(cfg, engine, world, hub, recorder) -> None:
    if not any(p.mobile for p in world.poses.values()):
        return
    stream = hub.stream("mobility")
    dt_s = cfg.mobility_step_us / US_PER_S

    def step(ev):
        world.step_mobility(dt_s, stream, cfg.v_min, cfg.v_max)
        recorder.observe_pairs(world.adjacency_pairs())
        nxt = ev.fire_at + cfg.mobility_step_us
        if nxt <= cfg.run_us:
            engine.schedule(nxt, KIND_MOBILITY, step)

    engine.schedule(cfg.mobility_step_us, KIND_MOBILITY, step)


def _wire_deaths(cfg, engine, controllers, recorder) -> None:
    for spec in cfg.node_specs:
        if spec.off_us is None or spec.off_us > cfg.run_us:
            continue

        def make_kill(nid):
            def kill(ev):
                controllers[nid].kill(ev.fire_at)
                recorder.node_off(ev.fire_at, nid)
            return kill

        engine.schedule(spec.off_us, KIND_TIMER, make_kill(spec.node_id),
                        target=spec.node_id)


def _wire_hello(cfg, engine, world, controllers, hub, recorder, neighbors) -> None:
    stream = hub.stream("hello")
    slot = cfg.hello_slot_us

    def tick(ev):
        now = ev.fire_at
        alive = [n for n in sorted(world.poses) if not controllers[n].dead]
        adjacency = {n: world.neighbors(n) for n in alive}
        talkers, discoveries = hello_slot(alive, adjacency, cfg.hello_talk_prob, stream)
        for t in sorted(talkers):
            controllers[t].set_tx(now, now + slot)
            engine.schedule(now + slot, KIND_SLOT,
                            lambda e, t=t: controllers[t].reevaluate(e.fire_at))
        recorder.count_frames("HELLO", len(talkers))
        for listener in alive:
            if listener in talkers:
                continue
            audible = adjacency[listener] & talkers
            if len(audible) > 1:
                recorder.frames_collided += 1
            elif len(audible) == 1:
                recorder.frames_delivered += 1
        for listener, talker in sorted(discoveries):
            if neighbors.record(listener, talker, now):
                recorder.discovery(now, listener, talker)
        nxt = now + slot
        if nxt < cfg.run_us:
            engine.schedule(nxt, KIND_SLOT, tick)

    engine.schedule(0, KIND_SLOT, tick)


def _build_disco_schedules(cfg) -> dict[int, DiscoSchedule]:
    pool = cfg.disco_primes
    out = {}
    for nid in range(cfg.n_nodes):
        primes = pool[nid % len(pool)]
        out[nid] = DiscoSchedule(nid, primes, offset=nid % min(primes))
    return out


def _wire_disco(cfg, engine, world, controllers, recorder, neighbors, schedules) -> None:
    slot = cfg.disco_slot_us
    beacon = cfg.disco_beacon_us
    if cfg.n_nodes * beacon > slot:
        raise InvariantViolation(
            "disco beacons staggered by node id must fit inside one slot"
        )

    def tick(ev):
        now = ev.fire_at
        k = ev.data
        slot_end = now + slot
        awake = [
            n for n in sorted(world.poses)
            if not controllers[n].dead and disco_awake(schedules[n], k)
        ]
        for n in awake:
            ctl = controllers[n]
            ctl.extend_wake(now, slot_end)
            engine.schedule(slot_end, KIND_SLOT,
                            lambda e, c=ctl: c.reevaluate(e.fire_at))
            # beacons staggered by node id never overlap anywhere, so mutual
            # awakeness alone decides discovery
            b0 = now + n * beacon
            engine.schedule(
                b0, KIND_SLOT,
                lambda e, c=ctl, until=b0 + beacon: c.set_tx(e.fire_at, until),
                target=n,
            )
            engine.schedule(
                b0 + beacon, KIND_SLOT,
                lambda e, c=ctl: c.reevaluate(e.fire_at), target=n,
            )
        recorder.count_frames("BEACON", len(awake))
        for i, a in enumerate(awake):
            for b in awake[i + 1:]:
                if world.distance(a, b) <= world.range_m:
                    if neighbors.record(a, b, now):
                        recorder.discovery(now, a, b)
                    if neighbors.record(b, a, now):
                        recorder.discovery(now, b, a)
        nxt = now + slot
        if nxt < cfg.run_us:
            engine.schedule(nxt, KIND_SLOT, tick, data=k + 1)

    engine.schedule(0, KIND_SLOT, tick, data=0)


# -- multi-run drivers ---------------------------------------------------------

COMPARISON_MODES = (
    "aomdv+hmac",
    "aomdv+always_on",
    "dsr+always_on",
    "hello",
    "disco",
)


def mode_variant(cfg: ScenarioConfig, label: str) -> ScenarioConfig:
    """'aomdv+hmac' / 'dsr+always_on' / 'hello' / 'disco' -> config copy."""
    parts = label.split("+")
    mode = parts[0]
    if mode not in ("aomdv", "dsr", "hello", "disco"):
        raise ValueError(f"unknown mode label {label!r}")
    if len(parts) == 1:
        return replace(cfg, mode=mode)
    if parts[1] not in ("hmac", "always_on"):
        raise ValueError(f"unknown mac in label {label!r}")
    return replace(cfg, mode=mode, mac=parts[1])


def run_comparison(
    cfg: ScenarioConfig, modes=COMPARISON_MODES, check: bool = False,
    seed: Optional[int] = None,
) -> list[tuple[str, MetricsReport]]:
    """Same topology, traffic, and seed under each mode; the rows line up
    because every run re-derives placement from the same streams."""
    rows = []
    for label in modes:
        result = run_scenario(mode_variant(cfg, label), check=check, seed=seed)
        rows.append((label, result.report))
    return rows


def aggregate_reports(reports: list[MetricsReport]) -> dict:
    """Mean and population stddev of every numeric metric across seeds."""
    if not reports:
        return {}
    out: dict[str, dict] = {}
    sample = reports[0].to_dict()
    for key, value in sample.items():
        if isinstance(value, bool) or not isinstance(value, (int, float, type(None))):
            continue
        values = [r.to_dict()[key] for r in reports]
        present = [v for v in values if v is not None]
        if not present:
            out[key] = {"mean": None, "stddev": None, "n": 0}
            continue
        mean = sum(present) / len(present)
        var = sum((v - mean) ** 2 for v in present) / len(present)
        out[key] = {"mean": mean, "stddev": var ** 0.5, "n": len(present)}
    return out
