"""Scenario files: a flat, commented key=value format with repeated
``node.``, ``flow.`` and ``route.`` stanzas.

Durations are written in decimal seconds (or milliseconds where the key says
so) and held internally as integer microseconds. parse_scenario rejects
unknown keys with a line number and semantic violations with the offending
field name; emit_scenario round-trips to an equivalent config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Optional

from .core import US_PER_S
from .energy import PowerProfile
from .mac import bits_duration_us

MODES = ("aomdv", "dsr", "hello", "disco")
MACS = ("hmac", "always_on")


class ScenarioError(Exception):
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class FlowSpec:
    origin: int
    destination: int
    start_us: int
    rate_pps: Fraction
    payload_bits: int


@dataclass(frozen=True)
class NodeSpec:
    node_id: int
    x: Optional[float] = None
    y: Optional[float] = None
    mobile: Optional[bool] = None
    off_us: Optional[int] = None


@dataclass(frozen=True)
class StaticRouteSpec:
    node: int
    destination: int
    next_hop: int
    hop_count: int


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 0
    run_us: int = 10 * US_PER_S
    arena_w: float = 500.0
    arena_h: float = 500.0
    range_m: float = 100.0
    n_nodes: int = 1
    mobile_fraction: float = 0.0
    v_min: float = 1.0
    v_max: float = 5.0
    mobility_step_us: int = 250_000
    mode: str = "aomdv"
    mac: str = "hmac"
    wslot_us: int = 1_000
    islot_us: int = 10_000
    n_islots: int = 0  # 0 = auto: max(4, nodes // 2)
    bitrate_bps: int = 250_000
    ctrl_bits: int = 256
    jitter_us: int = 5_000
    bcast_jitter_frames: int = 3
    route_expiry_us: int = 10 * US_PER_S
    reply_wait_us: int = 1 * US_PER_S
    rreq_retries: int = 2
    link_fail_threshold: int = 2
    ad_table: tuple[tuple[str, int], ...] = (("aomdv", 1), ("dsr", 2), ("static", 0))
    hello_talk_prob: float = 0.3
    hello_slot_us: int = 100_000
    disco_slot_us: int = 100_000
    disco_beacon_us: int = 1_000
    disco_primes: tuple[tuple[int, ...], ...] = ((3, 5), (5, 7), (7, 11))
    profile: PowerProfile = field(
        default_factory=lambda: PowerProfile.make("60", "45", "45", "0.09")
    )
    node_specs: tuple[NodeSpec, ...] = ()
    flows: tuple[FlowSpec, ...] = ()
    static_routes: tuple[StaticRouteSpec, ...] = ()

    @property
    def islots_resolved(self) -> int:
        return self.n_islots if self.n_islots > 0 else max(4, self.n_nodes // 2)

    def node_spec(self, node_id: int) -> Optional[NodeSpec]:
        for spec in self.node_specs:
            if spec.node_id == node_id:
                return spec
        return None


def _us_from_seconds(text: str, key: str, line: int) -> int:
    try:
        value = Decimal(text) * US_PER_S
    except InvalidOperation:
        raise ScenarioError(f"{key}: not a number: {text!r}", line)
    if value != value.to_integral_value():
        raise ScenarioError(f"{key}: finer than microsecond resolution", line)
    return int(value)


def _us_from_ms(text: str, key: str, line: int) -> int:
    try:
        value = Decimal(text) * 1000
    except InvalidOperation:
        raise ScenarioError(f"{key}: not a number: {text!r}", line)
    if value != value.to_integral_value():
        raise ScenarioError(f"{key}: finer than microsecond resolution", line)
    return int(value)


def _parse_int(text: str, key: str, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioError(f"{key}: not an integer: {text!r}", line)


def _parse_float(text: str, key: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(f"{key}: not a number: {text!r}", line)


def _parse_bool(text: str, key: str, line: int) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ScenarioError(f"{key}: not a boolean: {text!r}", line)


def _parse_flow(text: str, line: int) -> FlowSpec:
    # "<origin> -> <dest> start_s <s> rate_pps <r> bits <b>"
    tokens = text.split()
    try:
        origin = int(tokens[0])
        assert tokens[1] == "->"
        destination = int(tokens[2])
        params = {}
        for i in range(3, len(tokens), 2):
            params[tokens[i]] = tokens[i + 1]
        start_us = _us_from_seconds(params.pop("start_s", "0"), "flow.start_s", line)
        rate = Fraction(params.pop("rate_pps", "1"))  # accepts "2", "0.5", "1/3"
        bits = int(params.pop("bits", "1024"))
        if params:
            raise ScenarioError(f"flow: unknown parameter {sorted(params)[0]!r}", line)
    except ScenarioError:
        raise
    except (ValueError, IndexError, AssertionError, InvalidOperation):
        raise ScenarioError(
            "flow: expected '<origin> -> <dest> start_s <s> rate_pps <r> bits <b>'",
            line,
        )
    if rate <= 0:
        raise ScenarioError("flow: rate_pps must be positive", line)
    if bits <= 0:
        raise ScenarioError("flow: bits must be positive", line)
    return FlowSpec(origin, destination, start_us, rate, bits)


def _parse_route(text: str, line: int) -> StaticRouteSpec:
    # "<node> : <dest> via <next_hop> hops <h>"
    tokens = text.split()
    try:
        node = int(tokens[0])
        assert tokens[1] == ":"
        destination = int(tokens[2])
        assert tokens[3] == "via"
        next_hop = int(tokens[4])
        assert tokens[5] == "hops"
        hops = int(tokens[6])
    except (ValueError, IndexError, AssertionError):
        raise ScenarioError(
            "route: expected '<node> : <dest> via <next_hop> hops <h>'", line
        )
    return StaticRouteSpec(node, destination, next_hop, hops)


def parse_scenario(text: str) -> ScenarioConfig:
    values: dict[str, tuple[str, int]] = {}
    node_specs: dict[int, dict] = {}
    flows: list[tuple[int, FlowSpec]] = []
    routes: list[tuple[int, StaticRouteSpec]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ScenarioError(f"expected 'key = value': {stripped!r}", lineno)
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not value:
            raise ScenarioError(f"{key}: empty value", lineno)

        if key.startswith("flow."):
            flows.append((lineno, _parse_flow(value, lineno)))
            continue
        if key.startswith("route."):
            routes.append((lineno, _parse_route(value, lineno)))
            continue
        if key.startswith("node."):
            parts = key.split(".")
            if len(parts) not in (2, 3):
                raise ScenarioError(f"unknown key {key!r}", lineno)
            try:
                nid = int(parts[1])
            except ValueError:
                raise ScenarioError(f"node id in {key!r} is not an integer", lineno)
            spec = node_specs.setdefault(nid, {})
            if len(parts) == 2:
                coords = value.split()
                if len(coords) != 2:
                    raise ScenarioError(f"{key}: expected '<x> <y>'", lineno)
                spec["x"] = _parse_float(coords[0], key, lineno)
                spec["y"] = _parse_float(coords[1], key, lineno)
            elif parts[2] == "mobile":
                spec["mobile"] = _parse_bool(value, key, lineno)
            elif parts[2] == "off_s":
                spec["off_us"] = _us_from_seconds(value, key, lineno)
            else:
                raise ScenarioError(f"unknown key {key!r}", lineno)
            continue
        values[key] = (value, lineno)

    def take(key: str):
        return values.pop(key, None)

    cfg = {}

    def scalar(key, parser, field_name=None):
        item = take(key)
        if item is not None:
            cfg[field_name or key] = parser(item[0], key, item[1])

    scalar("seed", _parse_int)
    scalar("run_s", _us_from_seconds, "run_us")
    scalar("arena_w_m", _parse_float, "arena_w")
    scalar("arena_h_m", _parse_float, "arena_h")
    scalar("range_m", _parse_float)
    scalar("nodes", _parse_int, "n_nodes")
    scalar("mobile_fraction", _parse_float)
    scalar("v_min_mps", _parse_float, "v_min")
    scalar("v_max_mps", _parse_float, "v_max")
    scalar("mobility_step_s", _us_from_seconds, "mobility_step_us")
    scalar("wslot_ms", _us_from_ms, "wslot_us")
    scalar("islot_ms", _us_from_ms, "islot_us")
    scalar("islots", _parse_int, "n_islots")
    scalar("bitrate_bps", _parse_int)
    scalar("ctrl_bits", _parse_int)
    scalar("jitter_ms", _us_from_ms, "jitter_us")
    scalar("bcast_jitter_frames", _parse_int)
    scalar("route_expiry_s", _us_from_seconds, "route_expiry_us")
    scalar("reply_wait_s", _us_from_seconds, "reply_wait_us")
    scalar("rreq_retries", _parse_int)
    scalar("link_fail_threshold", _parse_int)
    scalar("hello_talk_prob", _parse_float)
    scalar("hello_slot_ms", _us_from_ms, "hello_slot_us")
    scalar("disco_slot_ms", _us_from_ms, "disco_slot_us")
    scalar("disco_beacon_ms", _us_from_ms, "disco_beacon_us")

    mode_item = take("mode")
    if mode_item is not None:
        if mode_item[0] not in MODES:
            raise ScenarioError(f"mode: expected one of {MODES}", mode_item[1])
        cfg["mode"] = mode_item[0]
    mac_item = take("mac")
    if mac_item is not None:
        if mac_item[0] not in MACS:
            raise ScenarioError(f"mac: expected one of {MACS}", mac_item[1])
        cfg["mac"] = mac_item[0]

    primes_item = take("disco_primes")
    if primes_item is not None:
        try:
            groups = tuple(
                tuple(int(p) for p in group.split(","))
                for group in primes_item[0].split(";")
                if group.strip()
            )
        except ValueError:
            raise ScenarioError("disco_primes: expected e.g. '3,5;5,7'", primes_item[1])
        if not groups or any(not g for g in groups):
            raise ScenarioError("disco_primes: empty group", primes_item[1])
        cfg["disco_primes"] = groups

    ad = dict(ScenarioConfig().ad_table)
    for src in ("static", "aomdv", "dsr"):
        item = take(f"ad_{src}")
        if item is not None:
            ad[src] = _parse_int(item[0], f"ad_{src}", item[1])
    cfg["ad_table"] = tuple(sorted(ad.items()))

    power = {}
    for part in ("tx", "rx", "listen", "sleep"):
        item = take(f"power_{part}_mw")
        if item is not None:
            power[part] = item[0]
    if power:
        base = ScenarioConfig().profile
        cfg["profile"] = PowerProfile.make(
            power.get("tx", base.tx_mw),
            power.get("rx", base.rx_mw),
            power.get("listen", base.listen_mw),
            power.get("sleep", base.sleep_mw),
        )

    if values:
        key = sorted(values, key=lambda k: values[k][1])[0]
        raise ScenarioError(f"unknown key {key!r}", values[key][1])

    cfg["node_specs"] = tuple(
        NodeSpec(nid, **spec) for nid, spec in sorted(node_specs.items())
    )
    cfg["flows"] = tuple(f for _, f in flows)
    cfg["static_routes"] = tuple(r for _, r in routes)

    config = ScenarioConfig(**cfg)
    validate_scenario(config)
    return config


def validate_scenario(cfg: ScenarioConfig) -> None:
    def bad(field: str, why: str):
        raise ScenarioError(f"{field}: {why}")

    if cfg.n_nodes < 1:
        bad("nodes", "node count must be >= 1")
    if cfg.run_us <= 0:
        bad("run_s", "run length must be positive")
    if cfg.arena_w <= 0 or cfg.arena_h <= 0:
        bad("arena", "arena dimensions must be positive")
    if cfg.range_m <= 0:
        bad("range_m", "radio range must be positive")
    if not 0.0 <= cfg.mobile_fraction <= 1.0:
        bad("mobile_fraction", "must be within [0, 1]")
    if cfg.v_min <= 0 or cfg.v_max < cfg.v_min:
        bad("v_min_mps", "need 0 < v_min <= v_max")
    if cfg.mobility_step_us <= 0:
        bad("mobility_step_s", "must be positive")
    if cfg.mode not in MODES:
        bad("mode", f"expected one of {MODES}")
    if cfg.mac not in MACS:
        bad("mac", f"expected one of {MACS}")
    if cfg.wslot_us <= 0 or cfg.islot_us <= 0:
        bad("wslot_ms", "slot lengths must be positive")
    if cfg.wslot_us >= cfg.islot_us:
        bad("wslot_ms", "wakeup slot must be shorter than data slot")
    if cfg.n_islots < 0:
        bad("islots", "must be >= 0 (0 = auto)")
    if cfg.bitrate_bps <= 0:
        bad("bitrate_bps", "must be positive")
    if cfg.ctrl_bits <= 0:
        bad("ctrl_bits", "must be positive")
    if cfg.rreq_retries < 0:
        bad("rreq_retries", "must be >= 0")
    if cfg.link_fail_threshold < 1:
        bad("link_fail_threshold", "must be >= 1")
    if not 0.0 <= cfg.hello_talk_prob <= 1.0:
        bad("hello_talk_prob", "must be within [0, 1]")
    if cfg.hello_slot_us <= 0 or cfg.disco_slot_us <= 0:
        bad("hello_slot_ms", "slot lengths must be positive")
    if cfg.disco_beacon_us <= 0 or cfg.disco_beacon_us > cfg.disco_slot_us:
        bad("disco_beacon_ms", "beacon must fit inside the slot")
    for group in cfg.disco_primes:
        if len(set(group)) != len(group) or min(group) < 2:
            bad("disco_primes", "each group needs distinct primes >= 2")

    ids = range(cfg.n_nodes)
    for spec in cfg.node_specs:
        if spec.node_id not in ids:
            bad(f"node.{spec.node_id}", f"node id outside 0..{cfg.n_nodes - 1}")
        if (spec.x is None) != (spec.y is None):
            bad(f"node.{spec.node_id}", "coordinates need both x and y")
        if spec.x is not None and not (
            0 <= spec.x <= cfg.arena_w and 0 <= spec.y <= cfg.arena_h
        ):
            bad(f"node.{spec.node_id}", "coordinates outside the arena")
        if spec.off_us is not None and spec.off_us < 0:
            bad(f"node.{spec.node_id}.off_s", "must be >= 0")

    if cfg.mode in ("aomdv", "dsr"):
        max_bits = max(
            [cfg.ctrl_bits] + [f.payload_bits for f in cfg.flows], default=cfg.ctrl_bits
        )
        if cfg.mac == "hmac" and bits_duration_us(max_bits, cfg.bitrate_bps) > cfg.islot_us:
            bad("islot_ms", f"{max_bits}-bit payload does not fit one data slot")

    for i, flow in enumerate(cfg.flows, start=1):
        name = f"flow.{i}"
        if flow.origin not in ids or flow.destination not in ids:
            bad(name, f"endpoint outside 0..{cfg.n_nodes - 1}")
        if flow.origin == flow.destination:
            bad(name, "origin and destination must differ")

    for i, route in enumerate(cfg.static_routes, start=1):
        name = f"route.{i}"
        if any(n not in ids for n in (route.node, route.destination, route.next_hop)):
            bad(name, f"node outside 0..{cfg.n_nodes - 1}")
        if route.hop_count < 1:
            bad(name, "hop count must be >= 1")


def _dec(us: int) -> str:
    return str((Decimal(us) / US_PER_S).normalize())


def _dec_ms(us: int) -> str:
    return str((Decimal(us) / 1000).normalize())


def emit_scenario(cfg: ScenarioConfig) -> str:
    """Canonical text form; parse_scenario(emit_scenario(cfg)) == cfg."""
    ad = dict(cfg.ad_table)
    lines = [
        f"seed = {cfg.seed}",
        f"run_s = {_dec(cfg.run_us)}",
        f"arena_w_m = {cfg.arena_w}",
        f"arena_h_m = {cfg.arena_h}",
        f"range_m = {cfg.range_m}",
        f"nodes = {cfg.n_nodes}",
        f"mobile_fraction = {cfg.mobile_fraction}",
        f"v_min_mps = {cfg.v_min}",
        f"v_max_mps = {cfg.v_max}",
        f"mobility_step_s = {_dec(cfg.mobility_step_us)}",
        f"mode = {cfg.mode}",
        f"mac = {cfg.mac}",
        f"wslot_ms = {_dec_ms(cfg.wslot_us)}",
        f"islot_ms = {_dec_ms(cfg.islot_us)}",
        f"islots = {cfg.n_islots}",
        f"bitrate_bps = {cfg.bitrate_bps}",
        f"ctrl_bits = {cfg.ctrl_bits}",
        f"jitter_ms = {_dec_ms(cfg.jitter_us)}",
        f"bcast_jitter_frames = {cfg.bcast_jitter_frames}",
        f"route_expiry_s = {_dec(cfg.route_expiry_us)}",
        f"reply_wait_s = {_dec(cfg.reply_wait_us)}",
        f"rreq_retries = {cfg.rreq_retries}",
        f"link_fail_threshold = {cfg.link_fail_threshold}",
        f"ad_static = {ad['static']}",
        f"ad_aomdv = {ad['aomdv']}",
        f"ad_dsr = {ad['dsr']}",
        f"hello_talk_prob = {cfg.hello_talk_prob}",
        f"hello_slot_ms = {_dec_ms(cfg.hello_slot_us)}",
        f"disco_slot_ms = {_dec_ms(cfg.disco_slot_us)}",
        f"disco_beacon_ms = {_dec_ms(cfg.disco_beacon_us)}",
        "disco_primes = " + ";".join(",".join(str(p) for p in g) for g in cfg.disco_primes),
        f"power_tx_mw = {cfg.profile.tx_mw}",
        f"power_rx_mw = {cfg.profile.rx_mw}",
        f"power_listen_mw = {cfg.profile.listen_mw}",
        f"power_sleep_mw = {cfg.profile.sleep_mw}",
    ]
    for spec in cfg.node_specs:
        if spec.x is not None:
            lines.append(f"node.{spec.node_id} = {spec.x} {spec.y}")
        if spec.mobile is not None:
            lines.append(f"node.{spec.node_id}.mobile = {str(spec.mobile).lower()}")
        if spec.off_us is not None:
            lines.append(f"node.{spec.node_id}.off_s = {_dec(spec.off_us)}")
    for i, flow in enumerate(cfg.flows, start=1):
        lines.append(
            f"flow.{i} = {flow.origin} -> {flow.destination} "
            f"start_s {_dec(flow.start_us)} rate_pps {flow.rate_pps} "
            f"bits {flow.payload_bits}"
        )
    for i, route in enumerate(cfg.static_routes, start=1):
        lines.append(
            f"route.{i} = {route.node} : {route.destination} "
            f"via {route.next_hop} hops {route.hop_count}"
        )
    return "\n".join(lines) + "\n"
