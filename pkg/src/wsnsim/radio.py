"""Node geometry, random-waypoint mobility, unit-disk adjacency, and the
shared-channel transmission/collision model.

Connectivity is the unit-graph rule: two nodes are neighbors iff their
Euclidean distance is within the radio range. Reception is evaluated against
positions captured at transmission start; collisions destroy every
overlapping frame at a shared receiver (no capture effect, no SINR).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import KIND_FRAME, KIND_SLOT, SimEngine

OUT_OF_RANGE = "out_of_range"
RADIO_ASLEEP = "radio_asleep"
COLLIDED = "collided"
DELIVERED = "delivered"


class UnknownNodeError(KeyError):
    pass


@dataclass
class NodePose:
    node_id: int
    x: float
    y: float
    mobile: bool = False
    # waypoint target and speed; meaningful only while mobile
    wx: float = 0.0
    wy: float = 0.0
    speed: float = 0.0


@dataclass
class TopologySnapshot:
    """Positions plus unit-disk radius at one instant."""

    positions: dict[int, tuple[float, float]]
    range_m: float

    def distance(self, a: int, b: int) -> float:
        return math.dist(self.positions[a], self.positions[b])

    def neighbors(self, node_id: int) -> set[int]:
        if node_id not in self.positions:
            raise UnknownNodeError(node_id)
        return {
            other
            for other in self.positions
            if other != node_id and self.distance(node_id, other) <= self.range_m
        }


class World:
    """Arena with node poses; owns mobility stepping and adjacency queries."""

    def __init__(self, arena_w: float, arena_h: float, range_m: float) -> None:
        self.arena_w = arena_w
        self.arena_h = arena_h
        self.range_m = range_m
        self.poses: dict[int, NodePose] = {}

    def add_node(self, node_id: int, x: float, y: float, mobile: bool = False) -> NodePose:
        if not (0.0 <= x <= self.arena_w and 0.0 <= y <= self.arena_h):
            raise ValueError(f"node {node_id} at ({x},{y}) outside arena")
        pose = NodePose(node_id, x, y, mobile)
        self.poses[node_id] = pose
        return pose

    def distance(self, a: int, b: int) -> float:
        pa, pb = self.poses[a], self.poses[b]
        return math.hypot(pa.x - pb.x, pa.y - pb.y)

    def neighbors(self, node_id: int) -> set[int]:
        if node_id not in self.poses:
            raise UnknownNodeError(node_id)
        return {
            other
            for other in self.poses
            if other != node_id and self.distance(node_id, other) <= self.range_m
        }

    def adjacency_pairs(self) -> set[tuple[int, int]]:
        """All ordered in-range pairs right now."""
        ids = sorted(self.poses)
        out = set()
        for i, a in enumerate(ids):
            for b in ids[i + 1 :]:
                if self.distance(a, b) <= self.range_m:
                    out.add((a, b))
                    out.add((b, a))
        return out

    def snapshot(self) -> TopologySnapshot:
        return TopologySnapshot(
            {nid: (p.x, p.y) for nid, p in self.poses.items()}, self.range_m
        )

    def init_waypoint(self, pose: NodePose, rng, v_min: float, v_max: float) -> None:
        pose.wx = rng.uniform01() * self.arena_w
        pose.wy = rng.uniform01() * self.arena_h
        pose.speed = rng.uniform(v_min, v_max)

    def step_mobility(self, dt_s: float, rng, v_min: float, v_max: float) -> None:
        """Advance every mobile node min(speed*dt, remaining) toward its
        waypoint; a node that arrives draws a fresh waypoint and speed."""
        if dt_s <= 0:
            raise ValueError("mobility step needs dt > 0")
        for nid in sorted(self.poses):
            pose = self.poses[nid]
            if not pose.mobile:
                continue
            dx = pose.wx - pose.x
            dy = pose.wy - pose.y
            remaining = math.hypot(dx, dy)
            travel = pose.speed * dt_s
            if travel >= remaining:
                pose.x, pose.y = pose.wx, pose.wy
                self.init_waypoint(pose, rng, v_min, v_max)
            elif remaining > 0:
                pose.x += dx / remaining * travel
                pose.y += dy / remaining * travel


@dataclass
class FrameOnAir:
    """One transmission occupying the channel over [start, end]."""

    sender: int
    start: int  # microseconds
    end: int
    frame: object  # mac.Frame
    positions: dict[int, tuple[float, float]]  # captured at start
    rx_marked: list = field(default_factory=list)  # nodes put into RX by this frame

    def overlaps(self, other: "FrameOnAir") -> bool:
        return self.start < other.end and other.start < self.end


class Channel:
    """Shared radio medium.

    The MAC calls begin() when a transmitter keys up; the channel schedules
    the receive-marking pass (same instant, after all already-queued events)
    and the end-of-frame outcome pass. Outcomes per potential receiver:
    out_of_range, radio_asleep, collided, or delivered, in that priority.
    The radio-state provider is the MAC itself (it owns the radio states).
    """

    def __init__(self, engine: SimEngine, world: World) -> None:
        self.engine = engine
        self.world = world
        self.active: list[FrameOnAir] = []
        self._tx_busy_until: dict[int, int] = {}
        self._max_dur = 1
        # provider hooks, wired by the MAC:
        self.receive_capable: Callable[[int, int, int], bool] = lambda n, a, b: False
        self.try_mark_rx: Callable[[int, FrameOnAir], None] = lambda n, fa: None
        self.on_frame_end: Callable[[FrameOnAir, dict[int, str]], None] = (
            lambda fa, outcomes: None
        )

    def begin(self, sender: int, frame, start: int, end: int) -> FrameOnAir:
        if end <= start:
            raise ValueError("frame must have positive duration")
        busy = self._tx_busy_until.get(sender, -1)
        if start < busy:
            raise AssertionError(
                f"node {sender} keyed up at {start} while transmitting until {busy}"
            )
        self._tx_busy_until[sender] = end
        if end - start > self._max_dur:
            self._max_dur = end - start
        fa = FrameOnAir(
            sender, start, end, frame,
            {nid: (p.x, p.y) for nid, p in self.world.poses.items()},
        )
        self.active.append(fa)
        self.engine.schedule(start, KIND_SLOT, lambda ev: self._mark_receivers(fa))
        self.engine.schedule(end, KIND_FRAME, lambda ev: self._finish(fa), target=sender)
        return fa

    def _in_range_of(self, fa: FrameOnAir, node: int) -> bool:
        sx, sy = fa.positions[fa.sender]
        nx, ny = fa.positions[node]
        return math.hypot(sx - nx, sy - ny) <= self.world.range_m

    def _addressed_to(self, frame, node: int) -> bool:
        dst = frame.dst
        return dst == node or dst == -1  # -1 is the broadcast address

    def _mark_receivers(self, fa: FrameOnAir) -> None:
        # Put addressed, in-range, currently-listening nodes into RX for the
        # duration of the frame; runs after every event already queued at
        # this instant, so same-tick wakeups are visible.
        for node in sorted(fa.positions):
            if node == fa.sender:
                continue
            if self._addressed_to(fa.frame, node) and self._in_range_of(fa, node):
                self.try_mark_rx(node, fa)

    def outcomes_for(self, fa: FrameOnAir, receivers=None) -> dict[int, str]:
        """Per-receiver outcome of one transmission; independent of the order
        other frames were processed in."""
        outcomes: dict[int, str] = {}
        nodes = sorted(fa.positions) if receivers is None else sorted(receivers)
        for node in nodes:
            if node == fa.sender:
                continue
            if not self._in_range_of(fa, node):
                outcomes[node] = OUT_OF_RANGE
                continue
            if not self.receive_capable(node, fa.start, fa.end):
                outcomes[node] = RADIO_ASLEEP
                continue
            hit = False
            for other in self.active:
                if other is fa or other.sender == node:
                    continue
                if other.overlaps(fa) and self._in_range_of(other, node):
                    hit = True
                    break
            outcomes[node] = COLLIDED if hit else DELIVERED
        return outcomes

    def _finish(self, fa: FrameOnAir) -> None:
        outcomes = self.outcomes_for(fa)
        self.on_frame_end(fa, outcomes)
        # A past frame can still interfere with one whose outcome pass has
        # not fired yet; every such frame started after now - max duration,
        # so anything ending at or before that horizon is unreachable.
        if len(self.active) > 16:
            horizon = self.engine.now - self._max_dur
            self.active = [f for f in self.active if f.end > horizon]
