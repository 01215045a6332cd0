"""wsnsim: discrete-event simulation of multihop wireless sensor networks.

Multipath on-demand routing with loop-free link-disjoint paths, a
source-routing baseline, a duty-cycled wakeup-slot MAC against an always-on
baseline, randomized-beacon and prime-schedule neighbor discovery, exact
per-node radio energy accounting, and a scenario-driven CLI.
"""

from .core import InvariantViolation, RngHub, RngStream, SchedulingError, SimEngine
from .discovery import (
    DiscoSchedule,
    NeighborLedger,
    disco_awake,
    disco_duty_cycle,
    disco_first_meeting,
    hello_slot,
)
from .energy import EnergyLedger, MetricsReport, PowerProfile, Recorder, compute_metrics
from .mac import (
    AlwaysOnMac,
    Frame,
    HmacMac,
    RadioController,
    SlotSchedule,
    build_frame_schedule,
)
from .radio import Channel, FrameOnAir, TopologySnapshot, World
from .routing import (
    AomdvRouting,
    DataPacket,
    DsrRouting,
    PathRecord,
    RouteEntry,
    insert_path,
)
from .scenario import ScenarioConfig, ScenarioError, emit_scenario, parse_scenario
from .simulation import RunResult, run_comparison, run_scenario

__version__ = "0.1.0"
