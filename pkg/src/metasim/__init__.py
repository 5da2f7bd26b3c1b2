"""Event-driven simulator for an asynchronous metasurface control fabric.

Handshake-based router ASICs in a mesh, fed by an edge gateway, measured
against a clocked baseline: delivery under arbitrary wire delays, idle
power, emission spread, and clock-skew scaling all become runnable
experiments.
"""

from .codec import (
    Coord,
    FieldOverflow,
    ImpedanceCode,
    MalformedPacket,
    Opcode,
    Packet,
    decode_packet,
    encode_packet,
    size_grid,
)
from .fabric import (
    BadLoadIndex,
    DestOutOfRange,
    DiscoveryIncomplete,
    Gateway,
    Grid,
    MetaAtomNode,
    Port,
    route_port,
)
from .kernel import (
    DelayModel,
    EventBudgetExhausted,
    EventQueue,
    FixedDelay,
    ScaledDelay,
    SchedulingInPast,
    SimError,
    Simulator,
    UniformJitter,
    sample_delay,
)
from .metrics import (
    EnergyParams,
    TransitionLedger,
    UnmatchedDelivery,
    WorkloadMismatch,
    compare_reports,
    emission_profile,
    energy,
    latency_report,
)
from .oracle import StateBudgetExhausted, exhaustive_oracle, explore_pipeline
from .primitives import (
    Channel,
    DelayUnderMatch,
    InterfaceMismatch,
    MullerC,
    MutexState,
    ProtocolViolation,
    StageSpec,
    Wire,
    bundling_check,
    compose_pipeline,
    latch_step,
    matched_delay,
    muller_c_step,
    mutex_grant,
)
from .scenario import SchemaError, Scenario, parse_scenario, validate_scenario
from .sync_baseline import (
    ClockTree,
    SyncGrid,
    TimingParams,
    build_clock_tree,
    check_timing,
)

__version__ = "0.1.0"
