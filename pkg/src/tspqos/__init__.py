"""Exact and simulated QoS analysis of time-space-priority packet buffers."""

from .ctmc import (
    RateMatrix,
    SolverError,
    StationaryDistribution,
    build_generator,
    solve,
    solve_stationary,
)
from .metrics import (
    QosReport,
    analyze,
    little_delays,
    loss_probabilities_closed_form,
    loss_probabilities_rate_based,
    mean_occupancy,
    qos_report,
)
from .policy import (
    TABLE1,
    ArrivalOutcome,
    BufferState,
    Outcome,
    PacketClass,
    SchemeKind,
    SystemParams,
    enumerate_states,
    on_nrt_arrival,
    on_rt_arrival,
    on_service,
)
from .sim import SimConfig, SimCounters, SimReport, qos_from_sim, run_simulation, simulate
from .sweep import ReportRow, SweepSpec, compare_schemes, read_csv, run_sweep, write_csv

__version__ = "0.1.0"

__all__ = [
    "RateMatrix",
    "SolverError",
    "StationaryDistribution",
    "build_generator",
    "solve",
    "solve_stationary",
    "QosReport",
    "analyze",
    "little_delays",
    "loss_probabilities_closed_form",
    "loss_probabilities_rate_based",
    "mean_occupancy",
    "qos_report",
    "TABLE1",
    "ArrivalOutcome",
    "BufferState",
    "Outcome",
    "PacketClass",
    "SchemeKind",
    "SystemParams",
    "enumerate_states",
    "on_nrt_arrival",
    "on_rt_arrival",
    "on_service",
    "SimConfig",
    "SimCounters",
    "SimReport",
    "qos_from_sim",
    "run_simulation",
    "simulate",
    "ReportRow",
    "SweepSpec",
    "compare_schemes",
    "read_csv",
    "run_sweep",
    "write_csv",
]
