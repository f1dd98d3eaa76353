"""Timing side-channel leakage in two-user schedulers."""

from .attacker import (
    ProbeSchedule,
    QueueObservation,
    Reconstruction,
    build_probe_schedule,
    observe_queue,
    reconstruct,
)
from .core import (
    JobTrace,
    ModelParams,
    PatternSequence,
    SlotTrace,
    bernoulli_arrivals,
    extract_pattern,
    slot_trace_from_times,
)
from .schedulers import (
    FCFS,
    TDMA,
    AccPolicyConfig,
    AccumulateAndServe,
    Priority,
    ScheduleOutcome,
    acc_serve_run,
    fcfs_run,
    tdma_run,
)

__version__ = "0.1.0"

__all__ = [
    "FCFS",
    "TDMA",
    "AccPolicyConfig",
    "AccumulateAndServe",
    "JobTrace",
    "ModelParams",
    "PatternSequence",
    "Priority",
    "ProbeSchedule",
    "QueueObservation",
    "Reconstruction",
    "ScheduleOutcome",
    "SlotTrace",
    "acc_serve_run",
    "bernoulli_arrivals",
    "build_probe_schedule",
    "extract_pattern",
    "fcfs_run",
    "observe_queue",
    "reconstruct",
    "slot_trace_from_times",
    "tdma_run",
]
