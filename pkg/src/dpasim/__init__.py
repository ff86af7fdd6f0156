"""Deadline-constrained transmission over two-state fading channels.

Drift-plus-penalty power allocation (DPA), an earliest-deadline-first
baseline, brute-force oracles, and a seeded slot simulator with a compiled
core and a pure-Python fallback.
"""
from .engine import BACKEND, ForcedTraces, InvariantViolation, RunResult, run, step
from .model import ChannelState, ConfigError, PowerAllocation, SystemConfig
from .policies import DPA, EDF, FixedTrace, Idle, VirtualQueues, make_policy

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ChannelState", "ConfigError", "DPA", "EDF", "FixedTrace", "ForcedTraces",
    "Idle", "InvariantViolation", "PowerAllocation", "RunResult", "SystemConfig",
    "VirtualQueues", "make_policy", "run", "step", "__version__",
]
