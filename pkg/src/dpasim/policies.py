"""Per-slot decision makers.

All policies share ``decide(view, X) -> PolicyDecision``. ``DPA`` minimises
the drift-plus-penalty objective over the feasible allocations, ``EDF``
serves the most urgent head-of-line packet, ``FixedTrace`` replays a script.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .model import (
    ChannelState,
    PowerAllocation,
    SystemConfig,
    channel_power,
    surrogate_cost,
    validate_allocation,
)


@dataclass(frozen=True)
class SlotView:
    """What a policy observes at the start of slot ``t`` (1-based)."""

    t: int
    channels: tuple
    head_deadline: tuple
    queue_length: tuple
    config: SystemConfig

    def __post_init__(self):
        for d, q in zip(self.head_deadline, self.queue_length):
            if (d is None) != (q == 0):
                raise ValueError("head_deadline must be present iff queue_length > 0")


@dataclass(frozen=True)
class VirtualQueues:
    backlog: tuple

    def __post_init__(self):
        object.__setattr__(self, "backlog", tuple(float(x) for x in self.backlog))
        if any(x < 0 for x in self.backlog):
            raise ValueError(f"virtual queue backlog must be nonnegative: {self.backlog}")

    @classmethod
    def zeros(cls, n_users: int) -> "VirtualQueues":
        return cls((0.0,) * n_users)

    def __getitem__(self, i):
        return self.backlog[i]

    def __len__(self):
        return len(self.backlog)


@dataclass(frozen=True)
class PolicyDecision:
    allocation: PowerAllocation
    objective_value: Optional[float] = None


def virtual_queue_update(X: VirtualQueues, allocation: PowerAllocation,
                         config: SystemConfig) -> VirtualQueues:
    return VirtualQueues(tuple(
        max(x - g, 0.0) + p
        for x, g, p in zip(X.backlog, config.power_budget, allocation.powers)
    ))


def dpa_objective(candidate: PowerAllocation, view: SlotView, X: VirtualQueues) -> float:
    """V * sum_j f_j + sum_j X_j * (p_j - gamma_j) for one candidate allocation.

    Every f_j is recomputed per candidate; the summation order (ascending
    user index, starting from 0.0) is fixed so that the compiled kernel
    reproduces the value bit for bit.
    """
    cfg = view.config
    cost_sum = 0.0
    drift = 0.0
    for j in range(cfg.n_users):
        p = candidate.powers[j]
        served = p > 0 and view.queue_length[j] > 0
        cost_sum += surrogate_cost(cfg.deadline[j], view.head_deadline[j], served)
        drift += X.backlog[j] * (p - cfg.power_budget[j])
    return cfg.penalty_weight * cost_sum + drift


def dpa_candidates(view: SlotView) -> list:
    """Idle first, then one serve-candidate per nonempty queue in index order."""
    n = view.config.n_users
    cands = [PowerAllocation.idle(n)]
    for i in range(n):
        if view.queue_length[i] > 0:
            cands.append(PowerAllocation.serve(n, i, channel_power(view.channels[i], view.config)))
    return cands


def dpa_decide(view: SlotView, X: VirtualQueues) -> PolicyDecision:
    best = None
    best_obj = float("inf")
    for cand in dpa_candidates(view):
        obj = dpa_objective(cand, view, X)
        # strict: the earliest candidate wins exact ties
        if best_obj > obj:
            best, best_obj = cand, obj
    return PolicyDecision(best, best_obj)


def edf_decide(view: SlotView) -> PolicyDecision:
    n = view.config.n_users
    target = None
    for i in range(n):
        d = view.head_deadline[i]
        if d is not None and (target is None or d < view.head_deadline[target]):
            target = i
    if target is None:
        return PolicyDecision(PowerAllocation.idle(n))
    return PolicyDecision(PowerAllocation.serve(
        n, target, channel_power(view.channels[target], view.config)))


def fixed_trace_decide(view: SlotView, trace: Sequence[PowerAllocation]) -> PolicyDecision:
    if not 1 <= view.t <= len(trace):
        raise IndexError(f"slot {view.t} outside fixed trace of length {len(trace)}")
    alloc = trace[view.t - 1]
    if not isinstance(alloc, PowerAllocation):
        alloc = PowerAllocation(alloc)
    return PolicyDecision(alloc)


class Policy:
    """Common interface. ``kernel_code`` is set for policies the compiled
    kernel implements natively."""

    name = "policy"
    kernel_code: Optional[int] = None

    def decide(self, view: SlotView, X: VirtualQueues) -> PolicyDecision:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}()"


class DPA(Policy):
    name = "dpa"
    kernel_code = 0

    def decide(self, view, X):
        return dpa_decide(view, X)


class EDF(Policy):
    name = "edf"
    kernel_code = 1

    def decide(self, view, X):
        return edf_decide(view)


class Idle(Policy):
    name = "idle"

    def decide(self, view, X):
        return PolicyDecision(PowerAllocation.idle(view.config.n_users))


class FixedTrace(Policy):
    name = "fixed"

    def __init__(self, trace: Sequence):
        self.trace = [a if isinstance(a, PowerAllocation) else PowerAllocation(a) for a in trace]

    def decide(self, view, X):
        return fixed_trace_decide(view, self.trace)

    def __repr__(self):
        return f"FixedTrace({[a.powers for a in self.trace]!r})"


POLICIES = {"dpa": DPA, "edf": EDF, "idle": Idle}


def make_policy(name: str, trace: Optional[Sequence] = None) -> Policy:
    if name == "fixed":
        if trace is None:
            raise ValueError("policy 'fixed' needs a trace")
        return FixedTrace(trace)
    try:
        return POLICIES[name]()
    except KeyError:
        raise ValueError(f"unknown policy {name!r}; expected one of "
                         f"{sorted([*POLICIES, 'fixed'])}") from None


def check_decision(decision: PolicyDecision, channels: Sequence[ChannelState],
                   config: SystemConfig) -> None:
    problem = validate_allocation(decision.allocation, channels, config)
    if problem is not None:
        raise ValueError(f"infeasible allocation {decision.allocation.powers}: {problem}")
