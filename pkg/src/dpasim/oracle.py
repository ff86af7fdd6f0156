"""Brute-force ground truth for tiny problems.

``bruteforce_slot_min`` scans the whole feasible allocation set of a slot,
including serving empty queues, with its own objective evaluation.
``offline_optimal_drops`` knows the full channel/arrival future and
exhausts every action sequence; it reuses the queue dynamics from
:mod:`dpasim.model`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import ForcedTraces
from .model import ChannelState, PowerAllocation, SystemConfig, advance_queue
from .policies import SlotView, VirtualQueues

MAX_SEQUENCES = 400_000


def _level(channel, p_low, p_high):
    return p_high if channel is ChannelState.BAD else p_low


def feasible_set(view: SlotView) -> list:
    """Every allocation with at most one transmitter at its channel level:
    idle first, then user 0..N-1."""
    cfg = view.config
    n = cfg.n_users
    out = [PowerAllocation((0.0,) * n)]
    for i in range(n):
        powers = [0.0] * n
        powers[i] = _level(view.channels[i], cfg.p_low, cfg.p_high)
        out.append(PowerAllocation(powers))
    return out


def _objective(powers, view, X):
    cfg = view.config
    penalty = 0.0
    weighted = 0.0
    for j in range(cfg.n_users):
        m, d = cfg.deadline[j], view.head_deadline[j]
        if d is None or (powers[j] > 0 and view.queue_length[j] > 0):
            cost = 0.0
        else:
            cost = (m - d + 1) / m
        penalty += cost
        weighted += X[j] * (powers[j] - cfg.power_budget[j])
    return cfg.penalty_weight * penalty + weighted


def bruteforce_slot_min(view: SlotView, X: VirtualQueues):
    """Returns ``(allocation, objective)`` minimising the per-slot objective."""
    backlog = X.backlog if isinstance(X, VirtualQueues) else tuple(X)
    best, best_val = None, float("inf")
    for alloc in feasible_set(view):
        val = _objective(alloc.powers, view, backlog)
        if val < best_val:
            best, best_val = alloc, val
    return best, best_val


@dataclass(frozen=True)
class TinyInstance:
    """A fully scripted finite-horizon scenario small enough to exhaust."""

    channels: tuple      # per slot, per user ChannelState
    arrivals: tuple      # per slot, per user bool
    deadline: tuple
    power_budget: tuple
    p_low: float = 1.0
    p_high: float = 2.0
    initial_queues: Optional[tuple] = None

    def __post_init__(self):
        n = len(self.deadline)
        if not 1 <= n <= 4:
            raise ValueError(f"tiny instances have 1..4 users, got {n}")
        if not 1 <= self.horizon <= 8:
            raise ValueError(f"tiny instances have horizon 1..8, got {self.horizon}")
        if len(self.arrivals) != self.horizon:
            raise ValueError("channel and arrival traces must have equal length")
        if any(len(c) != n for c in self.channels) or any(len(a) != n for a in self.arrivals):
            raise ValueError("every trace entry needs one value per user")

    @property
    def horizon(self) -> int:
        return len(self.channels)

    @property
    def n_users(self) -> int:
        return len(self.deadline)

    def config(self, penalty_weight: float = 60.0) -> SystemConfig:
        return SystemConfig(self.n_users, arrival_prob=0.0, power_budget=self.power_budget,
                            deadline=self.deadline, p_low=self.p_low, p_high=self.p_high,
                            penalty_weight=penalty_weight, horizon=self.horizon)

    def traces(self) -> ForcedTraces:
        return ForcedTraces(self.channels, self.arrivals, self.initial_queues)


def offline_optimal_drops(instance: TinyInstance, enforce_budget: bool = True):
    """Fewest drops over the horizon achievable with full knowledge of the future.

    Each slot's action is idle or serving one user at its channel level
    (serving an empty queue is allowed and only spends power). With
    ``enforce_budget`` every user must satisfy ``sum(p) / H <= gamma``.
    Returns ``(min_drops, witness)`` where ``witness`` is the list of
    per-slot :class:`PowerAllocation` of the first optimal sequence in
    enumeration order.
    """
    n, H = instance.n_users, instance.horizon
    if (n + 1) ** H > MAX_SEQUENCES:
        raise ValueError(f"(n_users+1)^horizon = {(n + 1) ** H} exceeds {MAX_SEQUENCES}")
    m = instance.deadline
    gamma = instance.power_budget
    levels = [[_level(c, instance.p_low, instance.p_high) for c in slot]
              for slot in instance.channels]
    queues0 = tuple(tuple(q) for q in instance.initial_queues) if instance.initial_queues \
        else ((),) * n

    best = [None, None]  # drops, actions
    actions = []

    def within_budget(psum):
        return all(psum[i] / H <= gamma[i] for i in range(n))

    def dfs(t, queues, psum, drops):
        if best[0] is not None and drops >= best[0]:
            return
        if enforce_budget and not within_budget(psum):
            return
        if t == H:
            best[0], best[1] = drops, list(actions)
            return
        for a in range(-1, n):
            new_q, new_psum, new_drops = [], list(psum), drops
            for i in range(n):
                on = a == i
                if on:
                    new_psum[i] += levels[t][i]
                q, dropped = advance_queue(queues[i], on and bool(queues[i]),
                                           bool(instance.arrivals[t][i]), m[i])
                new_q.append(q)
                new_drops += dropped
            actions.append(a)
            dfs(t + 1, tuple(new_q), tuple(new_psum), new_drops)
            actions.pop()

    dfs(0, queues0, (0.0,) * n, 0)
    if best[0] is None:
        raise RuntimeError("no feasible action sequence")
    witness = []
    for t, a in enumerate(best[1]):
        powers = [0.0] * n
        if a >= 0:
            powers[a] = levels[t][a]
        witness.append(PowerAllocation(powers))
    return best[0], witness


# --- random generators shared by tests and the verify command ---------------

def random_view(rng: np.random.Generator, n_users: int, penalty_weight: float):
    """A random observable slot state and virtual-queue vector.

    Backlogs and budgets mix exact zeros, integers and grid values with
    continuous draws so that exact objective ties occur often.
    """
    deadline, heads, qlens, channels, X, gamma = [], [], [], [], [], []
    for _ in range(n_users):
        m = int(rng.integers(1, 7))
        deadline.append(m)
        if rng.random() < 0.3:
            heads.append(None)
            qlens.append(0)
        else:
            d = int(rng.integers(1, m + 1))
            heads.append(d)
            qlens.append(int(rng.integers(1, m - d + 2)))
        channels.append(ChannelState.BAD if rng.random() < 0.6 else ChannelState.GOOD)
        kind = rng.random()
        if kind < 0.25:
            X.append(0.0)
        elif kind < 0.5:
            X.append(float(rng.integers(0, 101)))
        else:
            X.append(float(rng.uniform(0.0, 100.0)))
        if rng.random() < 0.5:
            gamma.append(float(rng.integers(0, 11)) / 5)
        else:
            gamma.append(float(rng.uniform(0.0, 2.0)))
    cfg = SystemConfig(n_users, power_budget=gamma, deadline=deadline,
                       penalty_weight=penalty_weight, horizon=1)
    view = SlotView(1, tuple(channels), tuple(heads), tuple(qlens), cfg)
    return view, VirtualQueues(X)


def random_tiny_instance(rng: np.random.Generator, n_users: int = 2, horizon: int = 6,
                         bad_channel_prob: float = 0.6) -> TinyInstance:
    """Deadlines uniform in 1..5, budgets uniform in [0, p_high], arrival
    probabilities uniform in [0, 1], channels Bad with ``bad_channel_prob``."""
    deadline = tuple(int(m) for m in rng.integers(1, 6, size=n_users))
    gamma = tuple(float(g) for g in rng.uniform(0.0, 2.0, size=n_users))
    lam = rng.uniform(0.0, 1.0, size=n_users)
    channels = tuple(
        tuple(ChannelState.BAD if u < bad_channel_prob else ChannelState.GOOD for u in row)
        for row in rng.random((horizon, n_users)))
    arrivals = tuple(tuple(bool(u < l) for u, l in zip(row, lam))
                     for row in rng.random((horizon, n_users)))
    return TinyInstance(channels, arrivals, deadline, gamma)
