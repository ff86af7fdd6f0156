"""Domain types and single-slot dynamics.

Everything here is a pure function of its arguments. Queues are tuples of
per-packet remaining-deadline counters, head first.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

UserQueue = tuple  # tuple[int, ...], remaining deadlines head -> tail


class ConfigError(ValueError):
    """Invalid scenario parameter. ``field`` names the offending parameter."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class ChannelState(enum.Enum):
    BAD = "B"
    GOOD = "G"

    @classmethod
    def parse(cls, value) -> "ChannelState":
        if isinstance(value, ChannelState):
            return value
        return cls(str(value).upper()[:1])


ChannelStateVector = tuple  # tuple[ChannelState, ...]


def _per_user(name: str, value, n: int, cast) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ConfigError(name, f"expected {n} values, got {len(value)}")
        return tuple(cast(v) for v in value)
    return (cast(value),) * n


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters.

    Per-user fields accept a scalar (broadcast to every user) or a sequence
    of length ``n_users``; they are stored as tuples.
    """

    n_users: int
    arrival_prob: tuple = 0.4
    power_budget: tuple = 0.6
    deadline: tuple = 5
    bad_channel_prob: tuple = 0.6
    p_low: float = 1.0
    p_high: float = 2.0
    penalty_weight: float = 60.0
    horizon: int = 100_000
    seed: int = 0

    def __post_init__(self):
        n = self.n_users
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigError("n_users", f"must be a positive integer, got {n!r}")
        set_ = object.__setattr__
        set_(self, "arrival_prob", _per_user("arrival_prob", self.arrival_prob, n, float))
        set_(self, "power_budget", _per_user("power_budget", self.power_budget, n, float))
        set_(self, "deadline", _per_user("deadline", self.deadline, n, int))
        set_(self, "bad_channel_prob",
             _per_user("bad_channel_prob", self.bad_channel_prob, n, float))
        set_(self, "p_low", float(self.p_low))
        set_(self, "p_high", float(self.p_high))
        set_(self, "penalty_weight", float(self.penalty_weight))

        if not 0 < self.p_low < self.p_high:
            raise ConfigError("p_low", f"need 0 < p_low < p_high, got {self.p_low}, {self.p_high}")
        for i, pi in enumerate(self.arrival_prob):
            if not 0.0 <= pi <= 1.0:
                raise ConfigError("arrival_prob", f"user {i}: {pi} outside [0, 1]")
        for i, q in enumerate(self.bad_channel_prob):
            if not 0.0 <= q <= 1.0:
                raise ConfigError("bad_channel_prob", f"user {i}: {q} outside [0, 1]")
        for i, g in enumerate(self.power_budget):
            if not 0.0 <= g <= self.p_high:
                raise ConfigError("power_budget",
                                  f"user {i}: {g} outside [0, p_high={self.p_high}]")
        for i, m in enumerate(self.deadline):
            if m < 1:
                raise ConfigError("deadline", f"user {i}: {m} < 1")
        if not self.penalty_weight > 0:
            raise ConfigError("penalty_weight", f"must be > 0, got {self.penalty_weight}")
        if int(self.horizon) != self.horizon or self.horizon < 0:
            raise ConfigError("horizon", f"must be a non-negative integer, got {self.horizon}")
        set_(self, "horizon", int(self.horizon))
        if not -(2**63) <= int(self.seed) < 2**64:
            raise ConfigError("seed", "must fit in 64 bits")
        set_(self, "seed", int(self.seed))


@dataclass(frozen=True)
class PowerAllocation:
    powers: tuple

    def __post_init__(self):
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))

    @classmethod
    def idle(cls, n_users: int) -> "PowerAllocation":
        return cls((0.0,) * n_users)

    @classmethod
    def serve(cls, n_users: int, user: int, power: float) -> "PowerAllocation":
        powers = [0.0] * n_users
        powers[user] = power
        return cls(tuple(powers))

    @property
    def serving(self) -> tuple:
        """The indicator mu_i: 1 where power is nonzero."""
        return tuple(1 if p > 0 else 0 for p in self.powers)

    @property
    def transmitter(self) -> Optional[int]:
        """Index of the (first) transmitting user, or None when idle."""
        for i, p in enumerate(self.powers):
            if p > 0:
                return i
        return None

    def __len__(self):
        return len(self.powers)


@dataclass(frozen=True)
class SlotOutcome:
    served: bool
    dropped: bool
    arrival: bool
    surrogate_cost: float

    def __post_init__(self):
        if self.served and self.dropped:
            raise ValueError("a user cannot be both served and dropped in one slot")


def channel_power(channel: ChannelState, config: SystemConfig) -> float:
    """The nonzero power level a user may select in this channel state."""
    return config.p_high if channel is ChannelState.BAD else config.p_low


def selectable_powers(channel: ChannelState, config: SystemConfig) -> frozenset:
    return frozenset((0.0, channel_power(channel, config)))


def validate_allocation(alloc: PowerAllocation, channels: Sequence[ChannelState],
                        config: SystemConfig) -> Optional[str]:
    """Return None if ``alloc`` is feasible, else a description of the violation."""
    if len(alloc.powers) != config.n_users or len(channels) != config.n_users:
        raise ValueError("allocation and channel vector must have one entry per user")
    active = [i for i, p in enumerate(alloc.powers) if p != 0.0]
    if len(active) > 1:
        return f"multiple transmitters: users {active}"
    for i in active:
        if alloc.powers[i] not in selectable_powers(channels[i], config):
            return (f"wrong level for channel: user {i} has power {alloc.powers[i]} "
                    f"in state {channels[i].value}, allowed "
                    f"{sorted(selectable_powers(channels[i], config))}")
    return None


def surrogate_cost(m: int, head_d: Optional[int], served: bool) -> float:
    if served or head_d is None:
        return 0.0
    assert 1 <= head_d <= m, (head_d, m)
    return (m - (head_d - 1)) / m


def head_deadline(queue: UserQueue) -> Optional[int]:
    return queue[0] if queue else None


def advance_queue(queue: UserQueue, served: bool, arrival: bool, m: int) -> tuple:
    """Apply service, drop, deadline tick and arrival to one user's queue.

    Returns ``(new_queue, dropped)``.
    """
    if served:
        if not queue:
            raise ValueError("cannot serve an empty queue")
        queue = queue[1:]
    dropped = False
    if not served and queue and queue[0] == 1:
        queue = queue[1:]
        dropped = True
    queue = tuple(d - 1 for d in queue)
    if arrival:
        queue = queue + (m,)
    return queue, dropped
