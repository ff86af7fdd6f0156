"""Seeded slot loop.

Slot timeline: observe channels -> policy decides -> service -> drop check ->
deadline tick -> arrival admission -> virtual-queue and metric updates.

Random draws come from ``numpy.random.Generator(PCG64(seed))``. Each slot
consumes ``2 * n_users`` uniforms in a fixed order: one per user for the
channel (Bad iff ``u < bad_channel_prob``), then one per user for the
arrival (arrival iff ``u < arrival_prob``). Forced traces consume none.

Two interchangeable backends execute the loop: the compiled ``_kernel``
(DPA and EDF only) and a pure-Python path built on :func:`step`. Their
results are bit-identical; the compiled one is chosen at import when it is
importable, unless ``DPASIM_BACKEND=python`` is set.
"""
from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    ChannelState,
    PowerAllocation,
    SlotOutcome,
    SystemConfig,
    advance_queue,
    head_deadline,
    surrogate_cost,
)
from .policies import Policy, SlotView, VirtualQueues, check_decision, virtual_queue_update

try:
    if os.environ.get("DPASIM_BACKEND", "").lower() == "python":
        raise ImportError("compiled backend disabled by DPASIM_BACKEND")
    from . import _kernel
except ImportError:
    _kernel = None

BACKEND = "compiled" if _kernel is not None else "python"
RNG_VERSION = f"numpy-{np.__version__}/PCG64/draw-order-v1"
BUDGET_TOL = 1e-9
MAX_RECORDS = 10_000
_RNG_CHUNK = 1 << 16


class InvariantViolation(RuntimeError):
    """An exact property of the dynamics failed during a run."""


def compiled_available() -> bool:
    return _kernel is not None


def default_stride(horizon: int) -> int:
    return max(1, horizon // MAX_RECORDS)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def sample_channels(rng: np.random.Generator, config: SystemConfig) -> tuple:
    u = rng.random(config.n_users)
    return tuple(ChannelState.BAD if u[i] < q else ChannelState.GOOD
                 for i, q in enumerate(config.bad_channel_prob))


def sample_arrivals(rng: np.random.Generator, config: SystemConfig) -> tuple:
    u = rng.random(config.n_users)
    return tuple(bool(u[i] < pi) for i, pi in enumerate(config.arrival_prob))


def _draw_block(rng, config, n_slots):
    """Channel and arrival indicators for ``n_slots`` slots, same stream as
    calling sample_channels then sample_arrivals once per slot."""
    n = config.n_users
    bad = np.empty((n_slots, n), dtype=np.uint8)
    arrive = np.empty((n_slots, n), dtype=np.uint8)
    q = np.asarray(config.bad_channel_prob)
    pi = np.asarray(config.arrival_prob)
    for lo in range(0, n_slots, _RNG_CHUNK):
        hi = min(n_slots, lo + _RNG_CHUNK)
        u = rng.random((hi - lo, 2 * n))
        bad[lo:hi] = u[:, :n] < q
        arrive[lo:hi] = u[:, n:] < pi
    return bad, arrive


@dataclass
class ForcedTraces:
    """Scripted channels and arrivals, plus optional initial queue contents
    (per-user remaining deadlines, head first) present before slot 1."""

    channels: Sequence
    arrivals: Sequence
    initial_queues: Optional[Sequence] = None

    def arrays(self, config: SystemConfig):
        T, n = config.horizon, config.n_users
        if len(self.channels) < T or len(self.arrivals) < T:
            raise ValueError(f"forced traces shorter than horizon {T}: "
                             f"{len(self.channels)} channel, {len(self.arrivals)} arrival slots")
        bad = np.zeros((T, n), dtype=np.uint8)
        arrive = np.zeros((T, n), dtype=np.uint8)
        for t in range(T):
            ch, ar = self.channels[t], self.arrivals[t]
            if len(ch) != n or len(ar) != n:
                raise ValueError(f"slot {t + 1}: trace entries must have {n} users")
            bad[t] = [ChannelState.parse(c) is ChannelState.BAD for c in ch]
            arrive[t] = [bool(a) for a in ar]
        return bad, arrive

    def queues(self, config: SystemConfig) -> list:
        if self.initial_queues is None:
            return [()] * config.n_users
        qs = [tuple(int(d) for d in q) for q in self.initial_queues]
        if len(qs) != config.n_users:
            raise ValueError("initial_queues needs one entry per user")
        for i, q in enumerate(qs):
            m = config.deadline[i]
            if any(not 1 <= d <= m for d in q) or any(a >= b for a, b in zip(q, q[1:])):
                raise ValueError(f"user {i}: initial queue {q} must strictly increase within [1, {m}]")
        return qs


@dataclass
class SimState:
    config: SystemConfig
    t: int = 0
    queues: list = None
    X: VirtualQueues = None
    arrivals: list = None
    served: list = None
    dropped: list = None
    transmissions: list = None
    power_sum: list = None
    f_sum: list = None
    max_budget_excess: float = -math.inf
    conservation_failures: int = 0
    rng: Optional[np.random.Generator] = None

    @classmethod
    def initial(cls, config: SystemConfig, rng=None, initial_queues=None) -> "SimState":
        n = config.n_users
        queues = [tuple(q) for q in initial_queues] if initial_queues else [()] * n
        return cls(config, 0, queues, VirtualQueues.zeros(n), [len(q) for q in queues],
                   [0] * n, [0] * n, [0] * n, [0.0] * n, [0.0] * n, rng=rng)

    def view(self, channels) -> SlotView:
        return SlotView(self.t + 1, tuple(channels),
                        tuple(head_deadline(q) for q in self.queues),
                        tuple(len(q) for q in self.queues), self.config)


@dataclass(frozen=True)
class SlotRecord:
    t: int
    channels: tuple
    head_deadline: tuple
    queue_length: tuple
    allocation: PowerAllocation
    outcomes: tuple
    x: tuple
    d_bar: tuple
    p_bar: tuple
    f_bar: tuple
    objective: Optional[float] = None


def step(state: SimState, policy: Policy, channels=None, arrivals=None):
    """Advance ``state`` (in place) by one slot; returns ``(state, record)``.

    Channels and arrivals are sampled from ``state.rng`` unless given.
    """
    cfg = state.config
    if channels is None:
        channels = sample_channels(state.rng, cfg)
    if arrivals is None:
        arrivals = sample_arrivals(state.rng, cfg)
    view = state.view(channels)
    decision = policy.decide(view, state.X)
    check_decision(decision, channels, cfg)
    alloc = decision.allocation

    t = state.t + 1
    outcomes = []
    for i in range(cfg.n_users):
        q = state.queues[i]
        served = alloc.powers[i] > 0 and len(q) > 0
        cost = surrogate_cost(cfg.deadline[i], view.head_deadline[i], served)
        state.queues[i], dropped = advance_queue(q, served, bool(arrivals[i]), cfg.deadline[i])
        outcomes.append(SlotOutcome(served, dropped, bool(arrivals[i]), cost))
    state.X = virtual_queue_update(state.X, alloc, cfg)
    state.t = t

    for i, o in enumerate(outcomes):
        p = alloc.powers[i]
        state.arrivals[i] += o.arrival
        state.served[i] += o.served
        state.dropped[i] += o.dropped
        if p > 0.0:
            state.transmissions[i] += 1
        state.power_sum[i] += p
        state.f_sum[i] += o.surrogate_cost
        excess = (state.power_sum[i] / t - cfg.power_budget[i]) - state.X.backlog[i] / t
        if excess > state.max_budget_excess:
            state.max_budget_excess = excess
        if state.arrivals[i] != state.served[i] + state.dropped[i] + len(state.queues[i]):
            state.conservation_failures += 1

    record = SlotRecord(
        t, view.channels, view.head_deadline, view.queue_length, alloc, tuple(outcomes),
        state.X.backlog,
        tuple(d / t for d in state.dropped),
        tuple(s / t for s in state.power_sum),
        tuple(s / t for s in state.f_sum),
        decision.objective_value,
    )
    return state, record


@dataclass
class RunResult:
    config: SystemConfig
    policy: str
    backend: str
    rng: str
    stride: int
    # final per-user counters
    arrivals: np.ndarray
    served: np.ndarray
    dropped: np.ndarray
    backlog: np.ndarray
    transmissions: np.ndarray
    power_sum: np.ndarray
    f_sum: np.ndarray
    x_final: np.ndarray
    max_budget_excess: float
    # decimated per-slot series, one row per logged slot
    t: np.ndarray
    bad: np.ndarray
    head: np.ndarray
    queue_length: np.ndarray
    power: np.ndarray
    served_slot: np.ndarray
    dropped_slot: np.ndarray
    arrived_slot: np.ndarray
    cost: np.ndarray
    x: np.ndarray
    psum: np.ndarray
    dsum: np.ndarray
    fsum: np.ndarray
    wall_seconds: float = 0.0

    @property
    def slots(self) -> int:
        return self.config.horizon

    def _per_slot(self, total):
        T = self.slots
        return total / T if T else np.zeros_like(total, dtype=float)

    @property
    def drop_rate(self) -> np.ndarray:
        return self._per_slot(self.dropped)

    @property
    def avg_power(self) -> np.ndarray:
        return self._per_slot(self.power_sum)

    @property
    def avg_cost(self) -> np.ndarray:
        return self._per_slot(self.f_sum)

    @property
    def x_over_t(self) -> np.ndarray:
        return self._per_slot(self.x_final)

    @property
    def per_transmission_power(self) -> np.ndarray:
        """Average power over the slots in which each user transmitted."""
        out = np.zeros(self.config.n_users)
        nz = self.transmissions > 0
        out[nz] = self.power_sum[nz] / self.transmissions[nz]
        return out

    @property
    def p_bar(self) -> np.ndarray:
        return self.psum / self.t[:, None]

    @property
    def d_bar(self) -> np.ndarray:
        return self.dsum / self.t[:, None]

    @property
    def f_bar(self) -> np.ndarray:
        return self.fsum / self.t[:, None]

    def records(self) -> list:
        n = self.config.n_users
        p_bar, d_bar, f_bar = self.p_bar, self.d_bar, self.f_bar
        out = []
        for r, t in enumerate(self.t.tolist()):
            out.append(SlotRecord(
                t,
                tuple(ChannelState.BAD if b else ChannelState.GOOD for b in self.bad[r]),
                tuple(int(h) if h else None for h in self.head[r]),
                tuple(int(q) for q in self.queue_length[r]),
                PowerAllocation(self.power[r]),
                tuple(SlotOutcome(bool(self.served_slot[r, i]), bool(self.dropped_slot[r, i]),
                                  bool(self.arrived_slot[r, i]), float(self.cost[r, i]))
                      for i in range(n)),
                tuple(self.x[r].tolist()),
                tuple(d_bar[r].tolist()), tuple(p_bar[r].tolist()), tuple(f_bar[r].tolist()),
            ))
        return out

    _HASHED = ("arrivals", "served", "dropped", "backlog", "transmissions", "power_sum",
               "f_sum", "x_final", "t", "bad", "head", "queue_length", "power", "served_slot",
               "dropped_slot", "arrived_slot", "cost", "x", "psum", "dsum", "fsum")

    def fingerprint(self) -> str:
        """Digest of every simulated quantity (not timing or backend)."""
        h = hashlib.sha256()
        for name in self._HASHED:
            a = np.ascontiguousarray(getattr(self, name))
            h.update(name.encode())
            h.update(str(a.dtype).encode())
            h.update(a.tobytes())
        h.update(np.float64(self.max_budget_excess).tobytes())
        return h.hexdigest()


class _Buffers:
    def __init__(self, n_records, n):
        S = n_records
        self.rec_t = np.zeros(S, dtype=np.int64)
        self.rec_bad = np.zeros((S, n), dtype=np.uint8)
        self.rec_head = np.zeros((S, n), dtype=np.int64)
        self.rec_qlen = np.zeros((S, n), dtype=np.int64)
        self.rec_power = np.zeros((S, n))
        self.rec_served = np.zeros((S, n), dtype=np.uint8)
        self.rec_dropped = np.zeros((S, n), dtype=np.uint8)
        self.rec_arrived = np.zeros((S, n), dtype=np.uint8)
        self.rec_cost = np.zeros((S, n))
        self.rec_x = np.zeros((S, n))
        self.rec_psum = np.zeros((S, n))
        self.rec_dsum = np.zeros((S, n), dtype=np.int64)
        self.rec_fsum = np.zeros((S, n))
        self.counts = np.zeros((n, 5), dtype=np.int64)
        self.sums = np.zeros((n, 3))
        self.diag = np.array([-np.inf, 0.0])

    def outputs(self):
        return (self.rec_t, self.rec_bad, self.rec_head, self.rec_qlen, self.rec_power,
                self.rec_served, self.rec_dropped, self.rec_arrived, self.rec_cost, self.rec_x,
                self.rec_psum, self.rec_dsum, self.rec_fsum, self.counts, self.sums, self.diag)


def _simulate_python(config, policy, bad, arrive, initial_queues, stride, buf):
    state = SimState.initial(config, initial_queues=initial_queues)
    T = config.horizon
    r = 0
    good_bad = (ChannelState.GOOD, ChannelState.BAD)
    for t in range(1, T + 1):
        channels = tuple(good_bad[b] for b in bad[t - 1].tolist())
        state, rec = step(state, policy, channels, arrive[t - 1].tolist())
        if t % stride == 0 or t == T:
            buf.rec_t[r] = t
            buf.rec_bad[r] = bad[t - 1]
            buf.rec_head[r] = [d or 0 for d in rec.head_deadline]
            buf.rec_qlen[r] = rec.queue_length
            buf.rec_power[r] = rec.allocation.powers
            buf.rec_served[r] = [o.served for o in rec.outcomes]
            buf.rec_dropped[r] = [o.dropped for o in rec.outcomes]
            buf.rec_arrived[r] = [o.arrival for o in rec.outcomes]
            buf.rec_cost[r] = [o.surrogate_cost for o in rec.outcomes]
            buf.rec_x[r] = rec.x
            buf.rec_psum[r] = state.power_sum
            buf.rec_dsum[r] = state.dropped
            buf.rec_fsum[r] = state.f_sum
            r += 1
    for i in range(config.n_users):
        buf.counts[i] = (state.arrivals[i], state.served[i], state.dropped[i],
                         len(state.queues[i]), state.transmissions[i])
        buf.sums[i] = (state.power_sum[i], state.f_sum[i], state.X.backlog[i])
    buf.diag[:] = (state.max_budget_excess, state.conservation_failures)


def run(config: SystemConfig, policy: Policy, traces: Optional[ForcedTraces] = None, *,
        stride: Optional[int] = None, backend: Optional[str] = None,
        check: bool = True) -> RunResult:
    """Simulate ``config.horizon`` slots from the empty state.

    ``backend`` is ``"compiled"``, ``"python"`` or None (compiled whenever
    the kernel is built and implements ``policy``). With ``check`` set, a
    failed conservation identity or budget inequality raises
    :class:`InvariantViolation`.
    """
    T, n = config.horizon, config.n_users
    stride = default_stride(T) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if backend not in (None, "compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    use_kernel = policy.kernel_code is not None and backend != "python" and _kernel is not None
    if backend == "compiled" and not use_kernel:
        raise RuntimeError("compiled backend unavailable for this policy/build")

    start = time.perf_counter()
    if traces is not None:
        bad, arrive = traces.arrays(config)
        initial_queues = traces.queues(config)
        rng_tag = "forced"
    else:
        bad, arrive = _draw_block(make_rng(config.seed), config, T)
        initial_queues = [()] * n
        rng_tag = RNG_VERSION

    n_records = T // stride + (1 if T % stride else 0)
    buf = _Buffers(n_records, n)
    if use_kernel:
        width = max([1] + [len(q) for q in initial_queues])
        init = np.zeros((n, width), dtype=np.int64)
        for i, q in enumerate(initial_queues):
            init[i, :len(q)] = q
        _kernel.simulate(policy.kernel_code, config.penalty_weight, config.p_low, config.p_high,
                         np.asarray(config.deadline, dtype=np.int64),
                         np.asarray(config.power_budget, dtype=np.float64),
                         bad, arrive, init, np.array([len(q) for q in initial_queues], dtype=np.int64),
                         stride, *buf.outputs())
    else:
        _simulate_python(config, policy, bad, arrive, initial_queues, stride, buf)
    wall = time.perf_counter() - start

    result = RunResult(
        config=config, policy=policy.name, backend="compiled" if use_kernel else "python",
        rng=rng_tag, stride=stride,
        arrivals=buf.counts[:, 0].copy(), served=buf.counts[:, 1].copy(),
        dropped=buf.counts[:, 2].copy(), backlog=buf.counts[:, 3].copy(),
        transmissions=buf.counts[:, 4].copy(),
        power_sum=buf.sums[:, 0].copy(), f_sum=buf.sums[:, 1].copy(), x_final=buf.sums[:, 2].copy(),
        max_budget_excess=float(buf.diag[0]),
        t=buf.rec_t, bad=buf.rec_bad, head=buf.rec_head, queue_length=buf.rec_qlen,
        power=buf.rec_power, served_slot=buf.rec_served, dropped_slot=buf.rec_dropped,
        arrived_slot=buf.rec_arrived, cost=buf.rec_cost, x=buf.rec_x,
        psum=buf.rec_psum, dsum=buf.rec_dsum, fsum=buf.rec_fsum,
        wall_seconds=wall,
    )
    if check:
        if buf.diag[1]:
            raise InvariantViolation(f"conservation identity failed {int(buf.diag[1])} times")
        if result.max_budget_excess > BUDGET_TOL:
            raise InvariantViolation(
                f"budget inequality p_bar - gamma <= X/t violated by {result.max_budget_excess:.3e}")
    return result
