"""The single-user three-slot example contrasting a cautious and a bold policy.

One user, P_low=1, P_high=2, budget 1.5 and deadline 2. A packet with one
slot left is waiting at slot 1, a second packet arrives during slot 1, and
the channel reads Bad, Good, Good. ``omega_1`` never exceeds the budget in
any slot and loses a packet; ``omega_2`` spends 2 in the Bad slot and
delivers both.
"""
from __future__ import annotations

from .engine import ForcedTraces, RunResult, run
from .model import SystemConfig
from .policies import FixedTrace

TABLE1_CONFIG = SystemConfig(1, arrival_prob=0.0, power_budget=1.5, deadline=2,
                             p_low=1.0, p_high=2.0, horizon=3)
TABLE1_TRACES = ForcedTraces(channels=[("B",), ("G",), ("G",)],
                             arrivals=[(True,), (False,), (False,)],
                             initial_queues=[(1,)])
TABLE1_POLICIES = {
    "omega_1": [(0.0,), (1.0,), (0.0,)],
    "omega_2": [(2.0,), (0.0,), (1.0,)],
}
# head deadline per slot; None is an empty queue
TABLE1_HEAD_DEADLINES = {
    "omega_1": (1, 2, None),
    "omega_2": (1, 2, 1),
}
TABLE1_DROPS = {"omega_1": 1, "omega_2": 0}


def replay_table1() -> dict:
    return {name: run(TABLE1_CONFIG, FixedTrace(trace), TABLE1_TRACES, stride=1)
            for name, trace in TABLE1_POLICIES.items()}


def table1_rows(results: dict) -> list:
    """Per-slot rows: policy, t, channel, d, p, served, dropped."""
    rows = []
    for name, res in results.items():
        for rec in res.records():
            rows.append({
                "policy": name,
                "t": rec.t,
                "channel": rec.channels[0].value,
                "d": "empty" if rec.head_deadline[0] is None else rec.head_deadline[0],
                "p": rec.allocation.powers[0],
                "served": int(rec.outcomes[0].served),
                "dropped": int(rec.outcomes[0].dropped),
            })
    return rows


def table1_summary(results: dict) -> list:
    return [{
        "policy": name,
        "drops": int(res.dropped[0]),
        "avg_power": float(res.avg_power[0]),
        "avg_power_per_transmission": float(res.per_transmission_power[0]),
    } for name, res in results.items()]
