"""On-demand correctness checks behind ``dpasim verify``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import BUDGET_TOL, run
from .model import SystemConfig
from .oracle import bruteforce_slot_min, feasible_set, offline_optimal_drops, random_tiny_instance, random_view
from .policies import DPA, EDF, PolicyDecision, dpa_candidates, dpa_decide, dpa_objective
from .scenarios import TABLE1_DROPS, TABLE1_HEAD_DEADLINES, replay_table1


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<22} {self.detail} ({self.seconds:.2f}s)"


def _dpa_decide_last_tie(view, X):
    """DPA with the tie rule flipped (last minimiser wins); a negative control."""
    best, best_obj = None, float("inf")
    for cand in dpa_candidates(view):
        obj = dpa_objective(cand, view, X)
        if best_obj >= obj:
            best, best_obj = cand, obj
    return PolicyDecision(best, best_obj)


FAULTS = {"tie-rule": _dpa_decide_last_tie}


def check_oracle_equivalence(n_views=10_000, max_users=4, seed=0, decide=dpa_decide):
    rng = np.random.default_rng(seed)
    value_mismatch = alloc_mismatch = unsound = 0
    for k in range(n_views):
        n = int(rng.integers(1, max_users + 1))
        view, X = random_view(rng, n, penalty_weight=(1.0, 60.0)[k % 2])
        dec = decide(view, X)
        alloc, val = bruteforce_slot_min(view, X)
        if dec.objective_value != val:
            value_mismatch += 1
        if dec.allocation != alloc:
            alloc_mismatch += 1
        idle_val = dpa_objective(feasible_set(view)[0], view, X)
        for i, cand in enumerate(feasible_set(view)[1:]):
            if view.queue_length[i] == 0 and dpa_objective(cand, view, X) < idle_val:
                unsound += 1
    ok = value_mismatch == alloc_mismatch == unsound == 0
    return ok, (f"{n_views} views: {value_mismatch} objective mismatches, "
                f"{alloc_mismatch} allocation mismatches, {unsound} empty-queue candidates beat idle")


def check_run_invariants(slots=10_000, seeds=(0, 1, 2)):
    """Conservation and the budget inequality recomputed from per-slot records."""
    problems = []
    for policy in (DPA(), EDF()):
        for seed in seeds:
            cfg = SystemConfig(3, arrival_prob=(0.3, 0.5, 0.7), power_budget=(0.4, 0.6, 0.9),
                               deadline=(2, 5, 7), horizon=slots, seed=seed)
            res = run(cfg, policy, stride=1, check=False)
            problems += _record_problems(res, f"{policy.name}/seed={seed}")
    return not problems, "; ".join(problems[:3]) or f"{2 * len(seeds)} runs x {slots} slots clean"


def _record_problems(res, label):
    problems = []
    cum_arr = np.cumsum(res.arrived_slot, axis=0)
    cum_srv = np.cumsum(res.served_slot, axis=0)
    cum_drp = np.cumsum(res.dropped_slot, axis=0)
    backlog_after = res.queue_length - res.served_slot - res.dropped_slot + res.arrived_slot
    if not np.array_equal(cum_arr, cum_srv + cum_drp + backlog_after):
        problems.append(f"{label}: conservation")
    t = res.t[:, None].astype(float)
    gamma = np.asarray(res.config.power_budget)
    if np.any(res.psum / t - gamma > res.x / t + BUDGET_TOL):
        problems.append(f"{label}: budget inequality")
    if res.max_budget_excess > BUDGET_TOL:
        problems.append(f"{label}: engine budget check")
    return problems


def check_backends(slots=5_000):
    if not engine.compiled_available():
        return True, "compiled kernel not built; python backend only"
    cfg = SystemConfig(4, arrival_prob=(0.2, 0.4, 0.6, 0.8), power_budget=(0.3, 0.6, 0.9, 1.2),
                       deadline=(1, 3, 5, 7), penalty_weight=17.5, horizon=slots, seed=7)
    bad = [p.name for p in (DPA(), EDF())
           if run(cfg, p, stride=1, backend="compiled").fingerprint()
           != run(cfg, p, stride=1, backend="python").fingerprint()]
    return not bad, f"differs for {bad}" if bad else "compiled and python runs bit-identical"


def check_table1():
    res = replay_table1()
    problems = []
    for name, r in res.items():
        heads = tuple(int(h) if h else None for h in r.head[:, 0])
        if heads != TABLE1_HEAD_DEADLINES[name]:
            problems.append(f"{name} d(t)={heads}")
        if int(r.dropped[0]) != TABLE1_DROPS[name]:
            problems.append(f"{name} drops={int(r.dropped[0])}")
    return not problems, "; ".join(problems) or "d(t) rows and drop counts reproduced"


def check_offline_bound(n_instances=200, seed=0):
    rng = np.random.default_rng(seed)
    below = 0
    for _ in range(n_instances):
        inst = random_tiny_instance(rng)
        dpa_drops = int(run(inst.config(), DPA(), inst.traces()).dropped.sum())
        relaxed, _ = offline_optimal_drops(inst, enforce_budget=False)
        below += dpa_drops < relaxed
    return below == 0, f"{n_instances} tiny instances, {below} below the unconstrained optimum"


def run_checks(n_views=10_000, max_users=4, slots=10_000, fault=None) -> list:
    decide = FAULTS[fault] if fault else dpa_decide
    checks = [
        ("oracle-equivalence", lambda: check_oracle_equivalence(n_views, max_users, decide=decide)),
        ("run-invariants", lambda: check_run_invariants(slots)),
        ("backend-equivalence", check_backends),
        ("table1-replay", check_table1),
        ("offline-bound", check_offline_bound),
    ]
    out = []
    for name, fn in checks:
        start = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep checking
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, ok, detail, time.perf_counter() - start))
    return out
