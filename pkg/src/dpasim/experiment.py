"""Experiment specs, parameter sweeps and CSV output.

Spec files are TOML restricted to flat keys::

    policy = "dpa"                 # or a list: ["dpa", "edf"]
    n_users = 2
    arrival_prob = 0.4             # scalar for all users, or one value per user
    power_budget = [0.6, 0.7]
    deadline = 5
    bad_channel_prob = 0.6
    p_low = 1
    p_high = 2
    V = 60                         # alias: penalty_weight
    horizon = 100000
    seeds = 10                     # count (0..9) or an explicit list
    stride = 10                    # optional time-series decimation
    timeseries = true              # write per-slot series for the first seed
    trace = [[2, 0], [0, 1]]       # fixed policy only: one power vector per slot
    sweep.V = [1, 5, 10, 20, 40, 60]
    sweep.arrival_prob = [0.1, 0.2]
    sweep.power_budget = [0.7, 0.8]

Sweep values apply to every user. Rows come out policy-major, then sweep
points (axes in the order they appear in the file), then seeds ascending,
then users.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import engine
from .engine import run
from .model import ConfigError, SystemConfig
from .policies import make_policy

SCHEMA_VERSION = 1
RESULT_COLUMNS = ("policy", "V", "arrival_prob", "power_budget", "seed", "user", "drop_rate",
                  "avg_power", "avg_f", "x_over_t", "slots", "wall_ms")
TIMESERIES_COLUMNS = ("t", "user", "p_bar", "d_bar", "x")
SWEEP_AXES = ("V", "arrival_prob", "power_budget")
POLICY_NAMES = ("dpa", "edf", "fixed")
_CONFIG_KEYS = {"n_users", "arrival_prob", "power_budget", "deadline", "bad_channel_prob",
                "p_low", "p_high", "V", "penalty_weight", "horizon"}
_OTHER_KEYS = {"policy", "seeds", "stride", "timeseries", "trace", "output", "sweep"}
EMISSION_TOL = 1e-9


class SpecError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmissionCheckError(RuntimeError):
    """A result row breaks p_bar <= gamma + X(T)/T."""


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig
    policies: tuple = ("dpa",)
    sweep: dict = field(default_factory=dict)
    seeds: tuple = tuple(range(10))
    output: Optional[str] = None
    stride: Optional[int] = None
    timeseries: bool = False
    trace: Optional[tuple] = None

    def points(self) -> list:
        """Sweep points as dicts, first declared axis varying slowest."""
        axes = list(self.sweep)
        return [dict(zip(axes, combo)) for combo in itertools.product(*self.sweep.values())]

    def config_for(self, point: dict, seed: int) -> SystemConfig:
        changes = {"seed": seed}
        for axis, value in point.items():
            changes["penalty_weight" if axis == "V" else axis] = value
        return replace(self.base, **changes)


@dataclass(frozen=True)
class ResultRow:
    policy: str
    V: float
    arrival_prob: float
    power_budget: float
    seed: int
    user: int
    drop_rate: float
    avg_power: float
    avg_f: float
    x_over_t: float
    slots: int
    wall_ms: float


def _as_seeds(value) -> tuple:
    if isinstance(value, bool):
        raise SpecError("seeds", "expected a count or a list of integers")
    if isinstance(value, int):
        seeds = tuple(range(value))
    elif isinstance(value, list) and all(isinstance(s, int) and not isinstance(s, bool)
                                         for s in value):
        seeds = tuple(sorted(set(value)))
    else:
        raise SpecError("seeds", "expected a count or a list of integers")
    if not seeds:
        raise SpecError("seeds", "seed list is empty")
    return seeds


def spec_from_mapping(data: dict) -> ExperimentSpec:
    unknown = set(data) - _CONFIG_KEYS - _OTHER_KEYS
    if unknown:
        raise SpecError(sorted(unknown)[0], "unknown key")
    if "n_users" not in data:
        raise SpecError("n_users", "required")
    if "V" in data and "penalty_weight" in data:
        raise SpecError("V", "give either V or penalty_weight, not both")

    cfg_kwargs = {k: v for k, v in data.items() if k in _CONFIG_KEYS}
    if "V" in cfg_kwargs:
        cfg_kwargs["penalty_weight"] = cfg_kwargs.pop("V")
    try:
        base = SystemConfig(**cfg_kwargs)
    except ConfigError as exc:
        raise SpecError(exc.field, str(exc).split(": ", 1)[1]) from None
    except TypeError as exc:
        raise SpecError("n_users", str(exc)) from None

    policies = data.get("policy", "dpa")
    policies = tuple(policies) if isinstance(policies, list) else (policies,)
    if not policies:
        raise SpecError("policy", "empty policy list")
    for p in policies:
        if p not in POLICY_NAMES:
            raise SpecError("policy", f"unknown policy {p!r}; expected one of {POLICY_NAMES}")

    trace = data.get("trace")
    if "fixed" in policies:
        if trace is None:
            raise SpecError("trace", "policy 'fixed' needs a trace")
        if len(trace) < base.horizon:
            raise SpecError("trace", f"trace has {len(trace)} slots, horizon is {base.horizon}")
        if any(len(row) != base.n_users for row in trace):
            raise SpecError("trace", f"every trace entry needs {base.n_users} powers")
        trace = tuple(tuple(float(p) for p in row) for row in trace)

    sweep = {}
    raw_sweep = data.get("sweep", {})
    if not isinstance(raw_sweep, dict):
        raise SpecError("sweep", "use dotted keys, e.g. sweep.V = [1, 5]")
    for axis, values in raw_sweep.items():
        if axis not in SWEEP_AXES:
            raise SpecError(f"sweep.{axis}", f"sweepable axes are {SWEEP_AXES}")
        if not isinstance(values, list):
            values = [values]
        if not values:
            raise SpecError(f"sweep.{axis}", "sweep axis is empty")
        sweep[axis] = tuple(float(v) for v in values)

    stride = data.get("stride")
    if stride is not None and (not isinstance(stride, int) or stride < 1):
        raise SpecError("stride", "must be a positive integer")

    spec = ExperimentSpec(base=base, policies=policies, sweep=sweep,
                          seeds=_as_seeds(data.get("seeds", 10)),
                          output=data.get("output"), stride=stride,
                          timeseries=bool(data.get("timeseries", False)), trace=trace)
    # every sweep point must be a valid config
    for point in spec.points():
        try:
            spec.config_for(point, 0)
        except ConfigError as exc:
            axis = "V" if exc.field == "penalty_weight" else exc.field
            raise SpecError(f"sweep.{axis}" if axis in point else exc.field,
                            str(exc).split(": ", 1)[1]) from None
    return spec


def parse_spec(text: str) -> ExperimentSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise SpecError("<syntax>", str(exc)) from None
    return spec_from_mapping(data)


def load_spec(path) -> ExperimentSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_spec(fh.read())


def _run_job(job):
    spec, policy_name, point, seed, want_series = job
    cfg = spec.config_for(point, seed)
    policy = make_policy(policy_name, spec.trace)
    res = run(cfg, policy, stride=spec.stride)
    wall_ms = res.wall_seconds * 1e3
    rows = []
    for i in range(cfg.n_users):
        rows.append(ResultRow(
            policy=policy_name, V=cfg.penalty_weight, arrival_prob=cfg.arrival_prob[i],
            power_budget=cfg.power_budget[i], seed=seed, user=i + 1,
            drop_rate=float(res.drop_rate[i]), avg_power=float(res.avg_power[i]),
            avg_f=float(res.avg_cost[i]), x_over_t=float(res.x_over_t[i]),
            slots=cfg.horizon, wall_ms=wall_ms))
    series = None
    if want_series:
        series = (res.t, res.p_bar, res.d_bar, res.x)
    return rows, series


def _check_emission(row: ResultRow):
    if row.avg_power > row.power_budget + row.x_over_t + EMISSION_TOL:
        raise EmissionCheckError(
            f"{row.policy} seed={row.seed} user={row.user}: p_bar={row.avg_power!r} exceeds "
            f"gamma + X/T = {row.power_budget + row.x_over_t!r}")


def _series_name(policy, point, seed):
    parts = [policy] + [f"{k}={v:g}" for k, v in point.items()] + [f"seed={seed}"]
    return "ts_" + "_".join(parts) + ".csv"


def run_experiment(spec: ExperimentSpec, out_dir: Optional[str] = None, workers: int = 1,
                   timing: bool = True) -> list:
    """Simulate every (policy, sweep point, seed); returns rows in canonical order.

    With ``out_dir`` (or ``spec.output``) writes ``results.csv``,
    ``manifest.json`` and, if requested, time-series files.
    """
    jobs, keys = [], []
    for policy_name in spec.policies:
        for point in spec.points():
            for k, seed in enumerate(spec.seeds):
                jobs.append((spec, policy_name, point, seed, spec.timeseries and k == 0))
                keys.append((policy_name, point, seed))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_job, jobs))
    else:
        outputs = [_run_job(j) for j in jobs]

    rows = []
    for job_rows, _ in outputs:
        for row in job_rows:
            _check_emission(row)
            rows.append(row if timing else replace(row, wall_ms=0.0))

    out_dir = out_dir or spec.output
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_rows(os.path.join(out_dir, "results.csv"), rows)
        for (policy_name, point, seed), (_, series) in zip(keys, outputs):
            if series is not None:
                write_timeseries(os.path.join(out_dir, _series_name(policy_name, point, seed)),
                                 *series)
        with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest(spec), fh, indent=2, sort_keys=True)
    return rows


def manifest(spec: ExperimentSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "columns": list(RESULT_COLUMNS),
        "timeseries_columns": list(TIMESERIES_COLUMNS),
        "rng": engine.RNG_VERSION,
        "backend": engine.BACKEND,
        "policies": list(spec.policies),
        "sweep": {k: list(v) for k, v in spec.sweep.items()},
        "seeds": list(spec.seeds),
        "base": {k: (list(v) if isinstance(v, tuple) else v)
                 for k, v in asdict(spec.base).items()},
    }


def write_rows(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v
                        for v in (getattr(r, c) for c in RESULT_COLUMNS)])


def write_timeseries(path, t, p_bar, d_bar, x):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(TIMESERIES_COLUMNS)
        for r in range(len(t)):
            for i in range(p_bar.shape[1]):
                w.writerow([int(t[r]), i + 1, repr(float(p_bar[r, i])),
                            repr(float(d_bar[r, i])), repr(float(x[r, i]))])


def read_rows(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# --- presets ------------------------------------------------------------------

def preset_spec(name: str, horizon: int = 100_000, seeds: int = 10) -> ExperimentSpec:
    if name == "fig1":
        data = {"n_users": 2, "power_budget": 0.6, "arrival_prob": 0.4, "policy": "dpa",
                "horizon": horizon, "seeds": seeds, "timeseries": True,
                "sweep": {"V": [1, 5, 10, 20, 40, 60]}}
    elif name == "fig45":
        data = {"n_users": 2, "V": 60, "policy": ["dpa", "edf"], "horizon": horizon,
                "seeds": seeds,
                "sweep": {"power_budget": [0.7, 0.8],
                          "arrival_prob": [round(0.1 * k, 1) for k in range(1, 10)]}}
    else:
        raise SpecError("preset", f"unknown preset {name!r}")
    return spec_from_mapping(data)


def mean_by(rows, keys, value) -> dict:
    """Mean of ``value`` over rows grouped by the tuple of ``keys``."""
    groups = {}
    for r in rows:
        groups.setdefault(tuple(getattr(r, k) for k in keys), []).append(getattr(r, value))
    return {k: float(np.mean(v)) for k, v in groups.items()}
