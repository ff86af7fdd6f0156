"""Command-line entry point: ``dpasim run|preset|verify|version``.

Exit codes: 0 success, 1 invalid spec, 2 check failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys

from . import __version__, engine
from .engine import InvariantViolation
from .experiment import (
    EmissionCheckError,
    SpecError,
    load_spec,
    mean_by,
    preset_spec,
    run_experiment,
)
from .model import ConfigError
from .scenarios import replay_table1, table1_rows, table1_summary
from .verify import FAULTS, run_checks

EXIT_OK, EXIT_SPEC, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3


def _write_dicts(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def cmd_run(args):
    spec = load_spec(args.spec)
    rows = run_experiment(spec, out_dir=args.out, workers=args.workers, timing=not args.no_timing)
    print(f"{len(rows)} rows -> {os.path.join(args.out or spec.output or '.', 'results.csv')}"
          if (args.out or spec.output) else f"{len(rows)} rows (no output directory given)")
    return EXIT_OK


def cmd_preset(args):
    if args.name == "table1":
        results = replay_table1()
        os.makedirs(args.out, exist_ok=True)
        _write_dicts(os.path.join(args.out, "table1.csv"), table1_rows(results))
        summary = table1_summary(results)
        _write_dicts(os.path.join(args.out, "table1_summary.csv"), summary)
        for s in summary:
            print(f"{s['policy']}: drops={s['drops']} avg_power={s['avg_power']:.4f} "
                  f"per_transmission={s['avg_power_per_transmission']:.4f}")
        return EXIT_OK
    spec = preset_spec(args.name, horizon=args.slots, seeds=args.seeds)
    rows = run_experiment(spec, out_dir=args.out, workers=args.workers, timing=not args.no_timing)
    keys = ("policy", "V", "arrival_prob", "power_budget", "user")
    power = mean_by(rows, keys, "avg_power")
    drops = mean_by(rows, keys, "drop_rate")
    print("policy V lambda gamma user  mean_p_bar  mean_drop_rate")
    for k in power:
        print(f"{k[0]} {k[1]:g} {k[2]:g} {k[3]:g} {k[4]}  {power[k]:.5f}  {drops[k]:.5f}")
    return EXIT_OK


def cmd_verify(args):
    results = run_checks(n_views=args.views, max_users=args.max_users, slots=args.slots,
                         fault=args.inject_fault)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_version(args):
    print(f"dpasim {__version__} backend={engine.BACKEND} rng={engine.RNG_VERSION}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="dpasim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment spec file")
    p.add_argument("spec", help="TOML spec file")
    p.add_argument("--out", help="output directory (overrides the spec's output key)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="write wall_ms as 0")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("preset", help="reproduce a built-in study")
    p.add_argument("name", choices=["fig1", "fig45", "table1"])
    p.add_argument("--out", default="out")
    p.add_argument("--slots", type=int, default=100_000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("verify", help="oracle equivalence and invariant checks")
    p.add_argument("--views", type=int, default=10_000)
    p.add_argument("--max-users", type=int, default=4, choices=[1, 2, 3, 4])
    p.add_argument("--slots", type=int, default=10_000)
    p.add_argument("--inject-fault", choices=sorted(FAULTS), default=None,
                   help="negative control: verify must fail")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("version")
    p.set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ConfigError) as exc:
        print(f"invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except (InvariantViolation, EmissionCheckError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
