"""Time the compiled kernel against the pure-Python loop.

    python benchmarks/bench_backends.py [--slots 20000] [--users 2 8] [--repeat 3]

Each case runs both backends on the same seeded config, checks that the
result fingerprints agree, and prints slots/second and the speedup.
"""
import argparse
import sys
import time

from dpasim import DPA, EDF, SystemConfig, run
from dpasim.engine import compiled_available


def best_time(cfg, policy, backend, repeat):
    best, res = float("inf"), None
    for _ in range(repeat):
        start = time.perf_counter()
        res = run(cfg, policy, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=20_000)
    ap.add_argument("--users", type=int, nargs="+", default=[2, 8])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not compiled_available():
        print("compiled kernel not importable; build with `pip install -e . --no-build-isolation`")
        return 1

    print(f"{'policy':<6} {'N':>3} {'python slots/s':>15} {'compiled slots/s':>17} "
          f"{'speedup':>8}  identical")
    mismatches = 0
    for n in args.users:
        cfg = SystemConfig(n, horizon=args.slots, seed=1)
        for policy in (DPA(), EDF()):
            tp, rp = best_time(cfg, policy, "python", args.repeat)
            tc, rc = best_time(cfg, policy, "compiled", args.repeat)
            same = rp.fingerprint() == rc.fingerprint()
            mismatches += not same
            print(f"{policy.name:<6} {n:>3} {args.slots / tp:>15,.0f} {args.slots / tc:>17,.0f} "
                  f"{tp / tc:>7.1f}x  {same}")
    return 2 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
