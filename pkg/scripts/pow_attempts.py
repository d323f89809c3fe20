"""Mean nonce attempts per difficulty against the geometric expectation 16**d."""

import argparse
import math
import statistics
import time

from orbitledger.cli import mine_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-difficulty", type=int, default=3)
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'d':>2} {'expected':>9} {'mean':>10} {'se':>8} {'z':>6} {'sec':>6}")
    for d in range(args.max_difficulty + 1):
        t0 = time.perf_counter()
        attempts = mine_bench(d, args.trials, args.seed)
        elapsed = time.perf_counter() - t0
        expected = 16**d
        mean = statistics.fmean(attempts)
        se = math.sqrt(expected * (expected - 1)) / math.sqrt(args.trials) if d else 0.0
        z = (mean - expected) / se if se else 0.0
        print(f"{d:>2} {expected:>9} {mean:>10.1f} {se:>8.1f} {z:>6.2f} {elapsed:>6.2f}")


if __name__ == "__main__":
    main()
