"""Random single-debris conjunctions: how many doublings the planner needs.

Aims debris at a random zone member with a small offset and reports the
distribution of kick magnitudes plus the worst post-maneuver margin.
"""

import argparse
import collections
import math
import random

from orbitledger.common import KinematicState
from orbitledger.debris import BASE_DELTA_KMS, DebrisObject, Unavoidable, closest_approach, plan_maneuvers


def conjunction(rng, members, lead_km):
    states = {
        i: KinematicState([rng.uniform(-5, 5) for _ in range(3)], [rng.uniform(-0.5, 0.5) for _ in range(3)])
        for i in range(1, members + 1)
    }
    target = states[rng.randint(1, members)]
    u = [rng.gauss(0, 1) for _ in range(3)]
    n = math.sqrt(sum(x * x for x in u))
    u = [x / n for x in u]
    speed = rng.uniform(1, 5)
    t_hit = lead_km / speed
    aim = [p + v * t_hit + rng.uniform(-0.3, 0.3) for p, v in zip(target.position, target.velocity)]
    pos = [a + x * lead_km for a, x in zip(aim, u)]
    return DebrisObject("R", KinematicState(pos, [-x * speed for x in u]), 0.2), states


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--runs", type=int, default=1000)
    ap.add_argument("--threshold", type=float, default=1.0)
    ap.add_argument("--lead-km", type=float, nargs="+", default=[20, 50, 100, 400])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for lead in args.lead_km:
        rng = random.Random(args.seed)
        levels = collections.Counter()
        unavoidable = 0
        margin = math.inf
        for _ in range(args.runs):
            debris, states = conjunction(rng, rng.randint(1, 4), lead)
            try:
                plan = plan_maneuvers(debris, states, args.threshold)
            except Unavoidable:
                unavoidable += 1
                continue
            for sat, state in states.items():
                dv = plan.delta_for(sat)
                mag = math.hypot(*dv)
                levels["none" if mag == 0 else f"x{round(mag / BASE_DELTA_KMS)}"] += 1
                d = closest_approach(state.with_velocity_delta(dv), debris.state)[1]
                margin = min(margin, d - args.threshold)
        dist = " ".join(f"{k}={v}" for k, v in sorted(levels.items(), key=lambda kv: (kv[0] != "none", len(kv[0]), kv[0])))
        print(f"lead={lead:>6.0f}km unavoidable={unavoidable:>4}/{args.runs} min_margin={margin:.4f}km {dist}")


if __name__ == "__main__":
    main()
