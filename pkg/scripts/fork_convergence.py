"""Competing miners under lossy links: convergence rate and ticks to quiescence."""

import argparse
import itertools

from orbitledger.ledger import fork_key
from orbitledger.sim import LinkModel, SimNode, World
from orbitledger.tokens import DecisionToken, token_transaction

CLASSES = {
    "ground": dict(kind="ground"),
    "LEO": dict(kind="satellite", orbit="LEO"),
    "MEO": dict(kind="satellite", orbit="MEO"),
    "GEO": dict(kind="satellite", orbit="GEO"),
}


def trial(a, b, drop, seed, difficulty):
    w = World(seed=seed, difficulty=difficulty, links=LinkModel(drop_probability=drop))
    w.attach_node(SimNode(1, full=True, miner=True, **CLASSES[a]))
    w.attach_node(SimNode(2, full=True, miner=True, **CLASSES[b]))
    w.attach_node(SimNode(3, full=True, **CLASSES["ground"]))
    for node, text in ((1, "A"), (2, "B")):
        w.node(node).chain.add_transaction(token_transaction(DecisionToken(text, str(seed)), node, 0, seed % 5))
        w.request_mining(w.node(node))
    w.run()
    best = min((n.chain for n in w.full_nodes()), key=fork_key)
    return w.replicas_identical(), w.now, len(best)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--drop", type=float, nargs="+", default=[0.0, 0.1, 0.3])
    ap.add_argument("--difficulty", type=int, default=2)
    args = ap.parse_args()

    print(f"{'miners':<12} {'drop':>5} {'converged':>10} {'mean_ticks':>10}")
    for a, b in itertools.combinations_with_replacement(CLASSES, 2):
        for drop in args.drop:
            results = [trial(a, b, drop, s, args.difficulty) for s in range(args.trials)]
            ok = sum(r[0] for r in results)
            ticks = sum(r[1] for r in results) / len(results)
            print(f"{a + '/' + b:<12} {drop:>5.2f} {ok:>4}/{args.trials:<5} {ticks:>10.1f}")


if __name__ == "__main__":
    main()
