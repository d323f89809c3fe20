"""Command-line entry point.

Exit codes: 0 success, 1 invariant violation (or invalid chain), 2 usage/config error.
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import statistics
import sys
from dataclasses import fields, is_dataclass
from pathlib import Path

from .ledger import (
    BlockDecodeError,
    MalformedChainFile,
    audit_export,
    import_chain,
    mine_block,
    mine_genesis,
)
from .scenario import ScenarioError, Simulation, load_scenario
from .tokens import DecisionToken, MalformedBytes, decode_token, token_transaction
from .zones import zone_status

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("orbitledger")


class UsageError(Exception):
    pass


def _simulate(args) -> Simulation:
    try:
        scn = load_scenario(args.scenario)
        sim = Simulation(scn, seed=args.seed)
    except OSError as exc:
        raise UsageError(f"{args.scenario}: {exc.strerror}") from None
    except ScenarioError as exc:
        raise UsageError(f"{args.scenario}: {exc}") from None
    sim.run()
    return sim


def cmd_run(args) -> int:
    sim = _simulate(args)
    for path in sim.write_artifacts(args.out):
        log.info("wrote %s", path)
    for v in sim.violations:
        print(f"violation: {v}", file=sys.stderr)
    print(f"events={len(sim.world.log)} violations={len(sim.violations)} out={args.out}")
    return EXIT_VIOLATION if sim.violations else EXIT_OK


def cmd_zone_status(args) -> int:
    sim = _simulate(args)
    zones = sim.zones
    if args.zone is not None:
        if args.zone not in zones:
            raise UsageError(f"no zone {args.zone!r} in scenario")
        zones = {args.zone: zones[args.zone]}
    print("\n\n".join(zone_status(z).format() for _, z in sorted(zones.items())))
    return EXIT_VIOLATION if sim.violations else EXIT_OK


def cmd_lifecycle_status(args) -> int:
    sim = _simulate(args)
    if sim.mission is None:
        raise UsageError("scenario has no [mission] section")
    print(sim.mission.status().format())
    return EXIT_VIOLATION if sim.violations else EXIT_OK


def _read_chain_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None


def cmd_validate(args) -> int:
    text = _read_chain_text(args.chain)
    try:
        report = audit_export(text, args.difficulty)
    except MalformedChainFile as exc:
        raise UsageError(f"{args.chain}: {exc}") from None
    print(report)
    return EXIT_OK if report.valid else EXIT_VIOLATION


def _describe(value) -> str:
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if is_dataclass(value):
        inner = ", ".join(f"{f.name}={_describe(getattr(value, f.name))}" for f in fields(value))
        return f"{type(value).__name__}({inner})"
    if isinstance(value, tuple):
        return "(" + ", ".join(_describe(v) for v in value) + ")"
    if hasattr(value, "value") and not isinstance(value, (int, float)):
        return str(value.value)
    return str(value)


def _dump_tx(tx, indent="  ") -> list[str]:
    lines = [f"{indent}tx {tx.tx_id.hex()} issuer={tx.issuer} fee={tx.fee} ts={tx.timestamp}"]
    try:
        token = decode_token(tx.payload)
    except MalformedBytes as exc:
        lines.append(f"{indent}  undecodable payload: {exc}")
    else:
        lines.append(f"{indent}  token {token.token_id.hex()} {_describe(token)}")
    return lines


def cmd_inspect(args) -> int:
    text = _read_chain_text(args.chain)
    try:
        entries = import_chain(text)
    except (MalformedChainFile, BlockDecodeError) as exc:
        raise UsageError(f"{args.chain}: {exc}") from None
    blocks = [e.block for e in entries]
    if args.token is not None:
        try:
            wanted = bytes.fromhex(args.token)
        except ValueError:
            raise UsageError(f"--token is not hex: {args.token!r}") from None
        for b in blocks:
            for tx in b.transactions:
                try:
                    tid = decode_token(tx.payload).token_id
                except MalformedBytes:
                    continue
                if tid == wanted:
                    print(f"block {b.index}")
                    print("\n".join(_dump_tx(tx)))
                    return EXIT_OK
        print("NotFound")
        return EXIT_VIOLATION
    selected = blocks if args.block is None else [b for b in blocks if b.index == args.block]
    if not selected:
        print("NotFound")
        return EXIT_VIOLATION
    for b in selected:
        h = b.header
        print(f"block {h.index} bhc={b.bhc.hex()} parent={h.parent_hash.hex()} "
              f"ts={h.timestamp} difficulty={h.difficulty} nonce={h.nonce}")
        for tx in b.transactions:
            print("\n".join(_dump_tx(tx)))
    return EXIT_OK


def mine_bench(difficulty: int, trials: int, seed: int = 0) -> list[int]:
    """Attempt counts for ``trials`` single-transaction blocks on a fixed genesis."""
    rng = random.Random(seed)
    genesis = mine_genesis(difficulty=0)
    attempts = []
    for i in range(trials):
        token = DecisionToken(f"bench-{i}-{rng.getrandbits(64):016x}", "mine-bench")
        tx = token_transaction(token, issuer=1, timestamp=i + 1)
        _, n = mine_block([tx], genesis, difficulty, capacity=1, timestamp=i + 1)
        attempts.append(n)
    return attempts


def cmd_mine_bench(args) -> int:
    if not 0 <= args.difficulty <= 16:
        raise UsageError("--difficulty must be in 0..16")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    attempts = mine_bench(args.difficulty, args.trials, args.seed)
    print(f"difficulty={args.difficulty} trials={args.trials} min={min(attempts)} "
          f"mean={statistics.fmean(attempts):.2f} max={max(attempts)}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="orbitledger", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_args(sp):
        sp.add_argument("--scenario", required=True)
        sp.add_argument("--seed", type=int, default=None)

    sp = sub.add_parser("run", help="run a scenario and write artifacts")
    scenario_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate", help="audit an exported chain")
    sp.add_argument("--chain", required=True)
    sp.add_argument("--difficulty", type=int, required=True)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("inspect", help="decode blocks or a token from an exported chain")
    sp.add_argument("--chain", required=True)
    group = sp.add_mutually_exclusive_group()
    group.add_argument("--block", type=int)
    group.add_argument("--token")
    sp.set_defaults(func=cmd_inspect)

    sp = sub.add_parser("mine-bench", help="nonce attempt statistics")
    sp.add_argument("--difficulty", type=int, required=True)
    sp.add_argument("--trials", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_mine_bench)

    sp = sub.add_parser("zone-status", help="run a scenario and print zone reports")
    scenario_args(sp)
    sp.add_argument("--zone")
    sp.set_defaults(func=cmd_zone_status)

    sp = sub.add_parser("lifecycle-status", help="run a scenario and print the mission report")
    scenario_args(sp)
    sp.set_defaults(func=cmd_lifecycle_status)
    return p


def main(argv=None) -> int:
    level = os.environ.get("ORBITLEDGER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
