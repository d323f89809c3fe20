"""Debris sensing, maneuver planning and maneuver commits on a zone chain.

Motion is straight-line in a shared local frame; positions are referenced to
the planning epoch and maneuvers are impulsive velocity changes at that epoch.
The planner is a simple stand-in: push each threatened satellite away from
the predicted miss vector until the closest approach clears the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .common import KinematicState, NodeId
from .ledger import Block, InvalidBlock, RejectReason, verify_block
from .tokens import (
    AssetKind,
    ManeuverToken,
    OrbitalAssetToken,
    decode_token,
    token_transaction,
)
from .zones import NotMember, VirtualZone

BASE_DELTA_KMS = 0.01
MAX_DOUBLINGS = 4
DEDUP_WINDOW = 10


class Unavoidable(Exception):
    pass


@dataclass(frozen=True)
class DebrisObject:
    debris_id: str
    state: KinematicState
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"debris radius must be > 0, got {self.radius}")

    def token(self, owner: NodeId = 0) -> OrbitalAssetToken:
        return OrbitalAssetToken(
            AssetKind.DEBRIS,
            self.debris_id,
            owner,
            self.state.position,
            self.state.velocity,
            self.radius,
        )

    @classmethod
    def from_token(cls, token: OrbitalAssetToken) -> "DebrisObject":
        return cls(token.asset_id, token.state, token.radius)


def closest_approach(sat: KinematicState, debris: KinematicState) -> tuple[float, float]:
    """Time (>= 0) and distance of closest approach under straight-line motion."""
    r = np.subtract(debris.position, sat.position)
    v = np.subtract(debris.velocity, sat.velocity)
    vv = float(v @ v)
    t = 0.0 if vv == 0.0 else max(0.0, -float(r @ v) / vv)
    return t, float(np.linalg.norm(r + v * t))


def _dodge_direction(sat: KinematicState, debris: KinematicState) -> np.ndarray:
    """Unit vector along which the debris should drift relative to the satellite."""
    r = np.subtract(debris.position, sat.position)
    v = np.subtract(debris.velocity, sat.velocity)
    t, _ = closest_approach(sat, debris)
    miss = r + v * t
    vv = float(v @ v)
    for candidate in (miss, np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])):
        perp = candidate - (float(candidate @ v) / vv) * v if vv else candidate
        n = float(np.linalg.norm(perp))
        if n > 1e-12:
            return perp / n
    raise AssertionError("unreachable: z and x axes cannot both be parallel to v")


@dataclass(frozen=True)
class ManeuverPlan:
    deltas: tuple[tuple[NodeId, tuple[float, float, float]], ...]
    threshold_km: float
    tick: int

    def delta_for(self, sat: NodeId) -> tuple[float, float, float]:
        return dict(self.deltas)[sat]

    @property
    def is_null(self) -> bool:
        return all(dv == (0.0, 0.0, 0.0) for _, dv in self.deltas)


def plan_maneuvers(
    debris: DebrisObject,
    states: Mapping[NodeId, KinematicState],
    threshold_km: float,
    tick: int = 0,
    base_delta: float = BASE_DELTA_KMS,
    max_doublings: int = MAX_DOUBLINGS,
) -> ManeuverPlan:
    """Velocity change per member so every predicted miss distance >= threshold.

    Threatened satellites get a cross-track kick of ``base_delta`` km/s, doubled
    up to ``max_doublings`` times; the rest get a zero delta.
    """
    deltas = []
    for sat_id in sorted(states):
        state = states[sat_id]
        _, miss = closest_approach(state, debris.state)
        if miss >= threshold_km:
            deltas.append((sat_id, (0.0, 0.0, 0.0)))
            continue
        away = -_dodge_direction(state, debris.state)
        for k in range(max_doublings + 1):
            dv = tuple(float(x) for x in away * (base_delta * 2**k))
            if closest_approach(state.with_velocity_delta(dv), debris.state)[1] >= threshold_km:
                deltas.append((sat_id, dv))
                break
        else:
            raise Unavoidable(
                f"satellite {sat_id}: miss distance stays below {threshold_km} km "
                f"after {max_doublings} doublings of {base_delta} km/s"
            )
    return ManeuverPlan(tuple(deltas), float(threshold_km), tick)


def maneuver_token(zone: VirtualZone, plan: ManeuverPlan) -> ManeuverToken:
    return ManeuverToken(zone.zone_id, plan.tick, plan.threshold_km, plan.deltas)


def commit_plan(zone: VirtualZone, plan: ManeuverPlan, tick: int | None = None) -> Block:
    """Mine the plan into the zone chain; states are untouched until delivery."""
    missing = set(zone.members) - {s for s, _ in plan.deltas}
    if missing:
        raise ValueError(f"plan does not cover members {sorted(missing)}")
    return zone._commit(maneuver_token(zone, plan), plan.tick if tick is None else tick)


def apply_maneuver_block(
    zone: VirtualZone,
    block: Block,
    sat: NodeId,
    state: KinematicState,
) -> KinematicState:
    """A member checks a delivered maneuver block and applies its own delta."""
    if not 0 < block.index < len(zone.chain):
        raise InvalidBlock(RejectReason.UNKNOWN, f"block {block.index} not on zone chain")
    parent = zone.chain.blocks[block.index - 1]
    committed = {tx.tx_id for b in zone.chain.blocks[: block.index] for tx in b.transactions}
    verify_block(block, parent, zone.chain.difficulty, committed)
    if block.bhc != zone.chain.blocks[block.index].bhc:
        raise InvalidBlock(RejectReason.UNKNOWN, f"block {block.index} differs from the zone chain")
    for tx in block.transactions:
        token = decode_token(tx.payload)
        if isinstance(token, ManeuverToken) and token.zone_id == zone.zone_id:
            for sat_id, dv in token.deltas:
                if sat_id == sat:
                    return state.with_velocity_delta(dv)
    return state


def commit_and_apply(
    zone: VirtualZone,
    plan: ManeuverPlan,
    states: Mapping[NodeId, KinematicState],
    tick: int | None = None,
) -> tuple[Block, dict[NodeId, KinematicState]]:
    """Commit ``plan`` and return the block with every member's updated state."""
    block = commit_plan(zone, plan, tick)
    updated = {
        sat: apply_maneuver_block(zone, block, sat, state)
        for sat, state in states.items()
    }
    return block, updated


@dataclass
class DebrisDesk:
    """Zone-master side of debris handling: report intake, planning, commit."""

    zone: VirtualZone
    threshold_km: float = 1.0
    base_delta: float = BASE_DELTA_KMS
    window: int = DEDUP_WINDOW
    last_seen: dict[str, int] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def accept(self, debris_id: str, tick: int) -> bool:
        """False if the same debris was already handled within the window."""
        last = self.last_seen.get(debris_id)
        if last is not None and tick - last < self.window:
            return False
        self.last_seen[debris_id] = tick
        return True


def report_debris(world, sensor: NodeId, debris: DebrisObject, zone: VirtualZone):
    """Send a sensed-debris transaction from a member satellite to the zone master."""
    if sensor not in zone.members:
        raise NotMember(f"sensor {sensor} is not in zone {zone.zone_id}")
    tx = token_transaction(debris.token(owner=sensor), sensor, world.now)
    world.emit(sensor, "DEBRIS_SENSED", zone=zone.zone_id, debris=debris.debris_id)
    return world.send(sensor, zone.master, "DEBRIS_REPORT", (zone.zone_id, tx))


def install(world, desks: Mapping[str, DebrisDesk]) -> None:
    """Register the master and member message handlers on ``world``."""

    def on_report(world, node, msg):
        zone_id, tx = msg.body
        desk = desks[zone_id]
        debris = DebrisObject.from_token(decode_token(tx.payload))
        if not desk.accept(debris.debris_id, world.now):
            world.emit(node.id, "DEBRIS_DUPLICATE", zone=zone_id, debris=debris.debris_id,
                       sensor=msg.src)
            return
        zone = desk.zone
        states = {sat: world.node(sat).state for sat in sorted(zone.members)}
        try:
            plan = plan_maneuvers(debris, states, desk.threshold_km, world.now, desk.base_delta)
        except Unavoidable as exc:
            desk.failures.append(str(exc))
            world.emit(node.id, "DEBRIS_UNAVOIDABLE", zone=zone_id, debris=debris.debris_id)
            return
        block = commit_plan(zone, plan, world.now)
        moved = sum(1 for _, dv in plan.deltas if dv != (0.0, 0.0, 0.0))
        world.emit(node.id, "MANEUVER_COMMITTED", zone=zone_id, debris=debris.debris_id,
                   index=block.index, bhc=block.bhc, moved=moved)
        for sat in sorted(zone.members):
            world.send(node.id, sat, "MANEUVER_BLOCK", (zone_id, block))

    def on_maneuver(world, node, msg):
        zone_id, block = msg.body
        zone = desks[zone_id].zone
        try:
            node.state = apply_maneuver_block(zone, block, node.id, node.state)
        except InvalidBlock as exc:
            world.emit(node.id, "MANEUVER_REJECTED", zone=zone_id, reason=exc.reason.name)
            return
        world.emit(node.id, "MANEUVER_APPLIED", zone=zone_id, index=block.index,
                   vel=",".join(repr(v) for v in node.state.velocity))

    world.handlers["DEBRIS_REPORT"] = on_report
    world.handlers["MANEUVER_BLOCK"] = on_maneuver
