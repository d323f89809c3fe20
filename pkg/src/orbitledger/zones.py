"""Virtual zones: per-swarm ledgers, nonce-challenge MFA, and unanimous join votes.

Each zone keeps its own chain. The genesis block holds a single
ZoneRegistrationToken listing (satellite, virtual id) pairs. Every later block
is mined by the zone master with nonces strictly above all earlier ones, so a
tip nonce is never reissued and a replayed MFA response works at most once.

The tip nonce is readable by anyone holding the zone chain. Membership is the
factor that actually keeps outsiders out; the nonce only proves freshness.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .common import NodeId, Orbit
from .ledger import Block, Chain, mine_genesis
from .tokens import (
    TransactionSessionToken,
    ZoneMembershipToken,
    ZoneRegistrationToken,
    decode_token,
    token_transaction,
)

ZONE_DIFFICULTY = 1


class ZoneError(Exception):
    pass


class OrbitMismatch(ZoneError):
    pass


class EmptySwarm(ZoneError):
    pass


class AlreadyMember(ZoneError):
    pass


class NotMember(ZoneError):
    pass


class AuthFailure(str, enum.Enum):
    WRONG_NONCE = "wrong nonce"
    NOT_MEMBER = "not a member"


class AuthRejected(ZoneError):
    def __init__(self, reason: AuthFailure):
        self.reason = reason
        super().__init__(reason.value)


@dataclass
class VirtualZone:
    zone_id: str
    orbit: Orbit
    master: NodeId
    members: dict[NodeId, int]
    chain: Chain
    roster: frozenset[NodeId] = frozenset()
    votes: dict[NodeId, bool] = field(default_factory=dict)
    intruders: list[NodeId] = field(default_factory=list)
    next_virtual_id: int = 1

    @property
    def height(self) -> int:
        return len(self.chain)

    @property
    def tip_nonce(self) -> int:
        return self.chain.tip.nonce

    def _commit(self, token, tick: int) -> Block:
        chain = self.chain
        tx = token_transaction(token, self.master, tick)
        if not chain.add_transaction(tx):
            # identical record at the same tick: already on the chain
            index, _ = chain.find_transaction(lambda t: t.tx_id == tx.tx_id)
            return chain.blocks[index]
        floor = max(b.nonce for b in chain.blocks) + 1
        block, _ = chain.mine(capacity=1, timestamp=tick, start_nonce=floor)
        return block


def _orbit_of(sat) -> Orbit:
    return Orbit(sat.orbit)


def create_zone(
    master: NodeId,
    satellites: Iterable,
    orbit: Orbit | str,
    zone_id: str,
    roster: Iterable[NodeId] = (),
    votes: Mapping[NodeId, bool] | None = None,
    tick: int = 0,
    difficulty: int = ZONE_DIFFICULTY,
) -> VirtualZone:
    """Register a swarm; satellites are objects with ``id`` and ``orbit``."""
    orbit = Orbit(orbit)
    sats = sorted(satellites, key=lambda s: s.id)
    if not sats:
        raise EmptySwarm(f"zone {zone_id} has no satellites")
    wrong = [s.id for s in sats if _orbit_of(s) is not orbit]
    if wrong:
        raise OrbitMismatch(f"satellites {wrong} are not in {orbit.value}")
    members = {s.id: vid for vid, s in enumerate(sats, 1)}
    if len(members) != len(sats):
        raise ZoneError("duplicate satellite ids")
    reg = ZoneRegistrationToken(zone_id, orbit, master, tuple(members.items()))
    genesis = mine_genesis([token_transaction(reg, master, tick)], difficulty, tick)
    return VirtualZone(
        zone_id=zone_id,
        orbit=orbit,
        master=master,
        members=members,
        chain=Chain(genesis, difficulty),
        roster=frozenset(roster),
        votes=dict(votes or {}),
        next_virtual_id=len(members) + 1,
    )


def registration(zone_or_genesis: VirtualZone | Block) -> ZoneRegistrationToken:
    genesis = (
        zone_or_genesis.chain.genesis
        if isinstance(zone_or_genesis, VirtualZone)
        else zone_or_genesis
    )
    (tx,) = genesis.transactions
    token = decode_token(tx.payload)
    if not isinstance(token, ZoneRegistrationToken):
        raise ZoneError("genesis does not hold a zone registration")
    return token


@dataclass(frozen=True)
class MfaChallenge:
    challenger: NodeId
    responder: NodeId
    expected_nonce: int
    issued: int


@dataclass(frozen=True)
class Session:
    initiator: NodeId
    peer: NodeId
    block: Block
    tick: int


def issue_challenge(zone: VirtualZone, challenger: NodeId, responder: NodeId, tick: int = 0) -> MfaChallenge:
    if challenger not in zone.members:
        raise NotMember(f"challenger {challenger} is not in zone {zone.zone_id}")
    return MfaChallenge(challenger, responder, zone.tip_nonce, tick)


def answer_challenge(zone: VirtualZone, challenge: MfaChallenge, response: int, tick: int = 0) -> Session:
    # Both factors are checked against the zone state at answer time.
    if challenge.expected_nonce != zone.tip_nonce or response != zone.tip_nonce:
        raise AuthRejected(AuthFailure.WRONG_NONCE)
    if challenge.responder not in zone.members:
        raise AuthRejected(AuthFailure.NOT_MEMBER)
    a, b = challenge.responder, challenge.challenger
    token = TransactionSessionToken(
        session_id=f"{zone.zone_id}:{a}->{b}@{tick}#{zone.height}",
        metadata=f"vid {zone.members[a]} -> vid {zone.members[b]}",
    )
    return Session(a, b, zone._commit(token, tick), tick)


def mfa_authenticate(a: NodeId, b: NodeId, zone: VirtualZone, response: int, tick: int = 0) -> Session:
    """``a`` asks ``b`` for a session; ``b`` challenges ``a`` for the tip nonce.

    On success a block recording the session is appended, which moves the tip
    nonce forward. Raises AuthRejected otherwise.
    """
    challenge = issue_challenge(zone, b, a, tick)
    return answer_challenge(zone, challenge, response, tick)


@dataclass(frozen=True)
class JoinOutcome:
    candidate: NodeId
    admitted: bool
    virtual_id: int | None
    votes: tuple[tuple[NodeId, bool], ...]
    block: Block


def member_vote(zone: VirtualZone, member: NodeId, candidate) -> bool:
    """One member's verdict under the zone rules, then any scripted override."""
    rules_ok = (
        _orbit_of(candidate) is zone.orbit
        and candidate.id in zone.roster
        and candidate.id not in zone.intruders
    )
    return rules_ok and zone.votes.get(member, True)


def request_join(zone: VirtualZone, candidate, tick: int = 0) -> JoinOutcome:
    """Admit ``candidate`` only if every current member approves."""
    if candidate.id in zone.members:
        raise AlreadyMember(f"{candidate.id} already in zone {zone.zone_id}")
    votes = tuple((m, member_vote(zone, m, candidate)) for m in sorted(zone.members))
    admitted = all(v for _, v in votes)
    if admitted:
        vid = zone.next_virtual_id
        zone.next_virtual_id += 1
        zone.members[candidate.id] = vid
    else:
        vid = 0
        if candidate.id not in zone.intruders:
            zone.intruders.append(candidate.id)
    token = ZoneMembershipToken(zone.zone_id, candidate.id, vid, admitted)
    block = zone._commit(token, tick)
    return JoinOutcome(candidate.id, admitted, vid if admitted else None, votes, block)


@dataclass(frozen=True)
class ZoneStatus:
    zone_id: str
    orbit: Orbit
    master: NodeId
    members: tuple[tuple[NodeId, int], ...]
    intruders: tuple[NodeId, ...]
    height: int
    tip_nonce: int

    def format(self) -> str:
        members = ",".join(f"{s}:{v}" for s, v in self.members) or "-"
        intruders = ",".join(map(str, self.intruders)) or "-"
        return "\n".join(
            [
                f"zone={self.zone_id}",
                f"orbit={self.orbit.value}",
                f"master={self.master}",
                f"members={members}",
                f"intruders={intruders}",
                f"height={self.height}",
                f"tip_nonce={self.tip_nonce}",
            ]
        )


def zone_status(zone: VirtualZone) -> ZoneStatus:
    return ZoneStatus(
        zone.zone_id,
        zone.orbit,
        zone.master,
        tuple(sorted(zone.members.items())),
        tuple(zone.intruders),
        zone.height,
        zone.tip_nonce,
    )
