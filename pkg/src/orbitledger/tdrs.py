"""Image-query workflow through a relay satellite and its follower swarm.

request + session tokens -> uplink token -> follower assignment -> feedback token.
Follower reallocation is greedy: queries by descending fee, each to the follower
that would finish it earliest (ties to the smaller id). Captures are never
preempted.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .common import NodeId
from .ledger import Block, Chain, Transaction
from .tokens import (
    DownlinkFeedbackToken,
    InvalidFields,
    TransactionSessionToken,
    UplinkToken,
    UserRequestToken,
    decode_token,
    token_transaction,
)


class TdrsError(Exception):
    pass


class InvalidQuery(TdrsError):
    pass


class NoFollowers(TdrsError):
    pass


class NotCompleted(TdrsError):
    pass


@dataclass(frozen=True)
class ImageQuery:
    query_id: int
    requester: NodeId
    locations: tuple[tuple[float, float], ...]
    timeframes: tuple[tuple[int, int], ...]
    fee: int
    submitted: int = 0

    def request_token(self) -> UserRequestToken:
        try:
            return UserRequestToken(self.query_id, self.requester, self.locations, self.timeframes)
        except InvalidFields as exc:
            raise InvalidQuery(str(exc)) from None


@dataclass
class Follower:
    id: NodeId
    lat: float
    lon: float
    rate: float  # degrees of great-circle travel per tick
    busy_until: int = 0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"follower {self.id} rate must be > 0")


def angular_distance(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle central angle in degrees between two (lat, lon) points."""
    lat1, lon1, lat2, lon2 = map(math.radians, (*a, *b))
    h = (
        math.sin((lat2 - lat1) / 2) ** 2
        + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    )
    return math.degrees(2 * math.asin(min(1.0, math.sqrt(h))))


def completion_tick(follower: Follower, query: ImageQuery, now: int) -> int:
    start = max(follower.busy_until, now)
    travel = angular_distance((follower.lat, follower.lon), query.locations[0]) / follower.rate
    return start + math.ceil(travel)


@dataclass(frozen=True)
class Assignment:
    followers: dict[int, NodeId]
    completion: dict[int, int]
    start: dict[int, int]


def reallocate_followers(
    queries: Sequence[ImageQuery], followers: Sequence[Follower], now: int = 0
) -> Assignment:
    """Greedy min-completion assignment; updates follower positions and loads."""
    if not followers:
        raise NoFollowers("no follower satellites attached")
    assigned, done, start = {}, {}, {}
    by_id = sorted(followers, key=lambda f: f.id)
    for q in sorted(queries, key=lambda q: (-q.fee, q.query_id)):
        best = min(by_id, key=lambda f: (completion_tick(f, q, now), f.id))
        start[q.query_id] = max(best.busy_until, now)
        done[q.query_id] = completion_tick(best, q, now)
        assigned[q.query_id] = best.id
        best.busy_until = done[q.query_id]
        best.lat, best.lon = q.locations[0]
    return Assignment(assigned, done, start)


def encode_query_ids(ids: Iterable[int]) -> bytes:
    ids = list(ids)
    return struct.pack(f">I{len(ids)}Q", len(ids), *ids)


def decode_query_ids(raw: bytes) -> list[int]:
    (n,) = struct.unpack_from(">I", raw)
    if len(raw) != 4 + 8 * n:
        raise ValueError("uplink command length does not match its count")
    return list(struct.unpack_from(f">{n}Q", raw, 4))


@dataclass
class TdrsWorkflow:
    """Drives the query lifecycle on ``chain``; ``on_commit`` sees each new block."""

    chain: Chain
    ground_station: NodeId
    tdrs: NodeId
    followers: list[Follower]
    capacity: int = 10
    on_commit: Callable[[Block], None] | None = None
    queries: dict[int, ImageQuery] = field(default_factory=dict)
    pending_uplink: list[int] = field(default_factory=list)
    assignment: Assignment = field(default_factory=lambda: Assignment({}, {}, {}))
    feedback: dict[int, Transaction] = field(default_factory=dict)
    token_blocks: dict[bytes, int] = field(default_factory=dict)

    def flush(self, tick: int) -> list[Block]:
        blocks = []
        while self.chain.mempool:
            block, _ = self.chain.mine(self.capacity, timestamp=tick)
            blocks.append(block)
            for tx in block.transactions:
                self.token_blocks[tx.tx_id] = block.index
            if self.on_commit:
                self.on_commit(block)
        return blocks

    def submit_image_query(self, query: ImageQuery, tick: int, commit: bool = True) -> tuple[Transaction, Transaction]:
        """Queue the request and session tokens; commits them unless ``commit`` is False."""
        if query.query_id in self.queries:
            raise InvalidQuery(f"query id {query.query_id} already submitted")
        request = token_transaction(query.request_token(), query.requester, tick, query.fee)
        session = token_transaction(
            TransactionSessionToken(
                f"query:{query.query_id}",
                f"user {query.requester} -> ground {self.ground_station} -> tdrs {self.tdrs}",
            ),
            self.ground_station,
            tick,
            query.fee,
        )
        self.chain.add_transaction(request)
        self.chain.add_transaction(session)
        self.queries[query.query_id] = query
        self.pending_uplink.append(query.query_id)
        if commit:
            self.flush(tick)
        return request, session

    def uplink_to_tdrs(self, tick: int) -> Transaction | None:
        """Batch every pending query into one uplink token; no-op when none pend."""
        if not self.pending_uplink:
            return None
        batch = sorted(self.pending_uplink)
        self.pending_uplink.clear()
        token = UplinkToken(self.ground_station, self.tdrs, encode_query_ids(batch))
        tx = token_transaction(token, self.ground_station, tick)
        self.chain.add_transaction(tx)
        self.flush(tick)
        return tx

    def reallocate(self, query_ids: Iterable[int], tick: int) -> Assignment:
        queries = [self.queries[q] for q in query_ids]
        assignment = reallocate_followers(queries, self.followers, tick)
        self.assignment.followers.update(assignment.followers)
        self.assignment.completion.update(assignment.completion)
        self.assignment.start.update(assignment.start)
        return assignment

    def downlink_feedback(self, query_id: int, tick: int) -> Transaction:
        if query_id not in self.assignment.completion:
            raise NotCompleted(f"query {query_id} was never assigned")
        done = self.assignment.completion[query_id]
        if tick < done:
            raise NotCompleted(f"query {query_id} completes at {done}, now {tick}")
        if query_id in self.feedback:
            return self.feedback[query_id]
        follower = self.assignment.followers[query_id]
        image = hashlib.sha256(f"image:{query_id}:{follower}:{done}".encode()).digest()
        token = DownlinkFeedbackToken(
            query_id=query_id,
            image_digest=image,
            downlink_tick=tick,
            start_tick=self.assignment.start[query_id],
            completion_tick=done,
            feedback=f"captured by {follower}",
        )
        tx = token_transaction(token, self.tdrs, tick, self.queries[query_id].fee)
        self.chain.add_transaction(tx)
        self.flush(tick)
        self.feedback[query_id] = tx
        return tx


def query_trail(chain: Chain | Sequence[Block]) -> dict[int, dict[str, list[int]]]:
    """Chain positions of every token touching each query id.

    Positions are (block index, tx position) flattened into one ordinal so that
    same-block order is respected.
    """
    blocks = chain.blocks if isinstance(chain, Chain) else chain
    trail: dict[int, dict[str, list[int]]] = {}
    ordinal = 0
    for block in blocks:
        for tx in block.transactions:
            ordinal += 1
            token = decode_token(tx.payload)
            if isinstance(token, UserRequestToken):
                trail.setdefault(token.query_id, {}).setdefault("request", []).append(ordinal)
            elif isinstance(token, UplinkToken):
                for q in decode_query_ids(token.command):
                    trail.setdefault(q, {}).setdefault("uplink", []).append(ordinal)
            elif isinstance(token, DownlinkFeedbackToken):
                trail.setdefault(token.query_id, {}).setdefault("feedback", []).append(ordinal)
    return trail


def causality_violations(chain: Chain | Sequence[Block]) -> list[str]:
    problems = []
    for q, marks in sorted(query_trail(chain).items()):
        if "feedback" not in marks:
            continue
        if len(marks["feedback"]) != 1:
            problems.append(f"query {q}: {len(marks['feedback'])} feedback tokens")
        req, up = marks.get("request"), marks.get("uplink")
        if not req or not up:
            problems.append(f"query {q}: feedback without request/uplink")
        elif not req[0] < up[0] < marks["feedback"][0]:
            problems.append(f"query {q}: order request<uplink<feedback violated")
    return problems
