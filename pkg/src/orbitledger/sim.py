"""Deterministic discrete-event simulation of ledger nodes in space and on the ground.

Event log records are single lines::

    t=<tick> node=<id> kind=<EVENT_NAME> <key>=<value> ...

Keys appear in the order each emitter passes them (fixed in code), bytes are
written as lowercase hex, so two runs with the same scenario and seed produce
byte-identical logs.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import logging
import random
from dataclasses import dataclass, field
from typing import Any, Callable

from .common import KinematicState, NodeId, Orbit
from .ledger import (
    Block,
    Chain,
    IncompatibleGenesis,
    InvalidBlock,
    Transaction,
    append_block,
    fork_key,
    mine_genesis,
    validate_chain,
)
from .tokens import MalformedBytes, decode_token

log = logging.getLogger(__name__)


class SimError(Exception):
    pass


class PastDue(SimError):
    pass


class DuplicateId(SimError):
    pass


class Rejected(SimError):
    pass


class NodeKind(str, enum.Enum):
    SATELLITE = "satellite"
    GROUND = "ground"
    USER = "user"
    TDRS = "tdrs"


@dataclass
class SimNode:
    id: NodeId
    kind: NodeKind
    orbit: Orbit | None = None
    state: KinematicState | None = None
    full: bool = False
    miner: bool = False
    zone: str | None = None
    chain: Chain | None = None
    inbox: list = field(default_factory=list)
    mine_pending: bool = False

    def __post_init__(self):
        self.kind = NodeKind(self.kind)
        if self.miner and not self.full:
            raise ValueError(f"node {self.id}: a miner must be a full node")
        if self.kind is NodeKind.SATELLITE and self.orbit is None:
            raise ValueError(f"satellite {self.id} needs an orbit class")
        if self.kind is NodeKind.TDRS and self.orbit is None:
            self.orbit = Orbit.GEO
        if self.orbit is not None:
            self.orbit = Orbit(self.orbit)

    @property
    def reader_only(self) -> bool:
        return not self.full

    @property
    def in_space(self) -> bool:
        return self.kind in (NodeKind.SATELLITE, NodeKind.TDRS)


@dataclass
class LinkModel:
    """Fixed per-link latencies in ticks, plus an optional drop probability."""

    ground_to_orbit: dict[str, int] = field(
        default_factory=lambda: {"LEO": 2, "MEO": 8, "GEO": 12}
    )
    same_zone: int = 1
    cross_zone: int = 4
    terrestrial: int = 1
    overrides: dict[frozenset, int] = field(default_factory=dict)
    drop_probability: float = 0.0
    max_attempts: int = 3

    def __post_init__(self):
        if not 0 <= self.drop_probability < 1:
            raise ValueError("drop probability must be in [0, 1)")
        values = [*self.ground_to_orbit.values(), self.same_zone, self.cross_zone,
                  self.terrestrial, *self.overrides.values()]
        if min(values) < 1:
            raise ValueError("latencies must be >= 1 tick")

    @staticmethod
    def link_class(node: SimNode) -> str:
        if node.kind is NodeKind.SATELLITE:
            return node.orbit.value
        return node.kind.name

    def latency(self, a: SimNode, b: SimNode) -> int:
        key = frozenset((self.link_class(a), self.link_class(b)))
        if key in self.overrides:
            return self.overrides[key]
        if not a.in_space and not b.in_space:
            return self.terrestrial
        if a.in_space and b.in_space:
            if a.zone is not None and a.zone == b.zone:
                return self.same_zone
            return self.cross_zone
        space = a if a.in_space else b
        return self.ground_to_orbit[space.orbit.value]


class EventKind(str, enum.Enum):
    DELIVER = "deliver"
    TIMER = "timer"
    DEBRIS_SPAWN = "debris_spawn"
    QUERY_ARRIVAL = "query_arrival"


@dataclass
class SimEvent:
    tick: int
    kind: EventKind
    node: NodeId
    data: Any = None


@dataclass(frozen=True)
class Message:
    msg_id: int
    kind: str
    src: NodeId
    dst: NodeId
    body: Any
    sent: int


class EventQueue:
    """Min-heap on (tick, insertion sequence)."""

    def __init__(self):
        self._heap: list[tuple[int, int, SimEvent]] = []
        self._seq = itertools.count()
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.tick < self.now:
            raise PastDue(f"event at tick {event.tick} scheduled at tick {self.now}")
        heapq.heappush(self._heap, (event.tick, next(self._seq), event))
        return event

    def peek_tick(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> SimEvent:
        tick, _, event = heapq.heappop(self._heap)
        self.now = tick
        return event


@dataclass(frozen=True)
class ChainQuery:
    index: int | None = None
    token_id: bytes | None = None

    def __post_init__(self):
        if (self.index is None) == (self.token_id is None):
            raise ValueError("query exactly one of index or token_id")

    def describe(self) -> str:
        return f"index:{self.index}" if self.index is not None else f"token:{self.token_id.hex()}"


@dataclass(frozen=True)
class ReadResponse:
    request_id: int
    query: ChainQuery
    found: bool
    block_index: int | None
    block: Block | None
    transaction: Transaction | None
    height: int
    answered: int


def _fmt(value) -> str:
    if isinstance(value, (bytes, bytearray)):
        return bytes(value).hex()
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, enum.Enum):
        return str(value.value)
    return str(value)


Handler = Callable[["World", SimNode, Message], None]


class World:
    """Node roster, event queue and the replicated main chain."""

    def __init__(
        self,
        seed: int = 0,
        difficulty: int = 2,
        capacity: int = 10,
        links: LinkModel | None = None,
        mine_delay: int = 1,
        genesis: Block | None = None,
    ):
        self.seed = seed
        self.rng = random.Random(seed)
        self.difficulty = difficulty
        self.capacity = capacity
        self.links = links or LinkModel()
        self.mine_delay = mine_delay
        self.genesis = genesis or mine_genesis(difficulty=difficulty)
        self.nodes: dict[NodeId, SimNode] = {}
        self.queue = EventQueue()
        self.log: list[str] = []
        self.mined: list[tuple[Block, ...]] = []
        self._msg_ids = itertools.count(1)
        self._req_ids = itertools.count(1)
        self.handlers: dict[str, Handler] = {
            "TX_SUBMIT": _on_tx_submit,
            "TX": _on_tx_gossip,
            "BLOCK": _on_block,
            "READ_REQ": _on_read_request,
            "READ_RESP": _on_read_response,
        }
        self.event_handlers: dict[EventKind, Callable[["World", SimEvent], None]] = {}

    @property
    def now(self) -> int:
        return self.queue.now

    # -- plumbing ------------------------------------------------------------

    def emit(self, node: NodeId, name: str, **fields) -> None:
        parts = [f"t={self.now}", f"node={node}", f"kind={name}"]
        parts.extend(f"{k}={_fmt(v)}" for k, v in fields.items())
        line = " ".join(parts)
        self.log.append(line)
        log.debug(line)

    def schedule(self, event: SimEvent) -> SimEvent:
        return self.queue.schedule(event)

    def call_at(self, tick: int, node: NodeId, fn: Callable, *args) -> SimEvent:
        return self.schedule(SimEvent(tick, EventKind.TIMER, node, (fn, args)))

    def node(self, node_id: NodeId) -> SimNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise SimError(f"unknown node {node_id}") from None

    def send(self, src: NodeId, dst: NodeId, kind: str, body: Any) -> Message | None:
        """Schedule delivery after the link latency; None if every attempt dropped."""
        a, b = self.node(src), self.node(dst)
        latency = self.links.latency(a, b)
        msg = Message(next(self._msg_ids), kind, src, dst, body, self.now)
        p = self.links.drop_probability
        for attempt in range(1, self.links.max_attempts + 1):
            if p == 0 or self.rng.random() >= p:
                self.schedule(SimEvent(self.now + attempt * latency, EventKind.DELIVER, dst, msg))
                return msg
            self.emit(src, "DROP", msg=msg.msg_id, dst=dst, type=kind, attempt=attempt)
        self.emit(src, "LOST", msg=msg.msg_id, dst=dst, type=kind)
        return None

    def step(self) -> SimEvent:
        event = self.queue.pop()
        if event.kind is EventKind.DELIVER:
            msg: Message = event.data
            node = self.nodes[event.node]
            node.inbox.append(msg)
            handler = self.handlers.get(msg.kind)
            if handler is None:
                raise SimError(f"no handler for message kind {msg.kind}")
            handler(self, node, msg)
        elif event.kind is EventKind.TIMER:
            fn, args = event.data
            fn(*args)
        else:
            self.event_handlers[event.kind](self, event)
        return event

    def run_until(self, tick: int) -> list[str]:
        start = len(self.log)
        while self.queue.peek_tick() is not None and self.queue.peek_tick() <= tick:
            self.step()
        if tick > self.queue.now:
            self.queue.now = tick
        return self.log[start:]

    def run(self, max_events: int = 1_000_000) -> list[str]:
        """Process events until the queue drains (quiescence)."""
        start = len(self.log)
        for _ in range(max_events):
            if not self.queue:
                return self.log[start:]
            self.step()
        raise SimError(f"no quiescence after {max_events} events")

    # -- roster --------------------------------------------------------------

    def full_nodes(self) -> list[SimNode]:
        return [n for _, n in sorted(self.nodes.items()) if n.full]

    def miners(self) -> list[SimNode]:
        return [n for n in self.full_nodes() if n.miner]

    def best_chain(self) -> Chain:
        chains = [n.chain for n in self.full_nodes()]
        if not chains:
            return Chain(self.genesis, self.difficulty)
        return min(chains, key=fork_key)

    def attach_node(self, node: SimNode) -> SimNode:
        if node.id in self.nodes:
            raise DuplicateId(f"node id {node.id} already attached")
        if node.full:
            best = self.best_chain()
            node.chain = Chain.from_blocks(best.blocks, self.difficulty)
        else:
            node.chain = None
        self.nodes[node.id] = node
        self.emit(node.id, "ATTACH", type=node.kind, orbit=node.orbit.value if node.orbit else "-",
                  full=node.full, miner=node.miner, height=len(node.chain) if node.chain else 0)
        return node

    def replicas_identical(self) -> bool:
        tips = {tuple(b.bhc for b in n.chain.blocks) for n in self.full_nodes()}
        return len(tips) <= 1

    # -- ledger traffic --------------------------------------------------------

    def request_mining(self, node: SimNode) -> None:
        if node.miner and not node.mine_pending and node.chain.mempool:
            node.mine_pending = True
            self.call_at(self.now + self.mine_delay, node.id, self._mine, node)

    def _mine(self, node: SimNode) -> None:
        node.mine_pending = False
        if not node.chain.mempool:
            return
        block, attempts = node.chain.mine(self.capacity, timestamp=self.now)
        self.mined.append(tuple(node.chain.blocks))
        self.emit(node.id, "BLOCK_MINED", index=block.index, bhc=block.bhc,
                  txs=len(block.transactions), attempts=attempts)
        self.broadcast_block(node.id, block)
        self.request_mining(node)

    def broadcast_block(self, origin: NodeId, block: Block) -> int:
        """Flood ``block`` (with the history it extends) to every other full node."""
        node = self.node(origin)
        if not node.full:
            raise SimError(f"node {origin} is not a full node")
        chain = node.chain
        if block.index >= len(chain) or chain.blocks[block.index].bhc != block.bhc:
            raise SimError(f"node {origin} does not hold block {block.bhc.hex()[:16]}")
        snapshot = tuple(chain.blocks[: block.index + 1])
        delivered = 0
        for peer in self.full_nodes():
            if peer.id == origin:
                continue
            if self.send(origin, peer.id, "BLOCK", (block, snapshot)) is not None:
                delivered += 1
        self.emit(origin, "BROADCAST", index=block.index, bhc=block.bhc, peers=delivered)
        return delivered

    def submit_transaction(self, origin: NodeId, tx: Transaction, via: NodeId) -> bytes:
        """Send ``tx`` to full node ``via``; returns the tx id as acknowledgement."""
        try:
            decode_token(tx.payload)
        except MalformedBytes as exc:
            self.emit(origin, "TX_REJECTED", tx=tx.tx_id, reason="malformed")
            raise Rejected(f"malformed payload: {exc}") from None
        if not self.node(via).full:
            raise SimError(f"node {via} is not a full node")
        self.node(origin)
        self.send(origin, via, "TX_SUBMIT", tx)
        return tx.tx_id

    def read_chain(self, reader: NodeId, via: NodeId, query: ChainQuery) -> int:
        if not self.node(via).full:
            raise SimError(f"node {via} is not a full node")
        self.node(reader)
        req = next(self._req_ids)
        self.send(reader, via, "READ_REQ", (req, query))
        self.emit(reader, "READ_SENT", req=req, via=via, query=query.describe())
        return req


def _on_tx_submit(world: World, node: SimNode, msg: Message) -> None:
    tx: Transaction = msg.body
    fresh = node.chain.add_transaction(tx)
    world.emit(node.id, "TX_ACCEPTED", tx=tx.tx_id, src=msg.src, fee=tx.fee, fresh=fresh)
    if fresh:
        for miner in world.miners():
            if miner.id != node.id:
                world.send(node.id, miner.id, "TX", tx)
        world.request_mining(node)


def _on_tx_gossip(world: World, node: SimNode, msg: Message) -> None:
    tx: Transaction = msg.body
    if node.chain.add_transaction(tx):
        world.emit(node.id, "TX_POOLED", tx=tx.tx_id, src=msg.src)
        world.request_mining(node)


def _on_block(world: World, node: SimNode, msg: Message) -> None:
    if not node.full:
        return
    block, snapshot = msg.body
    chain = node.chain
    if block.index < len(chain) and chain.blocks[block.index].bhc == block.bhc:
        world.emit(node.id, "BLOCK_KNOWN", index=block.index, bhc=block.bhc)
        return
    if block.header.parent_hash == chain.tip.bhc:
        try:
            append_block(chain, block)
        except InvalidBlock as exc:
            world.emit(node.id, "BLOCK_REJECTED", index=block.index, bhc=block.bhc,
                       reason=exc.reason.name)
            return
        world.emit(node.id, "BLOCK_ACCEPTED", index=block.index, bhc=block.bhc, src=msg.src)
        world.request_mining(node)
        return
    candidate = Chain.from_blocks(snapshot, world.difficulty)
    report = validate_chain(candidate, world.difficulty)
    if not report.valid or candidate.genesis.bhc != chain.genesis.bhc:
        world.emit(node.id, "BLOCK_REJECTED", index=block.index, bhc=block.bhc,
                   reason="INVALID_BRANCH")
        return
    if fork_key(candidate) < fork_key(chain):
        orphaned = chain.adopt(snapshot)
        world.emit(node.id, "FORK_SWITCH", height=len(chain), tip=chain.tip.bhc,
                   requeued=len(orphaned))
        world.request_mining(node)
    else:
        world.emit(node.id, "FORK_KEPT", height=len(chain), tip=chain.tip.bhc, rival=block.bhc)


def _lookup(chain: Chain, query: ChainQuery):
    if query.index is not None:
        if 0 <= query.index < len(chain):
            return query.index, chain.blocks[query.index], None
        return None

    def matches(tx: Transaction) -> bool:
        try:
            return decode_token(tx.payload).token_id == query.token_id
        except MalformedBytes:
            return False

    hit = chain.find_transaction(matches)
    if hit is None:
        return None
    index, tx = hit
    return index, chain.blocks[index], tx


def _on_read_request(world: World, node: SimNode, msg: Message) -> None:
    req, query = msg.body
    hit = _lookup(node.chain, query)
    if hit is None:
        resp = ReadResponse(req, query, False, None, None, None, len(node.chain), world.now)
    else:
        index, block, tx = hit
        resp = ReadResponse(req, query, True, index, block, tx, len(node.chain), world.now)
    world.send(node.id, msg.src, "READ_RESP", resp)


def _on_read_response(world: World, node: SimNode, msg: Message) -> None:
    resp: ReadResponse = msg.body
    world.emit(node.id, "READ_RESPONSE", req=resp.request_id,
               status="FOUND" if resp.found else "NotFound",
               index=resp.block_index if resp.found else "-", height=resp.height)
