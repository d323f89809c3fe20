"""Hash-linked proof-of-work ledger: transactions, blocks, mining, verification.

Header preimage (big-endian, 92 bytes)::

    index u64 | parent_hash 32 | tx_digest 32 | timestamp u64 | difficulty u32 | nonce u64

Transaction encoding::

    timestamp u64 | issuer u64 | fee u64 | payload_len u32 | payload

The block hash code (BHC) is SHA-256 of the header preimage. A block meets a
difficulty of ``d`` when the hex form of its BHC starts with ``d`` zeros.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

from .common import U64_MAX, NodeId, check_u64

ZERO_HASH = bytes(32)
MAX_DIFFICULTY = 16

_HEADER = struct.Struct(">Q32s32sQIQ")
_TX_HEAD = struct.Struct(">QQQI")
HEADER_SIZE = _HEADER.size


class LedgerError(Exception):
    pass


class NonceExhausted(LedgerError):
    pass


class IncompatibleGenesis(LedgerError):
    pass


class RejectReason(str, enum.Enum):
    INDEX = "index mismatch"
    PARENT = "parent mismatch"
    TX_DIGEST = "tx_digest mismatch"
    EMPTY = "empty transaction list"
    WORK = "insufficient work"
    DUPLICATE_TX = "duplicate tx"
    GENESIS_PARENT = "genesis parent_hash not zero"
    UNKNOWN = "block not on chain"


class InvalidBlock(LedgerError):
    def __init__(self, reason: RejectReason, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)


@dataclass(frozen=True)
class Transaction:
    timestamp: int
    issuer: NodeId
    fee: int
    payload: bytes

    def __post_init__(self):
        check_u64("timestamp", self.timestamp)
        check_u64("issuer", self.issuer)
        check_u64("fee", self.fee)
        object.__setattr__(self, "payload", bytes(self.payload))

    def encode(self) -> bytes:
        return (
            _TX_HEAD.pack(self.timestamp, self.issuer, self.fee, len(self.payload))
            + self.payload
        )

    @cached_property
    def tx_id(self) -> bytes:
        return hashlib.sha256(self.encode()).digest()

    @classmethod
    def decode_from(cls, buf: bytes, offset: int = 0) -> tuple["Transaction", int]:
        end = offset + _TX_HEAD.size
        if end > len(buf):
            raise ValueError(f"truncated transaction header at offset {offset}")
        ts, issuer, fee, n = _TX_HEAD.unpack_from(buf, offset)
        if end + n > len(buf):
            raise ValueError(f"truncated transaction payload at offset {end}")
        return cls(ts, issuer, fee, buf[end : end + n]), end + n

    @classmethod
    def decode(cls, buf: bytes) -> "Transaction":
        tx, end = cls.decode_from(buf)
        if end != len(buf):
            raise ValueError(f"{len(buf) - end} trailing bytes after transaction")
        return tx


def tx_digest(transactions: Iterable[Transaction]) -> bytes:
    h = hashlib.sha256()
    for tx in transactions:
        h.update(tx.encode())
    return h.digest()


@dataclass(frozen=True)
class BlockHeader:
    index: int
    parent_hash: bytes
    tx_digest: bytes
    timestamp: int
    difficulty: int
    nonce: int

    def encode(self) -> bytes:
        return _HEADER.pack(
            self.index,
            self.parent_hash,
            self.tx_digest,
            self.timestamp,
            self.difficulty,
            self.nonce,
        )


def block_hash(header: BlockHeader) -> bytes:
    return hashlib.sha256(header.encode()).digest()


def meets_difficulty(digest: bytes, difficulty: int) -> bool:
    """True when ``digest.hex()`` starts with ``difficulty`` zero nibbles."""
    full, half = divmod(difficulty, 2)
    if digest[:full] != bytes(full):
        return False
    return not half or digest[full] < 0x10


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple[Transaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))

    @cached_property
    def bhc(self) -> bytes:
        return block_hash(self.header)

    @property
    def index(self) -> int:
        return self.header.index

    @property
    def nonce(self) -> int:
        return self.header.nonce


def _search_nonce(index, parent_hash, digest, timestamp, difficulty, start) -> int:
    # The nonce is the trailing field of the preimage, so hash the fixed prefix once.
    prefix = _HEADER.pack(index, parent_hash, digest, timestamp, difficulty, 0)[:-8]
    base = hashlib.sha256(prefix)
    full, half = divmod(difficulty, 2)
    zeros = bytes(full)
    for nonce in range(start, U64_MAX + 1):
        h = base.copy()
        h.update(nonce.to_bytes(8, "big"))
        d = h.digest()
        if d[:full] == zeros and (not half or d[full] < 0x10):
            return nonce
    raise NonceExhausted(f"no nonce in [{start}, 2^64) meets difficulty {difficulty}")


def _check_difficulty(difficulty: int) -> None:
    if not 0 <= difficulty <= MAX_DIFFICULTY:
        raise ValueError(f"difficulty must be in [0, {MAX_DIFFICULTY}], got {difficulty}")


def select_transactions(
    mempool: Iterable[Transaction], capacity: int
) -> list[Transaction]:
    """Highest fee first, ties by smaller tx_id."""
    return sorted(mempool, key=lambda tx: (-tx.fee, tx.tx_id))[:capacity]


def mine_genesis(
    transactions: Sequence[Transaction] = (),
    difficulty: int = 0,
    timestamp: int = 0,
) -> Block:
    _check_difficulty(difficulty)
    txs = tuple(transactions)
    digest = tx_digest(txs)
    nonce = _search_nonce(0, ZERO_HASH, digest, timestamp, difficulty, 0)
    return Block(BlockHeader(0, ZERO_HASH, digest, timestamp, difficulty, nonce), txs)


def mine_block(
    mempool: Iterable[Transaction],
    parent: Block,
    difficulty: int,
    capacity: int,
    timestamp: int | None = None,
    start_nonce: int = 0,
) -> tuple[Block, int]:
    """Mine the next block on ``parent`` from the best-paying mempool entries.

    Nonces are tried in ascending order from ``start_nonce``; the returned
    attempt count is ``nonce - start_nonce + 1``.
    """
    _check_difficulty(difficulty)
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    txs = tuple(select_transactions(mempool, capacity))
    if not txs:
        raise ValueError("cannot mine a non-genesis block from an empty mempool")
    if timestamp is None:
        timestamp = parent.header.timestamp
    index = parent.index + 1
    digest = tx_digest(txs)
    nonce = _search_nonce(index, parent.bhc, digest, timestamp, difficulty, start_nonce)
    header = BlockHeader(index, parent.bhc, digest, timestamp, difficulty, nonce)
    return Block(header, txs), nonce - start_nonce + 1


def _check_body(block: Block, difficulty: int, committed_ids) -> None:
    if tx_digest(block.transactions) != block.header.tx_digest:
        raise InvalidBlock(RejectReason.TX_DIGEST, f"block {block.index}")
    if block.header.difficulty != difficulty or not meets_difficulty(
        block.bhc, difficulty
    ):
        raise InvalidBlock(RejectReason.WORK, f"block {block.index}")
    seen = set()
    for tx in block.transactions:
        if tx.tx_id in committed_ids or tx.tx_id in seen:
            raise InvalidBlock(RejectReason.DUPLICATE_TX, tx.tx_id.hex())
        seen.add(tx.tx_id)


def verify_genesis(block: Block, difficulty: int) -> None:
    if block.index != 0:
        raise InvalidBlock(RejectReason.INDEX, f"genesis has index {block.index}")
    if block.header.parent_hash != ZERO_HASH:
        raise InvalidBlock(RejectReason.GENESIS_PARENT)
    _check_body(block, difficulty, ())


def verify_block(
    block: Block,
    parent: Block,
    difficulty: int,
    committed_ids=frozenset(),
) -> None:
    """Recompute-and-compare check of ``block`` against ``parent``.

    Raises InvalidBlock naming the first failed check; returns None on accept.
    ``committed_ids`` holds tx ids already on the caller's chain.
    """
    if block.index != parent.index + 1:
        raise InvalidBlock(
            RejectReason.INDEX, f"expected {parent.index + 1}, got {block.index}"
        )
    if block.header.parent_hash != parent.bhc:
        raise InvalidBlock(RejectReason.PARENT, f"block {block.index}")
    if not block.transactions:
        raise InvalidBlock(RejectReason.EMPTY, f"block {block.index}")
    _check_body(block, difficulty, committed_ids)


class Chain:
    """Blocks from genesis plus the unconfirmed-transaction pool."""

    def __init__(self, genesis: Block, difficulty: int):
        _check_difficulty(difficulty)
        self.difficulty = difficulty
        self.blocks: list[Block] = [genesis]
        self.mempool: dict[bytes, Transaction] = {}
        self._committed: set[bytes] = {tx.tx_id for tx in genesis.transactions}

    @classmethod
    def from_blocks(cls, blocks: Sequence[Block], difficulty: int) -> "Chain":
        """Wrap ``blocks`` without verifying them (see validate_chain)."""
        chain = cls(blocks[0], difficulty)
        chain.blocks = list(blocks)
        chain._committed = {tx.tx_id for b in blocks for tx in b.transactions}
        return chain

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def genesis(self) -> Block:
        return self.blocks[0]

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def committed_ids(self) -> frozenset[bytes]:
        return frozenset(self._committed)

    def is_committed(self, tx_id: bytes) -> bool:
        return tx_id in self._committed

    def add_transaction(self, tx: Transaction) -> bool:
        """Queue ``tx`` unless already pending or committed."""
        if tx.tx_id in self._committed or tx.tx_id in self.mempool:
            return False
        self.mempool[tx.tx_id] = tx
        return True

    def mine(
        self, capacity: int, timestamp: int | None = None, start_nonce: int = 0
    ) -> tuple[Block, int]:
        block, attempts = mine_block(
            self.mempool.values(),
            self.tip,
            self.difficulty,
            capacity,
            timestamp=timestamp,
            start_nonce=start_nonce,
        )
        append_block(self, block)
        return block, attempts

    def adopt(self, blocks: Sequence[Block]) -> list[Transaction]:
        """Replace history with ``blocks`` in place; orphaned txs return to the mempool.

        Returns the orphaned transactions that were re-queued.
        """
        old = self.blocks
        self.blocks = list(blocks)
        self._committed = {tx.tx_id for b in self.blocks for tx in b.transactions}
        for tx_id in list(self.mempool):
            if tx_id in self._committed:
                del self.mempool[tx_id]
        orphaned = []
        for b in old:
            for tx in b.transactions:
                if tx.tx_id not in self._committed and tx.tx_id not in self.mempool:
                    self.mempool[tx.tx_id] = tx
                    orphaned.append(tx)
        return orphaned

    def copy(self) -> "Chain":
        other = Chain.from_blocks(self.blocks, self.difficulty)
        other.mempool = dict(self.mempool)
        return other

    def find_transaction(self, predicate) -> tuple[int, Transaction] | None:
        for block in self.blocks:
            for tx in block.transactions:
                if predicate(tx):
                    return block.index, tx
        return None


def append_block(chain: Chain, block: Block) -> Chain:
    verify_block(block, chain.tip, chain.difficulty, chain._committed)
    chain.blocks.append(block)
    for tx in block.transactions:
        chain._committed.add(tx.tx_id)
        chain.mempool.pop(tx.tx_id, None)
    return chain


@dataclass(frozen=True)
class ChainReport:
    first_invalid: int | None = None
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.first_invalid is None

    def __str__(self) -> str:
        if self.valid:
            return "valid"
        return f"invalid at {self.first_invalid}: {self.reason}"


def validate_chain(chain: Chain | Sequence[Block], difficulty: int) -> ChainReport:
    blocks = chain.blocks if isinstance(chain, Chain) else list(chain)
    if not blocks:
        return ChainReport(0, "empty chain")
    try:
        verify_genesis(blocks[0], difficulty)
    except InvalidBlock as exc:
        return ChainReport(0, str(exc))
    committed = {tx.tx_id for tx in blocks[0].transactions}
    for i in range(1, len(blocks)):
        try:
            verify_block(blocks[i], blocks[i - 1], difficulty, committed)
        except InvalidBlock as exc:
            return ChainReport(i, str(exc))
        committed.update(tx.tx_id for tx in blocks[i].transactions)
    return ChainReport()


def fork_key(chain: Chain) -> tuple[int, str]:
    """Sort key under which the fork-choice winner is the minimum."""
    return (-len(chain), chain.tip.bhc.hex())


def resolve_fork(a: Chain, b: Chain) -> Chain:
    """Longer chain wins; equal lengths go to the smaller tip hash."""
    if a.genesis.bhc != b.genesis.bhc:
        raise IncompatibleGenesis(
            f"{a.genesis.bhc.hex()[:16]} != {b.genesis.bhc.hex()[:16]}"
        )
    return a if fork_key(a) <= fork_key(b) else b


# Chain export: one line per block, lowercase hex fields separated by "|":
#   index | bhc | parent_hash | tx_digest | timestamp | difficulty | nonce | txs
# Integers are fixed-width hex of their header widths; txs is a comma-separated
# list of canonical transaction encodings (empty for a tx-less genesis).


class MalformedChainFile(LedgerError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class BlockDecodeError(LedgerError):
    """A line has the export shape but its content does not decode."""

    def __init__(self, line: int, index: int, message: str):
        self.line = line
        self.index = index
        super().__init__(f"line {line} (block {index}): {message}")


_FIELD_WIDTHS = (16, 64, 64, 64, 16, 8, 16)
_HEX = frozenset("0123456789abcdef")


@dataclass
class ExportedBlock:
    block: Block
    declared_bhc: bytes


def export_chain(chain: Chain | Sequence[Block]) -> str:
    blocks = chain.blocks if isinstance(chain, Chain) else chain
    lines = []
    for b in blocks:
        h = b.header
        lines.append(
            "|".join(
                [
                    f"{h.index:016x}",
                    b.bhc.hex(),
                    h.parent_hash.hex(),
                    h.tx_digest.hex(),
                    f"{h.timestamp:016x}",
                    f"{h.difficulty:08x}",
                    f"{h.nonce:016x}",
                    ",".join(tx.encode().hex() for tx in b.transactions),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_export_line(line: str, lineno: int) -> ExportedBlock:
    parts = line.split("|")
    if len(parts) != 8:
        raise MalformedChainFile(lineno, f"expected 8 fields, got {len(parts)}")
    for i, (part, width) in enumerate(zip(parts, _FIELD_WIDTHS)):
        if len(part) != width or not set(part) <= _HEX:
            raise MalformedChainFile(lineno, f"field {i} is not {width} lowercase hex chars")
    tx_field = parts[7]
    if not set(tx_field) <= _HEX | {","}:
        raise MalformedChainFile(lineno, "transaction field is not lowercase hex")
    index = int(parts[0], 16)
    txs = []
    for chunk in filter(None, tx_field.split(",")):
        if len(chunk) % 2:
            raise MalformedChainFile(lineno, "odd-length transaction hex")
        try:
            txs.append(Transaction.decode(bytes.fromhex(chunk)))
        except ValueError as exc:
            raise BlockDecodeError(lineno, index, str(exc)) from None
    header = BlockHeader(
        index,
        bytes.fromhex(parts[2]),
        bytes.fromhex(parts[3]),
        int(parts[4], 16),
        int(parts[5], 16),
        int(parts[6], 16),
    )
    return ExportedBlock(Block(header, txs), bytes.fromhex(parts[1]))


def import_chain(text: str) -> list[ExportedBlock]:
    lines = text.splitlines()
    if not lines:
        raise MalformedChainFile(1, "empty chain file")
    return [parse_export_line(line, n) for n, line in enumerate(lines, 1)]


def audit_export(text: str, difficulty: int) -> ChainReport:
    """Validate an exported chain, including each line's declared BHC.

    Structural defects raise MalformedChainFile; everything else is report content.
    """
    entries: list[ExportedBlock] = []
    undecodable = None
    for n, line in enumerate(text.splitlines(), 1):
        try:
            entries.append(parse_export_line(line, n))
        except BlockDecodeError as exc:
            undecodable = exc
            break
    if not entries and undecodable is None:
        raise MalformedChainFile(1, "empty chain file")
    report = validate_chain([e.block for e in entries], difficulty) if entries else None
    for i, e in enumerate(entries):
        if report.first_invalid is not None and report.first_invalid <= i:
            return report
        if e.block.bhc != e.declared_bhc:
            return ChainReport(i, "declared bhc does not match header")
    if undecodable is not None:
        return ChainReport(len(entries), f"undecodable transactions: {undecodable}")
    return report
