"""Consortium ledger for the six satellite-launch phases with milestone funding."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .common import NodeId
from .ledger import Block, Chain, mine_genesis
from .tokens import (
    DecisionToken,
    FundingToken,
    MissionPhaseToken,
    decode_token,
    token_transaction,
)

MISSION_DIFFICULTY = 1


class MissionPhase(enum.IntEnum):
    MISSION_ANALYSIS_IDENTIFICATION = 1
    FEASIBILITY_STUDY = 2
    PRELIMINARY_DESIGN = 3
    DETAILED_DESIGN = 4
    QUALIFICATION_PRODUCTION = 5
    LAUNCHING_OPERATING = 6


PHASE_FIELDS: dict[MissionPhase, tuple[str, ...]] = {
    MissionPhase.MISSION_ANALYSIS_IDENTIFICATION: ("requirements",),
    MissionPhase.FEASIBILITY_STUDY: ("cost_estimates",),
    MissionPhase.PRELIMINARY_DESIGN: ("interfaces", "schedule"),
    MissionPhase.DETAILED_DESIGN: ("stm", "em"),
    MissionPhase.QUALIFICATION_PRODUCTION: ("fm", "test_results"),
    MissionPhase.LAUNCHING_OPERATING: ("launch_control", "tracking"),
}


class MissionError(Exception):
    pass


class OutOfOrder(MissionError):
    pass


class UnauthorizedSubmitter(MissionError):
    pass


class DuplicatePhase(MissionError):
    pass


class InvalidRecord(MissionError):
    pass


class PhaseNotCommitted(MissionError):
    pass


class AlreadyReleased(MissionError):
    pass


@dataclass(frozen=True)
class PhaseRecord:
    phase: MissionPhase
    submitter: NodeId
    payload: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "phase", MissionPhase(self.phase))
        object.__setattr__(
            self, "payload", {k: tuple(v) for k, v in sorted(self.payload.items())}
        )

    def schema_errors(self) -> list[str]:
        errors = []
        for name in PHASE_FIELDS[self.phase]:
            values = self.payload.get(name, ())
            if not values or not all(isinstance(v, str) and v for v in values):
                errors.append(f"phase {self.phase.value} needs nonempty '{name}'")
        return errors

    def digest(self) -> bytes:
        h = hashlib.sha256(bytes([self.phase.value]))
        for key, values in self.payload.items():
            h.update(key.encode() + b"\x00")
            for v in values:
                h.update(v.encode() + b"\x00")
            h.update(b"\x01")
        return h.digest()


@dataclass(frozen=True)
class ConsortiumConfig:
    members: frozenset[NodeId]
    miners: tuple[NodeId, ...]
    budget: int
    beneficiary: NodeId
    fractions: tuple[Fraction, ...] = (Fraction(1, 6),) * 6

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        object.__setattr__(self, "miners", tuple(sorted(self.miners)))
        fr = tuple(Fraction(f) for f in self.fractions)
        object.__setattr__(self, "fractions", fr)
        if len(fr) != 6:
            raise ValueError(f"need 6 release fractions, got {len(fr)}")
        if any(not 0 <= f <= 1 for f in fr) or sum(fr) != 1:
            raise ValueError(f"fractions must lie in [0, 1] and sum to 1, got {fr}")
        if not self.miners:
            raise ValueError("consortium needs at least one authorized miner")
        if self.budget <= 0:
            raise ValueError("budget must be positive")


@dataclass(frozen=True)
class LifecycleStatus:
    current_phase: int
    released: Fraction
    budget: int
    height: int
    phase_heights: tuple[tuple[int, int], ...]
    release_heights: tuple[tuple[int, int], ...]

    def format(self) -> str:
        def pairs(items):
            return ",".join(f"{p}@{h}" for p, h in items) or "-"

        return "\n".join(
            [
                f"current_phase={self.current_phase}",
                f"released={self.released}",
                f"budget={self.budget}",
                f"height={self.height}",
                f"phase_blocks={pairs(self.phase_heights)}",
                f"release_blocks={pairs(self.release_heights)}",
            ]
        )


@dataclass
class MissionLedger:
    config: ConsortiumConfig
    chain: Chain = None  # type: ignore[assignment]
    records: dict[int, PhaseRecord] = field(default_factory=dict)
    phase_heights: dict[int, int] = field(default_factory=dict)
    released: dict[int, Fraction] = field(default_factory=dict)
    release_heights: dict[int, int] = field(default_factory=dict)
    difficulty: int = MISSION_DIFFICULTY

    def __post_init__(self):
        if self.chain is None:
            charter = DecisionToken("consortium charter", "mission")
            founder = self.config.miners[0]
            genesis = mine_genesis(
                [token_transaction(charter, founder, 0)], self.difficulty, 0
            )
            self.chain = Chain(genesis, self.difficulty)

    @property
    def last_phase(self) -> int:
        return max(self.phase_heights, default=0)

    def _miner_for(self, height: int) -> NodeId:
        return self.config.miners[height % len(self.config.miners)]

    def _commit(self, token, tick: int) -> Block:
        miner = self._miner_for(len(self.chain))
        self.chain.add_transaction(token_transaction(token, miner, tick))
        block, _ = self.chain.mine(capacity=1, timestamp=tick)
        return block

    def submit_phase(self, record: PhaseRecord, tick: int = 0) -> Block:
        """Commit one phase record after every authorized miner has verified it."""
        if record.submitter not in self.config.members:
            raise UnauthorizedSubmitter(f"{record.submitter} is not a consortium member")
        if record.phase.value in self.phase_heights:
            raise DuplicatePhase(f"phase {record.phase.value} already committed")
        expected = self.last_phase + 1
        if record.phase.value != expected:
            raise OutOfOrder(f"expected phase {expected}, got {record.phase.value}")
        for miner in self.config.miners:
            problems = self.verify(miner, record)
            if problems:
                raise InvalidRecord(f"miner {miner} rejected: {'; '.join(problems)}")
        token = MissionPhaseToken(record.phase.value, record.digest(), record.submitter)
        block = self._commit(token, tick)
        self.records[record.phase.value] = record
        self.phase_heights[record.phase.value] = block.index
        return block

    def verify(self, miner: NodeId, record: PhaseRecord) -> list[str]:
        """Checks a consortium miner applies: schema plus submitter authorization."""
        problems = record.schema_errors()
        if record.submitter not in self.config.members:
            problems.append(f"submitter {record.submitter} unauthorized")
        return problems

    def release_funds(self, phase: int, tick: int = 0) -> list[FundingToken]:
        """Mint this phase's share of the budget; empty when its fraction is zero."""
        if phase not in self.phase_heights:
            raise PhaseNotCommitted(f"phase {phase} has no committed block")
        if phase in self.released:
            raise AlreadyReleased(f"funds for phase {phase} already released")
        amount = self.config.budget * self.config.fractions[phase - 1]
        self.released[phase] = amount
        if amount == 0:
            return []
        token = FundingToken(amount, self.config.beneficiary, phase)
        block = self._commit(token, tick)
        self.release_heights[phase] = block.index
        return [token]

    def total_released(self) -> Fraction:
        return sum(self.released.values(), Fraction(0))

    def status(self) -> LifecycleStatus:
        return LifecycleStatus(
            current_phase=self.last_phase,
            released=self.total_released(),
            budget=self.config.budget,
            height=len(self.chain),
            phase_heights=tuple(sorted(self.phase_heights.items())),
            release_heights=tuple(sorted(self.release_heights.items())),
        )


def lifecycle_status(ledger: MissionLedger) -> LifecycleStatus:
    return ledger.status()


def audit_lifecycle(chain: Chain | Sequence[Block], config: ConsortiumConfig) -> list[str]:
    """Re-derive the lifecycle invariants from chain contents alone."""
    blocks = chain.blocks if isinstance(chain, Chain) else chain
    problems = []
    phases: list[int] = []
    released = Fraction(0)
    for block in blocks[1:]:
        for tx in block.transactions:
            if tx.issuer not in config.miners:
                problems.append(f"block {block.index} mined by unauthorized {tx.issuer}")
            token = decode_token(tx.payload)
            if isinstance(token, MissionPhaseToken):
                if token.submitter not in config.members:
                    problems.append(f"block {block.index} phase from non-member {token.submitter}")
                phases.append(token.phase)
            elif isinstance(token, FundingToken):
                if token.phase not in phases:
                    problems.append(f"block {block.index} releases funds before phase {token.phase}")
                released += token.amount
                if released > config.budget:
                    problems.append(f"block {block.index} overspends the budget")
    if phases != list(range(1, len(phases) + 1)):
        problems.append(f"phase sequence {phases} is not 1..k")
    return problems
