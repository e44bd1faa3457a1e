"""Mutable per-node protocol state."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from app.consensus.table import SetupStep
from app.core.types import ConsensusCodeRange, SpendAuthorization, Transaction
from app.crypto.hashing import Digest


class Phase(Enum):
    IDLE = "idle"
    SETUP = "setup"
    COMMITTING = "committing"
    REFORMING = "reforming"


class Role(Enum):
    CLIENT = "client"
    VALIDATOR = "validator"
    BACKUP = "backup"
    STANDBY = "standby"


@dataclass(slots=True)
class PoolEntry:
    tx: Transaction
    arrival: int
    authorization: SpendAuthorization | None = None


@dataclass(slots=True)
class RangeCounters:
    """What a node has seen of one range during the current epoch."""

    observed: int = 0
    committed: int = 0
    last_block: int = 0
    reported: bool = False
    # No gap reports before this time; set when a range changes hands.
    grace_until: int = 0

    @property
    def gap(self) -> int:
        return self.observed - self.committed


@dataclass(slots=True)
class OwnedRange:
    """A range this node commits for; blocks start once ``ready_at`` passes."""

    ready_at: int
    last_block_time: int
    pool: list[PoolEntry] = field(default_factory=list)
    frozen: bool = False
    overloaded_since: int | None = None
    split_requested: bool = False

    def pool_ids(self) -> set[Digest]:
        return {entry.tx.t_id for entry in self.pool}


@dataclass(slots=True)
class NodeState:
    phase: Phase = Phase.IDLE
    setup_step: SetupStep | None = None
    role: Role = Role.STANDBY
    owned: dict[ConsensusCodeRange, OwnedRange] = field(default_factory=dict)
    peer_counters: dict[ConsensusCodeRange, RangeCounters] = field(default_factory=dict)
    halted: bool = False

    @property
    def my_ranges(self) -> list[ConsensusCodeRange]:
        return list(self.owned)

    def pool_size(self) -> int:
        return sum(len(owned.pool) for owned in self.owned.values())

    def counters(self, code_range: ConsensusCodeRange) -> RangeCounters:
        return self.peer_counters.setdefault(code_range, RangeCounters())
