"""The ledger forest: one hash chain per consensus-code range and epoch."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from app.consensus.table import ConsensusTable
from app.core.merkle import merkle_root
from app.core.types import (
    Block,
    ConsensusCodeRange,
    GenesisBlock,
    LedgerHead,
    SpendAuthorization,
    Transaction,
    ledger_hashes_root,
    transactions_root,
)
from app.crypto.hashing import Digest, digest_to_base62

logger = logging.getLogger(__name__)

LedgerId = tuple[int, ConsensusCodeRange]


def ledger_label(key: LedgerId) -> str:
    return f"{key[0]}:{key[1].label}"


class ForkDetectedError(RuntimeError):
    """Raised when a block does not extend the head of its ledger."""

    def __init__(self, key: LedgerId, block: Block, reason: str) -> None:
        self.key = key
        self.block = block
        self.reason = reason
        super().__init__(f"Fork detected on ledger {ledger_label(key)}: {reason}")


class EpochOpenError(RuntimeError):
    """Raised when compacting an epoch that has no successor genesis yet."""


class UnknownLedgerError(KeyError):
    """Raised for blocks addressed to a ledger the forest does not hold."""

    def __init__(self, key: LedgerId) -> None:
        self.key = key
        super().__init__(f"No ledger {ledger_label(key)} in the forest")

    def __str__(self) -> str:
        return str(self.args[0])


@dataclass(frozen=True, slots=True)
class SpentFlag:
    """Sidecar record of a spent output; never part of any block hash."""

    spender_id: Digest
    authorization: SpendAuthorization


@dataclass(frozen=True, slots=True)
class ForkRecord:
    epoch: int
    parent: ConsensusCodeRange
    first: ConsensusCodeRange
    second: ConsensusCodeRange
    root: Digest


@dataclass(frozen=True, slots=True)
class CarryRecord:
    """A ledger continued into an epoch that kept the previous table."""

    epoch: int
    code_range: ConsensusCodeRange
    root: Digest
    base_height: int


@dataclass(frozen=True, slots=True)
class RetrievalResult:
    transaction: Transaction | None
    ledger: LedgerId | None
    blocks_scanned: int
    ledgers_scanned: int

    @property
    def found(self) -> bool:
        return self.transaction is not None


@dataclass(slots=True)
class Ledger:
    root: Digest
    base_height: int = 0
    blocks: list[Block] = field(default_factory=list)
    block_hashes: list[Digest] = field(default_factory=list)
    tx_ids: list[frozenset[Digest]] = field(default_factory=list)
    closed: bool = False

    @property
    def head(self) -> Digest:
        return self.block_hashes[-1] if self.block_hashes else self.root

    @property
    def next_height(self) -> int:
        return self.base_height + len(self.blocks) + 1


class LedgerForest:
    """Blocks of every epoch, owned by a single node."""

    def __init__(self) -> None:
        self.genesis_chain: list[GenesisBlock] = []
        self.ledgers: dict[LedgerId, Ledger] = {}
        self.unspent_index: set[Digest] = set()
        self.spent_sidecar: dict[Digest, SpentFlag] = {}
        self.disputed: list[Digest] = []
        self.forks: list[ForkRecord] = []
        self.carries: list[CarryRecord] = []
        self.fork_events: list[ForkDetectedError] = []
        self._locations: dict[Digest, tuple[LedgerId, int, int]] = {}
        self._reported: dict[LedgerId, dict[LedgerId, Digest]] = {}

    # -- epochs ---------------------------------------------------------------

    @property
    def current_epoch(self) -> int:
        return self.genesis_chain[-1].epoch if self.genesis_chain else 0

    def genesis_of(self, epoch: int) -> GenesisBlock | None:
        for genesis in self.genesis_chain:
            if genesis.epoch == epoch:
                return genesis
        return None

    def open_epoch(self, genesis: GenesisBlock) -> None:
        """Record ``genesis`` and root one ledger per assigned range on it."""
        if self.genesis_chain and genesis.epoch <= self.current_epoch:
            msg = f"Epoch {genesis.epoch} is not after epoch {self.current_epoch}"
            raise ValueError(msg)
        self.genesis_chain.append(genesis)
        root = genesis.block_hash()
        for entry in genesis.current_entries():
            assert entry.code_range is not None
            self.ledgers[(genesis.epoch, entry.code_range)] = Ledger(root=root)

    def carry_epoch(
        self, previous: int, epoch: int, ranges: Iterable[ConsensusCodeRange]
    ) -> list[CarryRecord]:
        """Continue every ledger of ``previous`` named in ``ranges`` into ``epoch``.

        Used when ``epoch`` runs on the previous table without a genesis
        block: each new ledger is rooted on the head of its predecessor.

        Raises
        ------
        UnknownLedgerError
            If a range has no ledger in ``previous``.
        """
        sources = [(code_range, self.ledger((previous, code_range))) for code_range in ranges]
        records = []
        for code_range, source in sources:
            records.append(
                self.carry_ledger(epoch, code_range, source.head, source.next_height - 1)
            )
        logger.info("Carried %d ledger(s) from epoch %d into %d", len(records), previous, epoch)
        return records

    def carry_ledger(
        self, epoch: int, code_range: ConsensusCodeRange, root: Digest, base_height: int
    ) -> CarryRecord:
        key = (epoch, code_range)
        if key in self.ledgers:
            msg = f"Ledger {ledger_label(key)} already exists"
            raise ValueError(msg)
        self.ledgers[key] = Ledger(root=root, base_height=base_height)
        record = CarryRecord(epoch, code_range, root, base_height)
        self.carries.append(record)
        return record

    def is_carried(self, epoch: int) -> bool:
        return any(record.epoch == epoch for record in self.carries)

    def epoch_compact(self, epoch: int) -> None:
        """Drop the ledger-hash vectors of a closed epoch.

        Raises
        ------
        EpochOpenError
            If no genesis block of a later epoch exists.
        """
        if not any(genesis.epoch > epoch for genesis in self.genesis_chain):
            msg = f"Epoch {epoch} is still open"
            raise EpochOpenError(msg)
        compacted = 0
        for (ledger_epoch, _), ledger in self.ledgers.items():
            if ledger_epoch != epoch:
                continue
            for index, block in enumerate(ledger.blocks):
                if block.ledger_hashes is not None:
                    ledger.blocks[index] = block.compacted()
                    compacted += 1
        logger.debug("Compacted %d block(s) of epoch %d", compacted, epoch)

    # -- ledgers --------------------------------------------------------------

    def ledger(self, key: LedgerId) -> Ledger:
        try:
            return self.ledgers[key]
        except KeyError:
            raise UnknownLedgerError(key) from None

    def head(self, key: LedgerId) -> Digest:
        return self.ledger(key).head

    def next_height(self, key: LedgerId) -> int:
        return self.ledger(key).next_height

    def fork(
        self,
        epoch: int,
        parent: ConsensusCodeRange,
        first: ConsensusCodeRange,
        second: ConsensusCodeRange,
    ) -> ForkRecord:
        """Close ``parent`` and root both halves on its current head."""
        source = self.ledger((epoch, parent))
        source.closed = True
        height = source.next_height - 1
        for half in (first, second):
            self.ledgers[(epoch, half)] = Ledger(root=source.head, base_height=height)
        record = ForkRecord(epoch, parent, first, second, source.head)
        self.forks.append(record)
        logger.info("Forked ledger %s into %s and %s", parent, first, second)
        return record

    def append_block(self, block: Block, *, disputed: bool = False) -> None:
        """Chain ``block`` onto the head of its ledger.

        Raises
        ------
        UnknownLedgerError
            If the block's epoch and range name no ledger.
        ForkDetectedError
            If the block does not extend the current head or the ledger was
            closed by a split. The event is kept in ``fork_events``.
        """
        key = (block.epoch, block.code_range)
        ledger = self.ledger(key)
        if ledger.closed:
            error = ForkDetectedError(key, block, "ledger was split")
            self.fork_events.append(error)
            raise error
        if block.prev_hash != ledger.head:
            error = ForkDetectedError(key, block, "previous hash is not the ledger head")
            self.fork_events.append(error)
            raise error
        block_hash = block.block_hash()
        ledger.blocks.append(block)
        ledger.block_hashes.append(block_hash)
        ledger.tx_ids.append(frozenset(tx.t_id for tx in block.transactions))
        index = len(ledger.blocks) - 1
        for position, tx in enumerate(block.transactions):
            self._locations.setdefault(tx.t_id, (key, index, position))
            self.unspent_index.add(tx.t_id)
            if tx.input is not None:
                self.unspent_index.discard(tx.input)
        if disputed:
            self.disputed.append(block_hash)
            return
        spenders = {tx.t_id for tx in block.transactions if tx.input is not None}
        for auth in block.authorizations:
            if auth.approved and auth.spender_id in spenders:
                self.spent_sidecar.setdefault(auth.t_out_id, SpentFlag(auth.spender_id, auth))

    def iter_blocks(self, epoch: int | None = None) -> Iterator[tuple[LedgerId, Block]]:
        for key, ledger in self.ledgers.items():
            if epoch is not None and key[0] != epoch:
                continue
            for block in ledger.blocks:
                yield key, block

    def block_count(self) -> int:
        return sum(len(ledger.blocks) for ledger in self.ledgers.values())

    def transaction_count(self) -> int:
        return len(self._locations)

    # -- transactions ---------------------------------------------------------

    def has_transaction(self, t_id: Digest) -> bool:
        return t_id in self._locations

    def transaction(self, t_id: Digest) -> Transaction | None:
        location = self._locations.get(t_id)
        if location is None:
            return None
        key, index, position = location
        return self.ledgers[key].blocks[index].transactions[position]

    def record_spend(self, t_out_id: Digest, flag: SpentFlag) -> None:
        self.spent_sidecar[t_out_id] = flag

    def retrieve_transaction(
        self, t_id: Digest, table: ConsensusTable | None = None
    ) -> RetrievalResult:
        """Look ``t_id`` up in the ledgers whose range holds its code.

        With a ``table`` only that epoch's ledgers (including ledgers forked
        from them) are scanned. ``blocks_scanned`` counts blocks inspected up
        to and including the one holding the transaction.
        """
        code = digest_to_base62(t_id)
        scanned = 0
        ledgers = 0
        for key, ledger in self.ledgers.items():
            if table is not None and key[0] != table.epoch:
                continue
            if not key[1].contains(code):
                continue
            ledgers += 1
            for index, ids in enumerate(ledger.tx_ids):
                scanned += 1
                if t_id in ids:
                    tx = next(t for t in ledger.blocks[index].transactions if t.t_id == t_id)
                    return RetrievalResult(tx, key, scanned, ledgers)
        return RetrievalResult(None, None, scanned, ledgers)

    def scan_all(self, t_id: Digest) -> RetrievalResult:
        """Brute-force lookup over every ledger, ignoring consensus codes."""
        scanned = 0
        for position, (key, ledger) in enumerate(self.ledgers.items(), start=1):
            for block in ledger.blocks:
                scanned += 1
                for tx in block.transactions:
                    if tx.t_id == t_id:
                        return RetrievalResult(tx, key, scanned, position)
        return RetrievalResult(None, None, scanned, len(self.ledgers))

    # -- head vectors ---------------------------------------------------------

    def ledger_head_hashes(
        self, epoch: int, ranges: Iterable[ConsensusCodeRange], own: ConsensusCodeRange
    ) -> tuple[LedgerHead, ...]:
        """Head vector for the next block of ``own``.

        A peer range gets its head only if that ledger grew since the
        previous call for ``own``; otherwise its slot is null. The own range
        always carries its head.
        """
        own_key = (epoch, own)
        snapshot = self._reported.setdefault(own_key, {})
        heads: list[LedgerHead] = []
        for code_range in ranges:
            key = (epoch, code_range)
            ledger = self.ledgers.get(key)
            if ledger is None:
                heads.append((code_range, None))
                continue
            if code_range == own:
                heads.append((code_range, ledger.head))
                continue
            fresh = bool(ledger.blocks) and snapshot.get(key) != ledger.head
            heads.append((code_range, ledger.head if fresh else None))
            snapshot[key] = ledger.head
        return tuple(heads)

    def closing_ledger_hash(self, epoch: int, ranges: Iterable[ConsensusCodeRange]) -> Digest:
        """Merkle root over the heads of the given ledgers of ``epoch``."""
        ordered = sorted(ranges, key=lambda code_range: code_range.sort_key)
        heads = [self.head((epoch, code_range)) for code_range in ordered]
        return merkle_root(heads)

    # -- integrity ------------------------------------------------------------

    def check_integrity(self) -> list[str]:  # noqa: C901
        """Recompute every chain; returns a description of each problem found."""
        problems: list[str] = []
        previous: GenesisBlock | None = None
        for genesis in self.genesis_chain:
            if previous is not None and genesis.prev_genesis != previous.block_hash():
                problems.append(f"genesis {genesis.epoch}: broken link to epoch {previous.epoch}")
            previous = genesis
        roots = {genesis.epoch: genesis.block_hash() for genesis in self.genesis_chain}
        fork_roots = {
            (record.epoch, half): record.root
            for record in self.forks
            for half in (record.first, record.second)
        }
        fork_roots.update(
            {(record.epoch, record.code_range): record.root for record in self.carries}
        )
        for key, ledger in self.ledgers.items():
            label = ledger_label(key)
            expected_root = fork_roots.get(key, roots.get(key[0]))
            if ledger.root != expected_root:
                problems.append(f"{label}: root does not match its genesis or fork point")
            expected = ledger.root
            for index, block in enumerate(ledger.blocks):
                if block.prev_hash != expected:
                    problems.append(f"{label}: block {index} does not link to its predecessor")
                if transactions_root(block.transactions) != block.tx_merkle_root:
                    problems.append(f"{label}: block {index} transaction root mismatch")
                if (
                    block.ledger_hashes is not None
                    and ledger_hashes_root(block.ledger_hashes) != block.ledger_merkle_root
                ):
                    problems.append(f"{label}: block {index} ledger-hash root mismatch")
                block_hash = block.block_hash()
                if block_hash != ledger.block_hashes[index]:
                    problems.append(f"{label}: block {index} hash changed")
                expected = block_hash
        return problems
