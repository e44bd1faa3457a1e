"""Epoch setup: interest collection, negotiation and genesis blocks."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, replace
from enum import Enum

from app.consensus.table import (
    ConsensusTable,
    EpochSchedule,
    NoValidatorsError,
    SetupStep,
    rank_candidates,
)
from app.core.encoding import Writer
from app.core.ranges import allocate_ranges
from app.core.types import (
    Approval,
    ConsensusCodeRange,
    GenesisBlock,
    GenesisEntry,
    ValidatorInterestTx,
)
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.hashing import Digest
from app.crypto.kwm import DEFAULT_DICTIONARY, KwmDictionary
from app.crypto.signing import KeyPair, PublicKey, SignatureScheme

logger = logging.getLogger(__name__)


class EpochAbortError(RuntimeError):
    """Raised when no view reaches the 66% majority during negotiation."""


class NotAuthorizedError(PermissionError):
    """Raised when a validator other than the genesis author builds the genesis."""


def approval_threshold_met(approvals: int, total: int) -> bool:
    """Strictly more than 66% of ``total``, evaluated in integers."""
    return total > 0 and approvals * 100 > 66 * total


# ---------------------------------------------------------------------------
# Interest collection
# ---------------------------------------------------------------------------


@dataclass(slots=True)
class InterestStats:
    """Counters of interest transactions dropped during collection."""

    accepted: int = 0
    late: int = 0
    bad_signature: int = 0
    uncertified: int = 0
    duplicate: int = 0
    wrong_epoch: int = 0
    reused_key: int = 0

    @property
    def sybil_rejected(self) -> int:
        return self.uncertified


def collect_interest(
    window: tuple[int, int],
    incoming: Iterable[tuple[int, ValidatorInterestTx]],
    registry: CertifiedKeyRegistry,
    scheme: SignatureScheme,
    *,
    epoch: int | None = None,
    stats: InterestStats | None = None,
) -> list[ValidatorInterestTx]:
    """Keep interest transactions that arrived in ``window`` and check out.

    ``incoming`` yields ``(arrival_time, tvi)`` pairs. Late, unsigned,
    uncertified and duplicate applications are dropped and counted.
    """
    stats = stats if stats is not None else InterestStats()
    start, end = window
    accepted: dict[PublicKey, ValidatorInterestTx] = {}
    for arrival, tvi in incoming:
        if not start <= arrival < end:
            stats.late += 1
            continue
        if epoch is not None and tvi.epoch != epoch:
            stats.wrong_epoch += 1
            continue
        if not tvi.verify(scheme):
            stats.bad_signature += 1
            continue
        if not registry.is_certified(tvi.pk):
            stats.uncertified += 1
            logger.debug("Dropped interest from uncertified key")
            continue
        if tvi.pk in accepted:
            stats.duplicate += 1
            continue
        accepted[tvi.pk] = tvi
        stats.accepted += 1
    return list(accepted.values())


# ---------------------------------------------------------------------------
# Negotiation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TableView:
    """What one validator believes after ranking: its range and the total."""

    interest: ValidatorInterestTx
    code_range: ConsensusCodeRange | None
    total: int

    @property
    def sender(self) -> PublicKey:
        return self.interest.pk

    def to_bytes(self) -> bytes:
        writer = Writer().str_("view")
        self.interest.write(writer)
        if self.code_range is None:
            writer.bool_(False)
        else:
            self.code_range.write(writer.bool_(True))
        return writer.int_(self.total).getvalue()


def view_of(table: ConsensusTable, interest: ValidatorInterestTx) -> TableView:
    ranges = table.ranges_of(interest.pk)
    return TableView(interest, ranges[0] if ranges else None, len(table.entries))


def _consistent(view: TableView) -> bool:
    if view.code_range is None or view.total < 1:
        return False
    return view.code_range in allocate_ranges(view.total)


def negotiate_table(
    mine: ConsensusTable,
    peers_views: Sequence[TableView],
    dictionary: KwmDictionary = DEFAULT_DICTIONARY,
) -> ConsensusTable:
    """Confirm or correct ``mine`` against the views of the other validators.

    Validators are counted over the union of view senders and the keys in
    ``mine``. The largest group of views that agree on the total and claim a
    range consistent with the even partition must exceed 66% of that union.
    If its total matches ``mine`` the table is confirmed; otherwise the union
    of senders is re-ranked into the majority's table.

    Raises
    ------
    EpochAbortError
        If no group reaches the majority.
    """
    latest: dict[PublicKey, TableView] = {}
    for view in peers_views:
        latest[view.sender] = view
    union = list(dict.fromkeys([*mine.pks(), *latest]))
    groups: dict[int, list[PublicKey]] = {}
    for sender, view in latest.items():
        if _consistent(view):
            groups.setdefault(view.total, []).append(sender)
    if not groups:
        msg = f"No consistent view for epoch {mine.epoch}"
        raise EpochAbortError(msg)
    total, supporters = max(groups.items(), key=lambda item: (len(item[1]), -item[0]))
    if not approval_threshold_met(len(supporters), len(union)):
        msg = (
            f"Epoch {mine.epoch}: best view (total={total}) has {len(supporters)} of "
            f"{len(union)} validators, not more than 66%"
        )
        raise EpochAbortError(msg)
    confirmations = tuple(sorted(supporters))
    if total == len(mine.entries):
        return replace(mine, confirmations=confirmations)
    logger.warning(
        "Epoch %d: local table of %d entries overruled by majority total %d",
        mine.epoch,
        len(mine.entries),
        total,
    )
    candidates = [view.interest for view in latest.values()]
    adopted = rank_candidates(candidates, dictionary, epoch=mine.epoch)
    if len(adopted.entries) != total:
        logger.warning(
            "Epoch %d: re-ranked %d senders while the majority reported %d",
            mine.epoch,
            len(adopted.entries),
            total,
        )
    return replace(adopted, confirmations=confirmations)


# ---------------------------------------------------------------------------
# Genesis blocks
# ---------------------------------------------------------------------------


class GenesisRejection(Enum):
    STRUCTURE = "structure"
    NULL_RULE_VIOLATION = "null-rule-violation"
    BAD_SIGNATURE = "bad-signature"
    INSUFFICIENT_APPROVALS = "insufficient-approvals"


@dataclass(frozen=True, slots=True)
class GenesisVerdict:
    accepted: bool
    reason: GenesisRejection | None = None
    detail: str = ""

    @classmethod
    def reject(cls, reason: GenesisRejection, detail: str) -> GenesisVerdict:
        return cls(False, reason, detail)


def build_genesis_block(
    table: ConsensusTable,
    prev_epoch: ConsensusTable | None,
    ledger_heads: Mapping[PublicKey, Digest],
    *,
    caller: KeyPair,
    scheme: SignatureScheme,
    timestamp: int,
    prev_genesis: Digest | None = None,
) -> GenesisBlock:
    """Build the genesis block of ``table.epoch`` (unapproved).

    ``ledger_heads`` maps each previous-epoch key to the closing hash of its
    ledgers. Continuing validators are found through the ``prev_pk`` link
    of their fresh key; previous validators without a successor become
    departing entries.

    Raises
    ------
    NotAuthorizedError
        If ``caller`` is not the highest-KWM validator of ``table``.
    """
    if caller.public != table.genesis_author:
        msg = f"Only the highest-KWM validator may build the genesis of epoch {table.epoch}"
        raise NotAuthorizedError(msg)
    previous = set(prev_epoch.members()) if prev_epoch is not None else set()
    continuing: set[PublicKey] = set()
    entries: list[GenesisEntry] = []
    for entry in table.entries:
        hash_ledger = None
        prev_pk = entry.prev_pk if entry.prev_pk in previous else None
        if prev_pk is not None:
            hash_ledger = ledger_heads[prev_pk]
            continuing.add(prev_pk)
        entries.append(
            GenesisEntry(
                pk=entry.pk,
                code_range=entry.code_range,
                sign=entry.interest_sign,
                hash_ledger=hash_ledger,
                prev_pk=prev_pk,
            )
        )
    if prev_epoch is not None:
        for pk in prev_epoch.members():
            if pk in continuing:
                continue
            entries.append(GenesisEntry(pk, None, None, ledger_heads[pk]))
    return GenesisBlock(
        epoch=table.epoch,
        total_val=len(table.entries),
        entries=tuple(entries),
        prev_genesis=prev_genesis,
        author_pk=caller.public,
        timestamp=timestamp,
    )


def approve_genesis(genesis: GenesisBlock, keypair: KeyPair, scheme: SignatureScheme) -> Approval:
    message = GenesisBlock.approval_message(genesis.block_hash())
    return Approval(keypair.public, scheme.sign(keypair, message))


def check_genesis_structure(  # noqa: C901
    genesis: GenesisBlock,
    table: ConsensusTable,
    scheme: SignatureScheme,
    prev_epoch: ConsensusTable | None = None,
) -> GenesisVerdict:
    """Every check of :func:`validate_genesis_block` except the approvals."""
    current = genesis.current_entries()
    expected = table.assignments()
    if genesis.epoch != table.epoch or genesis.total_val != len(table.entries):
        return GenesisVerdict.reject(
            GenesisRejection.STRUCTURE, "epoch or validator count differs from the table"
        )
    if [(entry.pk, entry.code_range) for entry in current] != expected:
        return GenesisVerdict.reject(
            GenesisRejection.STRUCTURE, "current entries differ from the table"
        )
    if genesis.author_pk != table.genesis_author:
        return GenesisVerdict.reject(GenesisRejection.STRUCTURE, "author is not the top validator")
    for entry in genesis.entries:
        if entry.departing:
            if entry.hash_ledger is None or entry.sign is not None:
                return GenesisVerdict.reject(
                    GenesisRejection.NULL_RULE_VIOLATION, "departing entry without ledger hash"
                )
        elif (entry.prev_pk is None) != (entry.hash_ledger is None):
            return GenesisVerdict.reject(
                GenesisRejection.NULL_RULE_VIOLATION,
                "ledger hash must be null exactly for new validators",
            )
    if prev_epoch is not None:
        previous = prev_epoch.members()
        linked = {entry.prev_pk for entry in current if entry.prev_pk is not None}
        if not linked <= set(previous):
            return GenesisVerdict.reject(
                GenesisRejection.NULL_RULE_VIOLATION, "continuing entry links an unknown key"
            )
        departing = [entry.pk for entry in genesis.departing_entries()]
        if departing != [pk for pk in previous if pk not in linked]:
            return GenesisVerdict.reject(
                GenesisRejection.STRUCTURE, "departing entries do not match the previous epoch"
            )
    for entry in current:
        if entry.sign is None:
            return GenesisVerdict.reject(GenesisRejection.BAD_SIGNATURE, "entry without signature")
        content = ValidatorInterestTx.content(genesis.epoch, entry.pk, entry.prev_pk)
        if not scheme.verify(entry.pk, content, entry.sign):
            return GenesisVerdict.reject(
                GenesisRejection.BAD_SIGNATURE, "entry signature does not verify"
            )
    return GenesisVerdict(True)


def validate_genesis_block(
    genesis: GenesisBlock,
    table: ConsensusTable,
    scheme: SignatureScheme,
    prev_epoch: ConsensusTable | None = None,
) -> GenesisVerdict:
    """Accept ``genesis`` iff it is well formed and approved by > 66% of ``table``."""
    verdict = check_genesis_structure(genesis, table, scheme, prev_epoch)
    if not verdict.accepted:
        return verdict
    members = set(table.pks())
    message = GenesisBlock.approval_message(genesis.block_hash())
    approvers: set[PublicKey] = set()
    for approval in genesis.approvals:
        if approval.pk not in members:
            return GenesisVerdict.reject(
                GenesisRejection.BAD_SIGNATURE, "approval from a key outside the table"
            )
        if not scheme.verify(approval.pk, message, approval.sign):
            return GenesisVerdict.reject(
                GenesisRejection.BAD_SIGNATURE, "approval signature does not verify"
            )
        approvers.add(approval.pk)
    if not approval_threshold_met(len(approvers), len(members)):
        return GenesisVerdict.reject(
            GenesisRejection.INSUFFICIENT_APPROVALS,
            f"{len(approvers)} of {len(members)} approvals",
        )
    return GenesisVerdict(True)


# ---------------------------------------------------------------------------
# Reformation
# ---------------------------------------------------------------------------


def reform_validators(
    now: int,
    schedule: EpochSchedule,
    prev_table: ConsensusTable,
    incoming: Iterable[tuple[int, ValidatorInterestTx]],
    *,
    registry: CertifiedKeyRegistry,
    scheme: SignatureScheme,
    dictionary: KwmDictionary = DEFAULT_DICTIONARY,
    views: Sequence[TableView] | None = None,
    stats: InterestStats | None = None,
) -> ConsensusTable:
    """Select the validators of the epoch following ``prev_table``.

    ``now`` must be the start of the next epoch's setup window. Applications
    reusing a key of the previous epoch are discarded. With no valid
    application the previous table is carried over for one more epoch. When
    ``views`` are supplied the ranked table is negotiated against them.

    Raises
    ------
    EpochAbortError
        Propagated from :func:`negotiate_table`.
    """
    epoch = prev_table.epoch + 1
    if now != schedule.setup_start(epoch):
        msg = f"Reformation for epoch {epoch} starts at {schedule.setup_start(epoch)}, not {now}"
        raise ValueError(msg)
    stats = stats if stats is not None else InterestStats()
    window = schedule.step_window(epoch, SetupStep.INTEREST)
    collected = collect_interest(window, incoming, registry, scheme, epoch=epoch, stats=stats)
    used = set(prev_table.members())
    fresh = []
    for tvi in collected:
        if tvi.pk in used:
            stats.reused_key += 1
            logger.info("Discarded interest reusing a key of epoch %d", prev_table.epoch)
            continue
        fresh.append(tvi)
    try:
        table = rank_candidates(fresh, dictionary, epoch=epoch)
    except NoValidatorsError:
        logger.warning(
            "No valid interest for epoch %d; keeping the validators of epoch %d",
            epoch,
            prev_table.epoch,
        )
        return replace(prev_table, epoch=epoch, carried=True)
    if views is not None:
        table = negotiate_table(table, views, dictionary)
    return table
