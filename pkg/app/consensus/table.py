"""Consensus table, epoch schedule and candidate ranking."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, replace
from enum import Enum

from app.core.encoding import Writer
from app.core.ranges import allocate_ranges, prefix_length
from app.core.types import ConsensusCodeRange, GenesisBlock, ValidatorInterestTx
from app.crypto.hashing import digest_to_base62, hash_content
from app.crypto.kwm import DEFAULT_DICTIONARY, KwmDictionary, kwm
from app.crypto.signing import PublicKey, Signature

logger = logging.getLogger(__name__)


class NoValidatorsError(RuntimeError):
    """Raised when an epoch has no candidate to rank."""


class SetupStep(Enum):
    """The four equal sub-phases of the setup window."""

    INTEREST = 1
    RANKING = 2
    NEGOTIATION = 3
    GENESIS = 4


@dataclass(frozen=True, slots=True)
class EpochSchedule:
    """Timeline of epochs in logical milliseconds.

    Epoch ``e`` commits from ``eth + (e - 1) * delta``; its setup runs during
    the ``eth`` milliseconds before that, split into four sub-phases.
    """

    delta: int
    eth: int

    def __post_init__(self) -> None:
        if not 0 < self.eth < self.delta:
            msg = f"Setup window {self.eth} must be positive and shorter than epoch {self.delta}"
            raise ValueError(msg)
        if self.eth % 4:
            msg = f"Setup window {self.eth} must split into four equal sub-phases"
            raise ValueError(msg)

    @property
    def quarter(self) -> int:
        return self.eth // 4

    def epoch_start(self, epoch: int) -> int:
        return self.eth + (epoch - 1) * self.delta

    def setup_start(self, epoch: int) -> int:
        return self.epoch_start(epoch) - self.eth

    def step_window(self, epoch: int, step: SetupStep) -> tuple[int, int]:
        start = self.setup_start(epoch) + (step.value - 1) * self.quarter
        return start, start + self.quarter

    def suppression_start(self, epoch: int) -> int:
        """Time from which validators of ``epoch`` stop emitting blocks."""
        return self.step_window(epoch + 1, SetupStep.GENESIS)[0]

    def epoch_at(self, now: int) -> int:
        """Epoch whose commitment period contains ``now`` (0 before the first)."""
        if now < self.eth:
            return 0
        return (now - self.eth) // self.delta + 1


@dataclass(frozen=True, slots=True)
class TableEntry:
    pk: PublicKey
    kwm: int
    code_range: ConsensusCodeRange
    backup_pk: PublicKey | None
    encoded_hash: str
    prev_pk: PublicKey | None = None
    interest_sign: Signature | None = None


def candidate_score(pk: PublicKey, dictionary: KwmDictionary = DEFAULT_DICTIONARY) -> tuple[int, str]:
    """KWM of the encoded key hash together with the encoding (the tie-break)."""
    encoded = digest_to_base62(hash_content(pk))
    return kwm(encoded, dictionary), encoded


def ranking_key(pk: PublicKey, dictionary: KwmDictionary = DEFAULT_DICTIONARY) -> tuple[int, str]:
    """Sort key putting higher KWM first and lower encoded hash first on ties."""
    weight, encoded = candidate_score(pk, dictionary)
    return -weight, encoded


@dataclass(frozen=True, slots=True)
class ConsensusTable:
    """Range assignment of one epoch.

    A freshly ranked table lists entries by descending KWM with ranges from
    :func:`allocate_ranges` in order. Mid-epoch amendments (splits, takeovers,
    reassignments) produce new tables; keys that lost every range are kept
    in ``retired`` so the epoch's full membership stays known.
    """

    epoch: int
    entries: tuple[TableEntry, ...]
    k: int
    confirmations: tuple[PublicKey, ...] = ()
    retired: tuple[PublicKey, ...] = ()
    carried: bool = False

    @property
    def genesis_author(self) -> PublicKey:
        return self.entries[0].pk

    def pks(self) -> list[PublicKey]:
        return list(dict.fromkeys(entry.pk for entry in self.entries))

    def members(self) -> list[PublicKey]:
        return list(dict.fromkeys([*self.pks(), *self.retired]))

    def ranges(self) -> list[ConsensusCodeRange]:
        return [entry.code_range for entry in self.entries]

    def assignments(self) -> list[tuple[PublicKey, ConsensusCodeRange]]:
        return [(entry.pk, entry.code_range) for entry in self.entries]

    def ranges_of(self, pk: PublicKey) -> list[ConsensusCodeRange]:
        return [entry.code_range for entry in self.entries if entry.pk == pk]

    def entry_for_range(self, code_range: ConsensusCodeRange) -> TableEntry | None:
        for entry in self.entries:
            if entry.code_range == code_range:
                return entry
        return None

    def entry_for_pk(self, pk: PublicKey) -> TableEntry | None:
        for entry in self.entries:
            if entry.pk == pk:
                return entry
        return None

    def owner_of(self, code: str) -> TableEntry | None:
        """Entry whose range contains ``code`` (a full encoded digest works)."""
        for entry in self.entries:
            if entry.code_range.contains(code):
                return entry
        return None

    def with_split(
        self,
        parent: ConsensusCodeRange,
        first: ConsensusCodeRange,
        second: ConsensusCodeRange,
        newcomer: TableEntry,
    ) -> ConsensusTable:
        """Give ``first`` to the parent's owner and ``second`` to ``newcomer``."""
        entries: list[TableEntry] = []
        for entry in self.entries:
            if entry.code_range != parent:
                entries.append(entry)
                continue
            entries.append(replace(entry, code_range=first, backup_pk=newcomer.pk))
            entries.append(replace(newcomer, code_range=second, backup_pk=entry.backup_pk))
        if len(entries) == len(self.entries):
            msg = f"Range {parent} is not part of epoch {self.epoch}"
            raise KeyError(msg)
        return replace(self, entries=tuple(entries))

    def with_owner(self, code_range: ConsensusCodeRange, newcomer: TableEntry) -> ConsensusTable:
        """Hand ``code_range`` to ``newcomer``; the previous key may become retired."""
        current = self.entry_for_range(code_range)
        if current is None:
            msg = f"Range {code_range} is not part of epoch {self.epoch}"
            raise KeyError(msg)
        entries = tuple(
            replace(newcomer, code_range=code_range, backup_pk=entry.backup_pk)
            if entry.code_range == code_range
            else entry
            for entry in self.entries
        )
        amended = replace(self, entries=entries)
        if current.pk not in amended.pks() and current.pk not in self.retired:
            amended = replace(amended, retired=(*self.retired, current.pk))
        return amended

    def same_assignment(self, other: ConsensusTable) -> bool:
        return self.epoch == other.epoch and self.assignments() == other.assignments()

    def to_bytes(self) -> bytes:
        writer = Writer().str_("table").int_(self.epoch).int_(self.k).count(len(self.entries))
        for entry in self.entries:
            writer.bytes_(entry.pk).int_(entry.kwm)
            entry.code_range.write(writer)
            writer.optional_bytes(entry.backup_pk).optional_bytes(entry.prev_pk)
        return writer.getvalue()

    @classmethod
    def from_genesis(
        cls, genesis: GenesisBlock, dictionary: KwmDictionary = DEFAULT_DICTIONARY
    ) -> ConsensusTable:
        """Rebuild the table recorded in ``genesis`` (entry order is table order)."""
        current = genesis.current_entries()
        entries: list[TableEntry] = []
        for index, entry in enumerate(current):
            assert entry.code_range is not None
            weight, encoded = candidate_score(entry.pk, dictionary)
            backup = current[(index + 1) % len(current)].pk if len(current) > 1 else None
            entries.append(
                TableEntry(
                    pk=entry.pk,
                    kwm=weight,
                    code_range=entry.code_range,
                    backup_pk=backup,
                    encoded_hash=encoded,
                    prev_pk=entry.prev_pk,
                    interest_sign=entry.sign,
                )
            )
        return cls(
            epoch=genesis.epoch,
            entries=tuple(entries),
            k=prefix_length(max(1, genesis.total_val)),
            confirmations=tuple(approval.pk for approval in genesis.approvals),
        )


def _dedupe(candidates: Iterable[ValidatorInterestTx]) -> list[ValidatorInterestTx]:
    seen: dict[PublicKey, ValidatorInterestTx] = {}
    for tvi in candidates:
        seen.setdefault(tvi.pk, tvi)
    return list(seen.values())


def rank_candidates(
    candidates: Sequence[ValidatorInterestTx],
    dictionary: KwmDictionary = DEFAULT_DICTIONARY,
    *,
    epoch: int | None = None,
    score: Callable[[PublicKey, KwmDictionary], tuple[int, str]] = candidate_score,
) -> ConsensusTable:
    """Order candidates by descending KWM and assign ranges in that order.

    ``score`` maps a key to its KWM and encoded hash. Ties are broken by the
    ascending encoded hash. Each entry's backup is the next entry, wrapping
    around to the first.

    Raises
    ------
    NoValidatorsError
        If ``candidates`` is empty.
    """
    unique = _dedupe(candidates)
    if not unique:
        msg = "No validator candidates; the epoch cannot start"
        raise NoValidatorsError(msg)
    if epoch is None:
        epoch = unique[0].epoch
    scored = sorted(
        ((score(tvi.pk, dictionary), tvi) for tvi in unique),
        key=lambda item: (-item[0][0], item[0][1]),
    )
    ranges = allocate_ranges(len(scored))
    count = len(scored)
    entries = []
    for index, ((weight, encoded), tvi) in enumerate(scored):
        backup = scored[(index + 1) % count][1].pk if count > 1 else None
        entries.append(
            TableEntry(
                pk=tvi.pk,
                kwm=weight,
                code_range=ranges[index],
                backup_pk=backup,
                encoded_hash=encoded,
                prev_pk=tvi.prev_pk,
                interest_sign=tvi.sign,
            )
        )
    logger.debug("Ranked %d candidate(s) for epoch %d", count, epoch)
    return ConsensusTable(epoch=epoch, entries=tuple(entries), k=ranges[0].k)
