from __future__ import annotations

import random

import pytest

from app.consensus.table import (
    EpochSchedule,
    NoValidatorsError,
    SetupStep,
    candidate_score,
    rank_candidates,
)
from app.core.ranges import allocate_ranges, split_range
from app.core.types import ValidatorInterestTx
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.signing import MacScheme
from tests.helpers import make_epoch


def _interests(scheme: MacScheme, count: int, epoch: int = 1) -> list[ValidatorInterestTx]:
    rng = random.Random(count)
    return [ValidatorInterestTx.create(scheme, scheme.generate(rng), epoch) for _ in range(count)]


def test_ranking_is_descending_with_hash_tie_break(scheme: MacScheme) -> None:
    table = rank_candidates(_interests(scheme, 12))
    keys = [(-entry.kwm, entry.encoded_hash) for entry in table.entries]
    assert keys == sorted(keys)
    assert table.ranges() == allocate_ranges(12)
    assert table.entries[0].kwm == candidate_score(table.entries[0].pk)[0]


def test_ranking_ignores_arrival_order(scheme: MacScheme) -> None:
    interests = _interests(scheme, 8)
    shuffled = list(interests)
    random.Random(4).shuffle(shuffled)
    assert rank_candidates(interests).assignments() == rank_candidates(shuffled).assignments()


def test_backups_are_chained(scheme: MacScheme) -> None:
    table = rank_candidates(_interests(scheme, 5))
    for index, entry in enumerate(table.entries):
        assert entry.backup_pk == table.entries[(index + 1) % 5].pk


def test_single_validator_has_no_backup(scheme: MacScheme) -> None:
    table = rank_candidates(_interests(scheme, 1))
    assert table.entries[0].backup_pk is None
    assert str(table.entries[0].code_range) == "0-z"


def test_duplicate_keys_count_once(scheme: MacScheme) -> None:
    interests = _interests(scheme, 3)
    assert len(rank_candidates([*interests, interests[0]]).entries) == 3


def test_no_candidates(scheme: MacScheme) -> None:
    with pytest.raises(NoValidatorsError):
        rank_candidates([], epoch=1)


def test_owner_lookup_and_split(scheme: MacScheme, registry: CertifiedKeyRegistry) -> None:
    epoch = make_epoch(scheme, registry, 5)
    table = epoch.table
    entry = table.entries[1]
    assert table.owner_of(entry.code_range.low + "abc") == entry
    first, second = split_range(entry.code_range)
    newcomer = table.entries[4]
    amended = table.with_split(entry.code_range, first, second, newcomer)
    assert len(amended.entries) == 6
    assert amended.ranges_of(entry.pk) == [first]
    assert second in amended.ranges_of(newcomer.pk)
    with pytest.raises(KeyError):
        amended.with_split(entry.code_range, first, second, newcomer)


def test_owner_replacement_retires_old_key(
    scheme: MacScheme, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 3)
    table = epoch.table
    victim = table.entries[0]
    amended = table.with_owner(victim.code_range, table.entries[1])
    assert victim.pk not in amended.pks()
    assert victim.pk in amended.retired
    assert victim.pk in amended.members()


def test_schedule_defaults() -> None:
    schedule = EpochSchedule(10_000, 2_000)
    assert schedule.quarter == 500
    assert schedule.setup_start(1) == 0
    assert schedule.epoch_start(1) == 2_000
    assert schedule.epoch_start(2) == 12_000
    assert schedule.step_window(2, SetupStep.NEGOTIATION) == (11_000, 11_500)
    assert schedule.suppression_start(1) == 11_500
    assert schedule.epoch_at(1_999) == 0
    assert schedule.epoch_at(2_000) == 1
    assert schedule.epoch_at(11_999) == 1
    assert schedule.epoch_at(12_000) == 2


@pytest.mark.parametrize(("delta", "eth"), [(1_000, 1_000), (1_000, 0), (1_000, 6)])
def test_schedule_rejects_bad_windows(delta: int, eth: int) -> None:
    with pytest.raises(ValueError):
        EpochSchedule(delta, eth)
