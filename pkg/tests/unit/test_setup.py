from __future__ import annotations

import random
from dataclasses import replace

import pytest

from app.consensus.setup import (
    EpochAbortError,
    GenesisRejection,
    InterestStats,
    NotAuthorizedError,
    approval_threshold_met,
    approve_genesis,
    build_genesis_block,
    check_genesis_structure,
    collect_interest,
    negotiate_table,
    reform_validators,
    validate_genesis_block,
    view_of,
)
from app.consensus.table import EpochSchedule, rank_candidates
from app.core.types import ValidatorInterestTx
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.hashing import hash_content
from app.crypto.signing import MacScheme
from tests.helpers import make_epoch


@pytest.mark.parametrize(
    ("approvals", "total", "met"),
    [(4, 5, True), (3, 5, False), (67, 100, True), (66, 100, False), (1, 1, True), (0, 0, False)],
)
def test_approval_threshold(approvals: int, total: int, met: bool) -> None:
    assert approval_threshold_met(approvals, total) is met


def test_collect_interest_filters_and_counts(
    scheme: MacScheme, rng: random.Random, registry: CertifiedKeyRegistry
) -> None:
    keys = [scheme.generate(rng) for _ in range(4)]
    for index, keypair in enumerate(keys[:3]):
        registry.issue(f"v{index}", keypair.public)
    good = ValidatorInterestTx.create(scheme, keys[0], 1)
    late = ValidatorInterestTx.create(scheme, keys[1], 1)
    forged = replace(ValidatorInterestTx.create(scheme, keys[2], 1), sign=b"\x00" * 32)
    uncertified = ValidatorInterestTx.create(scheme, keys[3], 1)
    wrong_epoch = ValidatorInterestTx.create(scheme, keys[0], 2)
    stats = InterestStats()
    accepted = collect_interest(
        (0, 500),
        [(10, good), (600, late), (20, forged), (30, uncertified), (40, good), (50, wrong_epoch)],
        registry,
        scheme,
        epoch=1,
        stats=stats,
    )
    assert accepted == [good]
    assert (stats.accepted, stats.late, stats.bad_signature) == (1, 1, 1)
    assert (stats.uncertified, stats.duplicate, stats.wrong_epoch) == (1, 1, 1)


def test_negotiation_confirms_matching_views(
    scheme: MacScheme, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 5)
    views = [view_of(epoch.table, tvi) for tvi in epoch.interests]
    agreed = negotiate_table(epoch.table, views)
    assert agreed.same_assignment(epoch.table)
    assert len(agreed.confirmations) == 5


def test_negotiation_aborts_without_majority(
    scheme: MacScheme, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 5)
    views = [view_of(epoch.table, tvi) for tvi in epoch.interests[:3]]
    with pytest.raises(EpochAbortError, match="not more than 66%"):
        negotiate_table(epoch.table, views)


def test_negotiation_adopts_majority_table(
    scheme: MacScheme, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 5)
    missing_one = rank_candidates(epoch.interests[1:], epoch=1)
    views = [view_of(epoch.table, tvi) for tvi in epoch.interests]
    adopted = negotiate_table(missing_one, views)
    assert adopted.assignments() == epoch.table.assignments()


def test_only_the_top_validator_builds_genesis(
    scheme: MacScheme, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 3)
    with pytest.raises(NotAuthorizedError):
        build_genesis_block(
            epoch.table, None, {}, caller=epoch.keypair(1), scheme=scheme, timestamp=0
        )


def test_genesis_needs_more_than_two_thirds(
    scheme: MacScheme, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 5)
    assert validate_genesis_block(epoch.genesis, epoch.table, scheme).accepted
    four = epoch.genesis.with_approvals(epoch.genesis.approvals[:4])
    assert validate_genesis_block(four, epoch.table, scheme).accepted
    three = epoch.genesis.with_approvals(epoch.genesis.approvals[:3])
    verdict = validate_genesis_block(three, epoch.table, scheme)
    assert not verdict.accepted
    assert verdict.reason is GenesisRejection.INSUFFICIENT_APPROVALS


def test_genesis_rejects_outside_approvals(
    scheme: MacScheme, rng: random.Random, registry: CertifiedKeyRegistry
) -> None:
    epoch = make_epoch(scheme, registry, 3)
    outsider = approve_genesis(epoch.genesis, scheme.generate(rng), scheme)
    tampered = epoch.genesis.with_approvals([*epoch.genesis.approvals, outsider])
    verdict = validate_genesis_block(tampered, epoch.table, scheme)
    assert verdict.reason is GenesisRejection.BAD_SIGNATURE


def test_second_genesis_links_and_departures(
    scheme: MacScheme, rng: random.Random, registry: CertifiedKeyRegistry
) -> None:
    first = make_epoch(scheme, registry, 3)
    old = [first.keypair(index) for index in range(3)]
    fresh = [scheme.generate(rng) for _ in range(3)]
    for index, keypair in enumerate(fresh):
        registry.issue(f"n{index}", keypair.public)
    interests = [
        ValidatorInterestTx.create(scheme, fresh[0], 2, old[0]),
        ValidatorInterestTx.create(scheme, fresh[1], 2, old[1]),
        ValidatorInterestTx.create(scheme, fresh[2], 2),
    ]
    table = rank_candidates(interests, epoch=2)
    heads = {keypair.public: hash_content(keypair.public) for keypair in old}
    author = next(k for k in fresh if k.public == table.genesis_author)
    genesis = build_genesis_block(
        table,
        first.table,
        heads,
        caller=author,
        scheme=scheme,
        timestamp=12_000,
        prev_genesis=first.genesis.block_hash(),
    )
    by_pk = {entry.pk: entry for entry in genesis.entries}
    assert by_pk[fresh[0].public].hash_ledger == heads[old[0].public]
    assert by_pk[fresh[2].public].hash_ledger is None
    departing = genesis.departing_entries()
    assert [entry.pk for entry in departing] == [old[2].public]
    assert departing[0].hash_ledger == heads[old[2].public]
    assert check_genesis_structure(genesis, table, scheme, first.table).accepted

    broken = tuple(
        replace(entry, hash_ledger=None) if entry.pk == fresh[0].public else entry
        for entry in genesis.entries
    )
    verdict = check_genesis_structure(replace(genesis, entries=broken), table, scheme, first.table)
    assert verdict.reason is GenesisRejection.NULL_RULE_VIOLATION


def test_reformation(scheme: MacScheme, rng: random.Random, registry: CertifiedKeyRegistry) -> None:
    schedule = EpochSchedule(10_000, 2_000)
    first = make_epoch(scheme, registry, 3)
    start = schedule.setup_start(2)
    reused = ValidatorInterestTx.create(scheme, first.keypair(0), 2)
    newcomer = scheme.generate(rng)
    registry.issue("n0", newcomer.public)
    stats = InterestStats()
    table = reform_validators(
        start,
        schedule,
        first.table,
        [(start + 1, reused), (start + 2, ValidatorInterestTx.create(scheme, newcomer, 2))],
        registry=registry,
        scheme=scheme,
        stats=stats,
    )
    assert table.epoch == 2
    assert table.pks() == [newcomer.public]
    assert stats.reused_key == 1

    carried = reform_validators(
        start, schedule, first.table, [], registry=registry, scheme=scheme
    )
    assert carried.carried
    assert carried.epoch == 2
    assert carried.pks() == first.table.pks()

    with pytest.raises(ValueError, match="starts at"):
        reform_validators(start + 1, schedule, first.table, [], registry=registry, scheme=scheme)
