from __future__ import annotations

import random

import pytest

from app.adversary import brute_force_double_spend, expected_attempts, target_range
from app.core.ranges import allocate_ranges
from app.core.types import ConsensusCodeRange, Transaction
from app.crypto.hashing import digest_to_base62
from app.crypto.signing import KeyPair, MacScheme


@pytest.fixture
def keypair(scheme: MacScheme, rng: random.Random) -> KeyPair:
    return scheme.generate(rng)


@pytest.mark.parametrize(
    ("j", "expected"), [(5, 4.67), (10, 8.67), (20, 15.2), (50, 30.4)]
)
def test_expected_attempts(j: int, expected: float) -> None:
    assert target_range(j, "first") == allocate_ranges(j)[0]
    assert expected_attempts(target_range(j, "first")) == pytest.approx(expected, rel=0.01)


@pytest.mark.parametrize("j", [5, 10, 20])
def test_middle_target_costs_about_j_attempts(j: int) -> None:
    assert expected_attempts(target_range(j)) == pytest.approx(j, rel=0.1)


def test_single_symbol_ranges_cannot_cost_j_attempts() -> None:
    # With 50 ranges over 62 symbols every range holds one or two symbols.
    costs = {round(expected_attempts(code_range), 1) for code_range in allocate_ranges(50)[:-1]}
    assert costs == {30.4, 60.7}
    assert expected_attempts(target_range(50)) == pytest.approx(60.7, rel=0.01)


def test_unknown_target_position() -> None:
    with pytest.raises(ValueError, match="last"):
        target_range(5, "last")


def test_search_lands_in_target_range(scheme: MacScheme, keypair: KeyPair) -> None:
    target = allocate_ranges(5)[2]
    base = Transaction.create(scheme, keypair, 10_000, b"pay")
    result = brute_force_double_spend(
        target, base, 2_000, 2_001, scheme=scheme, keypair=keypair
    )
    assert result.success
    assert result.transaction is not None
    assert target.contains(digest_to_base62(result.transaction.t_id))
    assert result.transaction.verify(scheme)
    assert 8_000 <= result.transaction.timestamp <= 10_000
    assert result.attempts == 10_000 - result.transaction.timestamp + 1


def test_search_respects_the_window(scheme: MacScheme, keypair: KeyPair) -> None:
    unreachable = ConsensusCodeRange(1, "z", "z")
    base = Transaction.create(scheme, keypair, 100, b"pay")
    result = brute_force_double_spend(
        unreachable, base, 40, 1_000, scheme=scheme, keypair=keypair
    )
    assert not result.success
    assert result.attempts == 41


def test_search_respects_the_budget(scheme: MacScheme, keypair: KeyPair) -> None:
    unreachable = ConsensusCodeRange(1, "z", "z")
    base = Transaction.create(scheme, keypair, 100, b"pay")
    result = brute_force_double_spend(unreachable, base, 100, 7, scheme=scheme, keypair=keypair)
    assert result.attempts == 7


def test_search_never_goes_below_zero(scheme: MacScheme, keypair: KeyPair) -> None:
    unreachable = ConsensusCodeRange(1, "z", "z")
    base = Transaction.create(scheme, keypair, 3, b"pay")
    result = brute_force_double_spend(unreachable, base, 100, 1_000, scheme=scheme, keypair=keypair)
    assert result.attempts == 4
