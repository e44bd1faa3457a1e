from __future__ import annotations

import random
from dataclasses import replace

import pytest

from app.core.encoding import DecodeError
from app.core.types import (
    Block,
    ConsensusCodeRange,
    SpendAuthorization,
    Transaction,
    ValidatorInterestTx,
    Verdict,
    full_range,
)
from app.crypto.hashing import Digest, MalformedInputError, hash_content
from app.crypto.signing import KeyPair, MacScheme


@pytest.fixture
def keypair(scheme: MacScheme, rng: random.Random) -> KeyPair:
    return scheme.generate(rng)


def test_range_rules() -> None:
    with pytest.raises(ValueError, match="sorts after"):
        ConsensusCodeRange(1, "b", "a")
    with pytest.raises(ValueError, match="length"):
        ConsensusCodeRange(2, "a", "bb")
    with pytest.raises(MalformedInputError):
        ConsensusCodeRange(1, "-", "a")


def test_range_contains_and_covers() -> None:
    code_range = ConsensusCodeRange.parse("A-M")
    assert code_range.contains("G7x")
    assert not code_range.contains("N")
    assert not code_range.contains("")
    assert code_range.covers(ConsensusCodeRange.parse("B0-Cz"))
    assert not code_range.covers(ConsensusCodeRange.parse("L0-N0"))


def test_full_range() -> None:
    assert str(full_range(1)) == "0-z"
    assert full_range(2).size == 62 * 62


def test_transaction_verifies(scheme: MacScheme, keypair: KeyPair) -> None:
    tx = Transaction.create(scheme, keypair, 10, b"out")
    assert tx.verify(scheme)
    assert not replace(tx, timestamp=11).verify(scheme)
    assert not replace(tx, output=b"other").verify(scheme)


def test_negative_timestamp_is_rejected(scheme: MacScheme, keypair: KeyPair) -> None:
    with pytest.raises(ValueError, match=">= 0"):
        Transaction.create(scheme, keypair, -1, b"out")


def test_spend_and_plain_transactions_differ(scheme: MacScheme, keypair: KeyPair) -> None:
    plain = Transaction.create(scheme, keypair, 10, b"out")
    spend = Transaction.create(scheme, keypair, 10, b"out", input=plain.t_id)
    assert plain.t_id != spend.t_id
    assert spend.input == plain.t_id


def test_interest_links_previous_key(scheme: MacScheme, rng: random.Random) -> None:
    old = scheme.generate(rng)
    new = scheme.generate(rng)
    tvi = ValidatorInterestTx.create(scheme, new, 2, old)
    assert tvi.prev_pk == old.public
    assert tvi.verify(scheme)
    assert not replace(tvi, prev_sign=None).verify(scheme)


def test_spend_authorization_signature(scheme: MacScheme, keypair: KeyPair) -> None:
    auth = SpendAuthorization.create(
        scheme, keypair, Digest(hash_content(b"a")), Digest(hash_content(b"b")), Verdict.APPROVED
    )
    assert auth.approved
    assert auth.verify(scheme)
    assert not replace(auth, verdict=Verdict.ALREADY_SPENT).verify(scheme)


def test_block_hash_ignores_ledger_vector(scheme: MacScheme, keypair: KeyPair) -> None:
    code_range = full_range(1)
    txs = [Transaction.create(scheme, keypair, t, b"o") for t in range(3)]
    block = Block.assemble(
        scheme,
        keypair,
        epoch=1,
        height=1,
        prev_hash=hash_content(b"root"),
        code_range=code_range,
        ledger_hashes=((code_range, hash_content(b"root")),),
        transactions=txs,
        timestamp=5,
    )
    assert scheme.verify(keypair.public, block.header_bytes(), block.validator_sign)
    assert block.compacted().block_hash() == block.block_hash()
    assert Block.from_bytes(block.to_bytes()) == block


def test_truncated_block_reports_offset(scheme: MacScheme, keypair: KeyPair) -> None:
    block = Block.assemble(
        scheme,
        keypair,
        epoch=1,
        height=1,
        prev_hash=hash_content(b"root"),
        code_range=full_range(1),
        ledger_hashes=None,
        transactions=[],
        timestamp=0,
    )
    data = block.to_bytes()
    with pytest.raises(DecodeError) as info:
        Block.from_bytes(data[:-3])
    assert info.value.offset <= len(data)
