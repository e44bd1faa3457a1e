from __future__ import annotations

from dataclasses import replace

import pytest

from app.core.types import SpendAuthorization, Transaction, Verdict
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.hashing import hash_content
from app.crypto.signing import MacScheme
from app.ledger.forest import LedgerForest
from app.ledger.verify import (
    ALREADY_SPENT,
    MISSING_AUTHORIZATION,
    NotResponsibleError,
    UnknownTransactionError,
    authorize_spend,
    verify_block,
)
from tests.helpers import Epoch, make_epoch, next_block, tx_in_range

NOW = 2_500
EXPIRY = 2_000


@pytest.fixture
def epoch(scheme: MacScheme, registry: CertifiedKeyRegistry) -> Epoch:
    return make_epoch(scheme, registry, 3)


@pytest.fixture
def forest(epoch: Epoch) -> LedgerForest:
    forest = LedgerForest()
    forest.open_epoch(epoch.genesis)
    return forest


@pytest.fixture
def funded(forest: LedgerForest, epoch: Epoch, scheme: MacScheme) -> Transaction:
    """An output committed in the first range."""
    keypair = epoch.keypair(0)
    code_range = epoch.table.entries[0].code_range
    tx = tx_in_range(scheme, keypair, code_range, 2_000)
    forest.append_block(next_block(scheme, keypair, forest, 1, code_range, [tx], timestamp=2_010))
    return tx


def test_valid_block_is_accepted(forest: LedgerForest, epoch: Epoch, scheme: MacScheme) -> None:
    keypair = epoch.keypair(1)
    code_range = epoch.table.entries[1].code_range
    txs = [tx_in_range(scheme, keypair, code_range, 2_100, salt=i * 1000) for i in range(3)]
    block = next_block(scheme, keypair, forest, 1, code_range, txs, timestamp=NOW)
    verdict = verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme)
    assert verdict.accepted
    assert verdict.tag == "accepted"


def test_block_for_someone_elses_range(
    forest: LedgerForest, epoch: Epoch, scheme: MacScheme
) -> None:
    code_range = epoch.table.entries[1].code_range
    block = next_block(scheme, epoch.keypair(0), forest, 1, code_range, [], timestamp=NOW)
    assert verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme).step == 1


def test_transaction_outside_range(forest: LedgerForest, epoch: Epoch, scheme: MacScheme) -> None:
    keypair = epoch.keypair(0)
    stray = tx_in_range(scheme, keypair, epoch.table.entries[2].code_range, 2_100)
    code_range = epoch.table.entries[0].code_range
    block = next_block(scheme, keypair, forest, 1, code_range, [stray], timestamp=NOW)
    verdict = verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme)
    assert verdict.tag == "step1"


def test_forged_header(forest: LedgerForest, epoch: Epoch, scheme: MacScheme) -> None:
    code_range = epoch.table.entries[0].code_range
    block = next_block(scheme, epoch.keypair(0), forest, 1, code_range, [], timestamp=NOW)
    forged = replace(block, validator_sign=b"\x00" * 32)
    assert verify_block(forged, epoch.table, forest, NOW, EXPIRY, scheme).step == 2


def test_ledger_vector_mismatch(forest: LedgerForest, epoch: Epoch, scheme: MacScheme) -> None:
    code_range = epoch.table.entries[0].code_range
    block = next_block(scheme, epoch.keypair(0), forest, 1, code_range, [], timestamp=NOW)
    tampered = replace(block, ledger_hashes=((code_range, hash_content(b"other")),))
    assert verify_block(tampered, epoch.table, forest, NOW, EXPIRY, scheme).step == 3
    compacted = block.compacted()
    assert verify_block(compacted, epoch.table, forest, NOW, EXPIRY, scheme).accepted


def test_expired_transaction(forest: LedgerForest, epoch: Epoch, scheme: MacScheme) -> None:
    keypair = epoch.keypair(0)
    code_range = epoch.table.entries[0].code_range
    old = tx_in_range(scheme, keypair, code_range, NOW - EXPIRY - 1)
    block = next_block(scheme, keypair, forest, 1, code_range, [old], timestamp=NOW)
    assert verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme).step == 4


def test_spend_needs_authorization(
    forest: LedgerForest, epoch: Epoch, scheme: MacScheme, funded: Transaction
) -> None:
    keypair = epoch.keypair(1)
    code_range = epoch.table.entries[1].code_range
    spend = tx_in_range(scheme, keypair, code_range, 2_200, input=funded.t_id)
    block = next_block(scheme, keypair, forest, 1, code_range, [spend], timestamp=NOW)
    verdict = verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme)
    assert (verdict.step, verdict.reason) == (5, MISSING_AUTHORIZATION)


def test_authorized_spend_is_accepted_once(
    forest: LedgerForest, epoch: Epoch, scheme: MacScheme, funded: Transaction
) -> None:
    keypair = epoch.keypair(1)
    code_range = epoch.table.entries[1].code_range
    spend = tx_in_range(scheme, keypair, code_range, 2_200, input=funded.t_id)
    again = tx_in_range(scheme, keypair, code_range, 2_201, input=funded.t_id)

    auth = authorize_spend(funded.t_id, forest, epoch.keypair(0), epoch.table, scheme, spend.t_id)
    refusal = authorize_spend(
        funded.t_id, forest, epoch.keypair(0), epoch.table, scheme, again.t_id
    )

    assert auth.approved
    assert refusal.verdict is Verdict.ALREADY_SPENT
    assert forest.spent_sidecar[funded.t_id].spender_id == spend.t_id
    block = next_block(
        scheme, keypair, forest, 1, code_range, [spend], timestamp=NOW, authorizations=[auth]
    )
    assert verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme).accepted


def test_authorizer_must_own_the_output(
    forest: LedgerForest, epoch: Epoch, scheme: MacScheme, funded: Transaction
) -> None:
    spender = hash_content(b"spender")
    with pytest.raises(NotResponsibleError):
        authorize_spend(funded.t_id, forest, epoch.keypair(1), epoch.table, scheme, spender)
    with pytest.raises(UnknownTransactionError):
        authorize_spend(
            hash_content(b"missing"), forest, epoch.keypair(0), epoch.table, scheme, spender
        )


def test_in_block_double_spend_yields_evidence(
    forest: LedgerForest, epoch: Epoch, scheme: MacScheme, funded: Transaction
) -> None:
    keypair = epoch.keypair(1)
    authorizer = epoch.keypair(0)
    code_range = epoch.table.entries[1].code_range
    first = tx_in_range(scheme, keypair, code_range, 2_200, input=funded.t_id)
    second = tx_in_range(scheme, keypair, code_range, 2_200, input=funded.t_id, salt=10**5)
    auths = [
        SpendAuthorization.create(scheme, authorizer, funded.t_id, tx.t_id, Verdict.APPROVED)
        for tx in (first, second)
    ]
    block = next_block(
        scheme, keypair, forest, 1, code_range, [first, second], timestamp=NOW, authorizations=auths
    )
    verdict = verify_block(block, epoch.table, forest, NOW, EXPIRY, scheme)
    assert (verdict.step, verdict.reason) == (5, ALREADY_SPENT)
    assert verdict.evidence is not None
    assert verdict.evidence.authorizer_pk == authorizer.public
