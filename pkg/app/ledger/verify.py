"""Block verification and the spend-authorization protocol."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from app.consensus.table import ConsensusTable
from app.core.types import (
    Block,
    SpendAuthorization,
    Transaction,
    Verdict,
    ledger_hashes_root,
    transactions_root,
)
from app.crypto.hashing import Digest, digest_to_base62
from app.crypto.signing import KeyPair, PublicKey, SignatureScheme
from app.ledger.forest import LedgerForest, SpentFlag

logger = logging.getLogger(__name__)

MISSING_AUTHORIZATION = "missing-authorization"
ALREADY_SPENT = "already-spent"


class UnknownTransactionError(KeyError):
    """Raised when a spend targets an output the authorizer never committed."""

    def __init__(self, t_id: Digest) -> None:
        self.t_id = t_id
        super().__init__(f"Unknown transaction {digest_to_base62(t_id)[:12]}...")

    def __str__(self) -> str:
        return str(self.args[0])


class NotResponsibleError(PermissionError):
    """Raised when the authorizer's range does not hold the output's code."""


@dataclass(frozen=True, slots=True)
class DoubleSpendEvidence:
    """Two approvals by one authorizer of one output for different spenders."""

    t_out_id: Digest
    first: SpendAuthorization
    second: SpendAuthorization

    @property
    def authorizer_pk(self) -> PublicKey:
        return self.second.authorizer_pk


@dataclass(frozen=True, slots=True)
class BlockVerdict:
    accepted: bool
    step: int | None = None
    reason: str = ""
    evidence: DoubleSpendEvidence | None = None

    @property
    def tag(self) -> str:
        return "accepted" if self.accepted else f"step{self.step}"

    @classmethod
    def reject(
        cls, step: int, reason: str, evidence: DoubleSpendEvidence | None = None
    ) -> BlockVerdict:
        return cls(False, step, reason, evidence)


def _owns(table: ConsensusTable, block: Block) -> bool:
    return block.code_range in table.ranges_of(block.validator_pk)


def _check_spend(
    tx: Transaction,
    block: Block,
    table: ConsensusTable,
    forest: LedgerForest,
    in_block: dict[Digest, SpentFlag],
    scheme: SignatureScheme,
) -> BlockVerdict | SpendAuthorization:
    assert tx.input is not None
    owner = table.owner_of(digest_to_base62(tx.input))
    auth = next(
        (
            a
            for a in block.authorizations
            if a.t_out_id == tx.input and a.spender_id == tx.t_id
        ),
        None,
    )
    if auth is None or owner is None or auth.authorizer_pk != owner.pk or not auth.verify(scheme):
        return BlockVerdict.reject(5, MISSING_AUTHORIZATION)
    if not auth.approved:
        return BlockVerdict.reject(5, ALREADY_SPENT)
    flag = in_block.get(tx.input) or forest.spent_sidecar.get(tx.input)
    if flag is not None and flag.spender_id != tx.t_id:
        evidence = None
        earlier = flag.authorization
        if earlier.approved and earlier.authorizer_pk == auth.authorizer_pk:
            evidence = DoubleSpendEvidence(tx.input, earlier, auth)
        return BlockVerdict.reject(5, ALREADY_SPENT, evidence)
    return auth


def verify_block(  # noqa: C901
    block: Block,
    table: ConsensusTable,
    forest: LedgerForest,
    now: int,
    delta_exp: int,
    scheme: SignatureScheme,
) -> BlockVerdict:
    """Run the five verification steps in order and stop at the first failure.

    1. the block's range belongs to its validator and holds every tx code;
    2. header signature, transaction root and transaction signatures;
    3. ledger-hash root, when the vector is still present;
    4. every transaction timestamp lies in ``[now - delta_exp, now]``;
    5. every spend carries an approved authorization from the output's
       range owner and does not conflict with a known spent flag.

    The forest is only read.
    """
    if block.epoch != table.epoch or not _owns(table, block):
        return BlockVerdict.reject(1, "range is not assigned to the block's validator")
    for tx in block.transactions:
        if not block.code_range.contains(digest_to_base62(tx.t_id)):
            return BlockVerdict.reject(1, "transaction code outside the validator's range")

    if not scheme.verify(block.validator_pk, block.header_bytes(), block.validator_sign):
        return BlockVerdict.reject(2, "header signature does not verify")
    if transactions_root(block.transactions) != block.tx_merkle_root:
        return BlockVerdict.reject(2, "transaction merkle root mismatch")
    if not all(tx.verify(scheme) for tx in block.transactions):
        return BlockVerdict.reject(2, "transaction signature does not verify")

    if (
        block.ledger_hashes is not None
        and ledger_hashes_root(block.ledger_hashes) != block.ledger_merkle_root
    ):
        return BlockVerdict.reject(3, "ledger-hash merkle root mismatch")

    for tx in block.transactions:
        if not now - delta_exp <= tx.timestamp <= now:
            return BlockVerdict.reject(4, "transaction timestamp outside the validity window")

    # Spends earlier in the same block count as flagged.
    in_block: dict[Digest, SpentFlag] = {}
    for tx in block.transactions:
        if tx.input is None:
            continue
        checked = _check_spend(tx, block, table, forest, in_block, scheme)
        if isinstance(checked, BlockVerdict):
            return checked
        in_block.setdefault(tx.input, SpentFlag(tx.t_id, checked))
    return BlockVerdict(True)


def authorize_spend(
    t_out_id: Digest,
    forest: LedgerForest,
    authorizer: KeyPair,
    table: ConsensusTable,
    scheme: SignatureScheme,
    spender_id: Digest,
) -> SpendAuthorization:
    """Answer a spend request for ``t_out_id`` and set its spent flag.

    Only the first request is approved; every later one, whoever the
    spender, gets a signed already-spent answer. The flag lives in the
    forest's sidecar and never touches a block.

    Raises
    ------
    UnknownTransactionError
        If ``t_out_id`` is not in ``forest``.
    NotResponsibleError
        If ``authorizer`` does not own the range holding the output's code.
    """
    if not forest.has_transaction(t_out_id):
        raise UnknownTransactionError(t_out_id)
    owner = table.owner_of(digest_to_base62(t_out_id))
    if owner is None or owner.pk != authorizer.public:
        msg = "Authorizer's range does not contain the output's consensus code"
        raise NotResponsibleError(msg)
    spent = t_out_id in forest.spent_sidecar or t_out_id not in forest.unspent_index
    verdict = Verdict.ALREADY_SPENT if spent else Verdict.APPROVED
    auth = SpendAuthorization.create(scheme, authorizer, t_out_id, spender_id, verdict)
    if not spent:
        forest.record_spend(t_out_id, SpentFlag(spender_id, auth))
    else:
        logger.debug("Refused second spend of %s", digest_to_base62(t_out_id)[:8])
    return auth
