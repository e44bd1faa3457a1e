"""Builders shared by the ledger and consensus tests."""

from __future__ import annotations

import random
from collections.abc import Iterable
from dataclasses import dataclass, field

from app.consensus.setup import approve_genesis, build_genesis_block
from app.consensus.table import ConsensusTable, rank_candidates
from app.core.types import (
    Block,
    ConsensusCodeRange,
    GenesisBlock,
    SpendAuthorization,
    Transaction,
    ValidatorInterestTx,
)
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.hashing import Digest, digest_to_base62
from app.crypto.signing import KeyPair, PublicKey, SignatureScheme
from app.ledger.forest import LedgerForest


@dataclass(slots=True)
class Epoch:
    """A ranked, approved epoch with the secrets of every validator."""

    table: ConsensusTable
    genesis: GenesisBlock
    keys: dict[PublicKey, KeyPair] = field(default_factory=dict)
    interests: list[ValidatorInterestTx] = field(default_factory=list)

    def keypair(self, index: int) -> KeyPair:
        return self.keys[self.table.entries[index].pk]


def make_epoch(
    scheme: SignatureScheme,
    registry: CertifiedKeyRegistry,
    j: int,
    *,
    epoch: int = 1,
    seed: int = 0,
    timestamp: int = 0,
) -> Epoch:
    rng = random.Random(f"epoch:{seed}:{epoch}")
    keys: dict[PublicKey, KeyPair] = {}
    interests = []
    for index in range(j):
        keypair = scheme.generate(rng)
        registry.issue(f"v{index:02d}", keypair.public)
        keys[keypair.public] = keypair
        interests.append(ValidatorInterestTx.create(scheme, keypair, epoch))
    table = rank_candidates(interests, epoch=epoch)
    author = keys[table.genesis_author]
    genesis = build_genesis_block(
        table, None, {}, caller=author, scheme=scheme, timestamp=timestamp
    )
    approvals = [approve_genesis(genesis, keys[pk], scheme) for pk in table.pks()]
    return Epoch(table, genesis.with_approvals(approvals), keys, interests)


def tx_in_range(
    scheme: SignatureScheme,
    keypair: KeyPair,
    code_range: ConsensusCodeRange,
    timestamp: int,
    *,
    input: Digest | None = None,
    salt: int = 0,
) -> Transaction:
    """Mint a transaction with ``timestamp`` whose code falls in ``code_range``."""
    for nonce in range(salt, salt + 1_000_000):
        output = f"out-{nonce}".encode()
        tx = Transaction.create(scheme, keypair, timestamp, output, input=input)
        if code_range.contains(digest_to_base62(tx.t_id)):
            return tx
    msg = f"No transaction found for {code_range}"
    raise AssertionError(msg)


def next_block(
    scheme: SignatureScheme,
    keypair: KeyPair,
    forest: LedgerForest,
    epoch: int,
    code_range: ConsensusCodeRange,
    transactions: Iterable[Transaction],
    *,
    timestamp: int,
    authorizations: Iterable[SpendAuthorization] = (),
) -> Block:
    """Block extending the current head of ``(epoch, code_range)`` in ``forest``."""
    key = (epoch, code_range)
    return Block.assemble(
        scheme,
        keypair,
        epoch=epoch,
        height=forest.next_height(key),
        prev_hash=forest.head(key),
        code_range=code_range,
        ledger_hashes=((code_range, forest.head(key)),),
        transactions=transactions,
        timestamp=timestamp,
        authorizations=authorizations,
    )
