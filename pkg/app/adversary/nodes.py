"""Misbehaving nodes used by the attack scenarios."""

from __future__ import annotations

import logging
import random
from collections import deque
from typing import Any

from app.core.types import (
    ConsensusCodeRange,
    SpendAuthorization,
    Transaction,
    ValidatorInterestTx,
    Verdict,
)
from app.crypto.hashing import Digest
from app.crypto.signing import PublicKey
from app.ledger.forest import SpentFlag
from app.node.client import ClientNode
from app.node.messages import Kind
from app.node.state import PoolEntry
from app.node.validator import ValidatorNode

logger = logging.getLogger(__name__)


class SelectiveDropValidator(ValidatorNode):
    """Pools only a ``1 - drop_fraction`` share of the transactions it owns."""

    def __init__(self, *args: Any, drop_fraction: float, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        if not 0.0 <= drop_fraction <= 1.0:
            msg = f"drop_fraction must be within [0, 1], got {drop_fraction}"
            raise ValueError(msg)
        self.drop_fraction = drop_fraction
        self.dropped = 0
        self._drop_rng = random.Random(f"drop:{self.node_id}")

    def _admit(self, code_range: ConsensusCodeRange, entry: PoolEntry, now: int) -> None:
        if self._drop_rng.random() < self.drop_fraction:
            self.dropped += 1
            return
        super()._admit(code_range, entry, now)


class ColludingValidator(ValidatorNode):
    """Approves every spend of an output it is responsible for, even a second one."""

    def authorize(self, spender: Transaction) -> SpendAuthorization | None:
        keypair = self.keypair
        t_out_id = spender.input
        if keypair is None or t_out_id is None or not self.forest.has_transaction(t_out_id):
            return None
        auth = SpendAuthorization.create(
            self.scheme, keypair, t_out_id, spender.t_id, Verdict.APPROVED
        )
        self.forest.spent_sidecar.setdefault(t_out_id, SpentFlag(spender.t_id, auth))
        self._record("collude", f"spender={spender.t_id.hex()[:8]}")
        return auth


class SybilValidator(ValidatorNode):
    """Applies with its certified key plus ``n_fake`` keys the CA never issued."""

    def __init__(self, *args: Any, n_fake: int, **kwargs: Any) -> None:
        super().__init__(*args, **kwargs)
        self.n_fake = n_fake
        self.fake_keys: dict[int, list[PublicKey]] = {}

    def apply(self, epoch: int) -> None:
        super().apply(epoch)
        fakes = []
        for _ in range(self.n_fake):
            keypair = self.scheme.generate(self.rng)
            tvi = ValidatorInterestTx.create(self.scheme, keypair, epoch)
            fakes.append(tvi.pk)
            self._setup(epoch).interest.append((self.now, tvi))
            self._broadcast(Kind.INTEREST, tvi)
        self.fake_keys[epoch] = fakes
        logger.info(
            "%s advertised %d uncertified key(s) for epoch %d", self.node_id, len(fakes), epoch
        )


class DoubleSpendClient(ClientNode):
    """Client that can spend one output twice in the same instant."""

    def unspent(self) -> list[Digest]:
        return [t_id for _, t_id in self._outputs]

    def fund(self, tx: Transaction) -> None:
        """Submit a transaction minted elsewhere (e.g. steered into a range)."""
        self.submit(tx)

    def inject_simultaneous_double_spend(
        self, x: PublicKey, y: PublicKey, output: Digest | None = None
    ) -> tuple[Transaction, Transaction]:
        """Broadcast two spends of one output, paying ``x`` and ``y``.

        Spends ``output`` or, by default, the oldest output still held.
        """
        if output is None:
            if not self._outputs:
                msg = f"{self.node_id} holds no output to spend"
                raise LookupError(msg)
            _, output = self._outputs.popleft()
        else:
            self._outputs = deque(item for item in self._outputs if item[1] != output)
        now = self.network.now
        first = self.mint(now, output, to=x)
        second = self.mint(now, output, to=y)
        self.submit(first)
        self.submit(second)
        self.network.record(self.node_id, "double-spend-injected", output.hex()[:8])
        return first, second
