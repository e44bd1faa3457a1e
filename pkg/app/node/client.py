"""Transaction-submitting client nodes."""

from __future__ import annotations

import logging
import random
from collections import deque

from app.core.types import Transaction
from app.crypto.hashing import Digest
from app.crypto.signing import PublicKey, SignatureScheme
from app.node.messages import Kind
from app.simnet.network import Envelope, SimNetwork

logger = logging.getLogger(__name__)


class ClientNode:
    """Broadcasts signed transactions at a fixed rate inside a time window.

    Outputs are paid to the client's own key, so a later transaction may
    spend one of them once it is ``spend_age`` milliseconds old.
    """

    def __init__(
        self,
        node_id: str,
        network: SimNetwork,
        scheme: SignatureScheme,
        *,
        seed: int,
        rate: float,
        window: tuple[int, int],
        spend_fraction: float = 0.0,
        spend_age: int = 3_000,
    ) -> None:
        self.node_id = node_id
        self.network = network
        self.scheme = scheme
        self.rng = random.Random(f"{seed}:{node_id}")
        self.keypair = scheme.generate(self.rng)
        self.rate = rate
        self.window = window
        self.spend_fraction = spend_fraction
        self.spend_age = spend_age
        self.submitted: list[Transaction] = []
        self._outputs: deque[tuple[int, Digest]] = deque()

    @property
    def public(self) -> PublicKey:
        return self.keypair.public

    def start(self) -> None:
        if self.rate <= 0:
            return
        period = max(1, round(1000 / self.rate))
        start, _ = self.window
        first = max(start, self.network.now) + self.rng.randrange(period)
        self.network.every(self.node_id, period, self._on_timer, start=first)

    def receive(self, envelope: Envelope) -> None:
        """Clients ignore protocol traffic."""

    def _on_timer(self) -> None:
        now = self.network.now
        if now > self.window[1]:
            return
        spend = None
        if self._outputs and self.rng.random() < self.spend_fraction:
            created, t_id = self._outputs[0]
            if now - created >= self.spend_age:
                self._outputs.popleft()
                spend = t_id
        self.submit(self.mint(now, spend))

    def mint(self, now: int, spend: Digest | None = None, to: PublicKey | None = None) -> Transaction:
        recipient = to if to is not None else self.public
        return Transaction.create(self.scheme, self.keypair, now, recipient, input=spend)

    def submit(self, tx: Transaction) -> None:
        self.submitted.append(tx)
        if tx.output == self.public:
            self._outputs.append((tx.timestamp, tx.t_id))
        self.network.broadcast(self.node_id, Kind.TX.value, tx)
