"""One simulated Tree-Chain network: validators, standby nodes and clients."""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Callable, Iterable, Mapping
from typing import Any

from app.consensus.table import ConsensusTable, TableEntry
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.hashing import Digest
from app.crypto.signing import PublicKey, make_scheme
from app.ledger.forest import LedgerForest
from app.node.client import ClientNode
from app.node.validator import ValidatorNode
from app.simnet.config import SimConfig
from app.simnet.network import RunResult, SimNetwork

logger = logging.getLogger(__name__)

NodeFactory = Callable[..., ValidatorNode]

BENCH = "bench"


class Simulation:
    """Builds every node of ``config`` on one network.

    ``validator_types`` maps node ids (``v00``, ``v01``, ...) to a node
    class or factory taking the same keyword arguments as
    :class:`ValidatorNode`, so scenarios can plant adversaries.
    """

    def __init__(
        self,
        config: SimConfig,
        *,
        validator_types: Mapping[str, NodeFactory] | None = None,
    ) -> None:
        protocol = config.protocol
        self.config = config
        self.protocol = protocol
        self.schedule = config.schedule
        self.network = SimNetwork(protocol.network, config.seed)
        self.scheme = make_scheme(protocol.crypto.signature_scheme)
        self.registry = CertifiedKeyRegistry()
        self.validators: list[ValidatorNode] = []
        self.standby: list[ValidatorNode] = []
        self.clients: list[ClientNode] = []
        self.faulted: set[str] = set()
        self.adversaries: set[str] = set()
        self._nodes: dict[str, ValidatorNode] = {}
        self._started = False
        overrides = validator_types or {}
        for index in range(config.validators):
            node_id = f"v{index:02d}"
            node = self._add_node(node_id, overrides.get(node_id, ValidatorNode), candidate=True)
            self.validators.append(node)
        for index in range(config.standby):
            node_id = f"s{index:02d}"
            node = self._add_node(node_id, overrides.get(node_id, ValidatorNode), candidate=False)
            self.standby.append(node)
        for index in range(config.clients):
            self.add_client(
                f"c{index:03d}", rate=config.tx_rate, spend_fraction=config.spend_fraction
            )

    def _add_node(self, node_id: str, factory: NodeFactory, *, candidate: bool) -> ValidatorNode:
        node = factory(
            node_id,
            self.network,
            scheme=self.scheme,
            registry=self.registry,
            protocol=self.protocol,
            schedule=self.schedule,
            seed=self.config.seed,
            epochs=self.config.epochs,
            candidate=candidate,
        )
        self.network.register(node)
        self._nodes[node_id] = node
        return node

    def add_client(
        self,
        node_id: str,
        *,
        cls: type[ClientNode] = ClientNode,
        rate: float = 0.0,
        spend_fraction: float = 0.0,
        **kwargs: Any,
    ) -> ClientNode:
        client = cls(
            node_id,
            self.network,
            self.scheme,
            seed=self.config.seed,
            rate=rate,
            window=self.config.submit_window,
            spend_fraction=spend_fraction,
            **kwargs,
        )
        self.network.register(client, client=True)
        self.clients.append(client)
        if self._started:
            client.start()
        return client

    # -- lookups --------------------------------------------------------------

    @property
    def nodes(self) -> list[ValidatorNode]:
        return [*self.validators, *self.standby]

    def node(self, node_id: str) -> ValidatorNode:
        return self._nodes[node_id]

    def node_of(self, pk: PublicKey) -> ValidatorNode | None:
        owner = self.registry.owner_of(pk)
        return self._nodes.get(owner) if owner is not None else None

    def observer(self) -> ValidatorNode:
        """First node that is neither an adversary nor faulted."""
        for node in self.nodes:
            if node.node_id not in self.faulted | self.adversaries:
                return node
        return self.nodes[0]

    def table(self, epoch: int, *, latest: bool = False) -> ConsensusTable | None:
        node = self.observer()
        return node.latest_table(epoch) if latest else node.genesis_table(epoch)

    def entry_node(self, epoch: int, index: int) -> tuple[TableEntry, ValidatorNode]:
        """Entry ``index`` of the genesis table of ``epoch`` and the node behind it."""
        table = self.table(epoch)
        if table is None or index >= len(table.entries):
            msg = f"Epoch {epoch} has no table entry {index}"
            raise LookupError(msg)
        entry = table.entries[index]
        node = self.node_of(entry.pk)
        if node is None:
            msg = f"No node owns the key of table entry {index}"
            raise LookupError(msg)
        return entry, node

    # -- scripting ------------------------------------------------------------

    def at(self, time: int, callback: Callable[[], None]) -> None:
        self.network.call_at(BENCH, time, callback)

    def kill(self, node_id: str) -> None:
        self.faulted.add(node_id)
        self.network.kill(node_id)

    def isolate(self, node_id: str) -> None:
        self.faulted.add(node_id)
        self.network.isolate(node_id)

    def stall(self, node_id: str, until: int) -> None:
        self.faulted.add(node_id)
        self.network.stall(node_id, until)

    def start(self) -> None:
        if self._started:
            return
        self._started = True
        for node in self.nodes:
            node.start()
        for client in self.clients:
            client.start()

    def run(self, until: int | None = None) -> RunResult:
        self.start()
        end = self.config.end_time if until is None else until
        logger.info(
            "Running %d validator(s), %d standby, %d client(s) until %d ms",
            len(self.validators),
            len(self.standby),
            len(self.clients),
            end,
        )
        return self.network.run_until(end)

    # -- outcome --------------------------------------------------------------

    def submitted(self, clients: Iterable[ClientNode] | None = None) -> list[Digest]:
        chosen = self.clients if clients is None else clients
        return [tx.t_id for client in chosen for tx in client.submitted]


def commit_counts(forest: LedgerForest) -> Counter[Digest]:
    """How many blocks of ``forest`` hold each transaction id."""
    counts: Counter[Digest] = Counter()
    for _, block in forest.iter_blocks():
        counts.update(tx.t_id for tx in block.transactions)
    return counts


def committed_spends(forest: LedgerForest) -> dict[Digest, set[Digest]]:
    """Spent output id to the ids of every committed transaction spending it."""
    spends: dict[Digest, set[Digest]] = {}
    for _, block in forest.iter_blocks():
        for tx in block.transactions:
            if tx.input is not None:
                spends.setdefault(tx.input, set()).add(tx.t_id)
    return spends


def ledger_digest(forest: LedgerForest) -> list[tuple[str, str]]:
    """Sorted ``(ledger, head)`` pairs; equal lists mean equal replicas."""
    return sorted(
        (f"{epoch}:{code_range}", ledger.head.hex())
        for (epoch, code_range), ledger in forest.ledgers.items()
    )
