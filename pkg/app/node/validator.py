"""The validator state machine.

A :class:`ValidatorNode` is any non-client participant. Each epoch it may
apply for a range; once the genesis block is adopted it commits the
transactions of the ranges it owns, asks other validators to authorize
spends, watches its peers and reacts to silence, overload and misbehavior.
Every callback runs inside the simulator, one at a time.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace

from app.consensus.setup import (
    EpochAbortError,
    InterestStats,
    TableView,
    approve_genesis,
    build_genesis_block,
    check_genesis_structure,
    collect_interest,
    negotiate_table,
    reform_validators,
    validate_genesis_block,
    view_of,
)
from app.consensus.table import (
    ConsensusTable,
    EpochSchedule,
    NoValidatorsError,
    SetupStep,
    TableEntry,
    candidate_score,
    rank_candidates,
)
from app.core.config import Settings
from app.core.encoding import Reader
from app.core.ranges import split_range
from app.core.types import (
    Approval,
    Block,
    ConsensusCodeRange,
    GenesisBlock,
    SpendAuthorization,
    Transaction,
    ValidatorInterestTx,
    Verdict,
)
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.hashing import Digest, digest_to_base62
from app.crypto.signing import KeyPair, PublicKey, SignatureScheme
from app.ledger.forest import ForkDetectedError, LedgerForest, SpentFlag, UnknownLedgerError
from app.ledger.verify import (
    DoubleSpendEvidence,
    NotResponsibleError,
    UnknownTransactionError,
    authorize_spend,
    verify_block,
)
from app.node.messages import (
    ApprovalMessage,
    Assignment,
    AssignmentKind,
    Kind,
    MisbehaviorReport,
    Purpose,
    ReportKind,
    SpendRequest,
    SpendResponse,
    ValidatorOffer,
    ValidatorRequest,
)
from app.node.state import NodeState, OwnedRange, Phase, PoolEntry, Role
from app.simnet.network import Envelope, SimNetwork

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class NodeStats:
    blocks_formed: int = 0
    blocks_accepted: int = 0
    blocks_rejected: int = 0
    disputed: int = 0
    forks_detected: int = 0
    stale_dropped: int = 0
    spends_refused: int = 0
    reports_sent: int = 0


@dataclass(slots=True)
class PendingRequest:
    request: ValidatorRequest
    deadline: int
    offers: list[ValidatorInterestTx] = field(default_factory=list)


@dataclass(slots=True)
class AwaitingSpend:
    entry: PoolEntry
    code_range: ConsensusCodeRange
    requested_at: int


@dataclass(slots=True)
class EpochSetup:
    """Everything gathered while forming one epoch's table."""

    interest: list[tuple[int, ValidatorInterestTx]] = field(default_factory=list)
    views: list[TableView] = field(default_factory=list)
    stats: InterestStats = field(default_factory=InterestStats)
    draft: ConsensusTable | None = None
    table: ConsensusTable | None = None
    genesis: GenesisBlock | None = None
    retried: bool = False


class ValidatorNode:
    """Participant that can hold consensus-code ranges."""

    def __init__(
        self,
        node_id: str,
        network: SimNetwork,
        *,
        scheme: SignatureScheme,
        registry: CertifiedKeyRegistry,
        protocol: Settings,
        schedule: EpochSchedule,
        seed: int,
        epochs: int,
        candidate: bool = True,
    ) -> None:
        self.node_id = node_id
        self.network = network
        self.scheme = scheme
        self.registry = registry
        self.protocol = protocol
        self.schedule = schedule
        self.epochs = epochs
        self.candidate = candidate
        self.rng = random.Random(f"{seed}:{node_id}")
        self.dictionary = protocol.crypto.dictionary()
        self.forest = LedgerForest()
        self.state = NodeState()
        self.stats = NodeStats()
        self.epoch = 0
        self.keys: dict[int, KeyPair] = {}
        self.tvis: dict[int, ValidatorInterestTx] = {}
        self.setups: dict[int, EpochSetup] = {}
        # Per epoch: (activation, table) in activation order; index 0 is the genesis table.
        self.tables: dict[int, list[tuple[int, ConsensusTable]]] = {}
        self.approvals: dict[Digest, dict[PublicKey, Approval]] = {}
        # Every uncommitted transaction seen, in arrival order.
        self.buffer: dict[Digest, PoolEntry] = {}
        self.watched: dict[Digest, ConsensusCodeRange] = {}
        self.awaiting: dict[Digest, AwaitingSpend] = {}
        self.requests: dict[Digest, PendingRequest] = {}
        self.replacing: set[tuple[int, ConsensusCodeRange]] = set()
        self.reported: set[tuple[int, bytes, ReportKind]] = set()
        self.reclaim_checked: set[tuple[int, ConsensusCodeRange]] = set()
        self._handlers = {
            Kind.TX: self._on_tx,
            Kind.INTEREST: self._on_interest,
            Kind.VIEW: self._on_view,
            Kind.GENESIS: self._on_genesis,
            Kind.APPROVAL: self._on_approval,
            Kind.BLOCK: self._on_block,
            Kind.SPEND_REQUEST: self._on_spend_request,
            Kind.SPEND_RESPONSE: self._on_spend_response,
            Kind.REPORT: self._on_report,
            Kind.VALIDATOR_REQUEST: self._on_validator_request,
            Kind.VALIDATOR_OFFER: self._on_validator_offer,
            Kind.ASSIGN: self._on_assignment,
        }

    # ------------------------------------------------------------------
    # Wiring
    # ------------------------------------------------------------------

    @property
    def now(self) -> int:
        return self.network.now

    @property
    def settle(self) -> int:
        return self.protocol.settle_ms

    @property
    def keypair(self) -> KeyPair | None:
        return self.keys.get(self.epoch)

    @property
    def table(self) -> ConsensusTable | None:
        return self.table_for(self.epoch, self.now)

    def table_for(self, epoch: int, at: int) -> ConsensusTable | None:
        """Table of ``epoch`` in force at time ``at``."""
        history = self.tables.get(epoch)
        if not history:
            return None
        current = history[0][1]
        for activation, table in history[1:]:
            if activation <= at:
                current = table
        return current

    def latest_table(self, epoch: int) -> ConsensusTable | None:
        history = self.tables.get(epoch)
        return history[-1][1] if history else None

    def genesis_table(self, epoch: int) -> ConsensusTable | None:
        history = self.tables.get(epoch)
        return history[0][1] if history else None

    def start(self) -> None:
        """Schedule every setup step and the block-formation tick."""
        q = self.schedule.quarter
        for epoch in range(1, self.epochs + 1):
            start = self.schedule.setup_start(epoch)
            self.network.call_at(self.node_id, start, lambda e=epoch: self.apply(e))
            self.network.call_at(self.node_id, start + q, lambda e=epoch: self._rank(e))
            self.network.call_at(self.node_id, start + 2 * q, lambda e=epoch: self._share_view(e))
            self.network.call_at(self.node_id, start + 3 * q, lambda e=epoch: self._negotiate(e))
            self.network.call_at(
                self.node_id, self.schedule.epoch_start(epoch), lambda e=epoch: self._adopt(e)
            )
        self.network.every(
            self.node_id,
            self.protocol.tick_ms,
            self._tick,
            start=self.schedule.epoch_start(1),
        )

    def receive(self, envelope: Envelope) -> None:
        handler = self._handlers.get(Kind(envelope.kind))
        if handler is not None:
            handler(envelope)

    def _send(self, pk: PublicKey, kind: Kind, payload: object) -> None:
        dst = self.registry.owner_of(pk)
        if dst is None:
            logger.debug("%s: no certified owner for a %s target", self.node_id, kind.value)
            return
        if dst == self.node_id:
            self.receive(Envelope(self.node_id, dst, kind.value, payload, 0, self.now))
            return
        self.network.send(self.node_id, dst, kind.value, payload)  # type: ignore[arg-type]

    def _broadcast(self, kind: Kind, payload: object) -> None:
        self.network.broadcast(self.node_id, kind.value, payload)  # type: ignore[arg-type]

    def _record(self, kind: str, detail: str = "") -> None:
        self.network.record(self.node_id, kind, detail)

    def _setup(self, epoch: int) -> EpochSetup:
        return self.setups.setdefault(epoch, EpochSetup())

    def _suppressed(self, now: int) -> bool:
        return self.epoch == 0 or now >= self.schedule.suppression_start(self.epoch)

    # ------------------------------------------------------------------
    # Epoch setup
    # ------------------------------------------------------------------

    def _fresh_key(self, epoch: int) -> KeyPair:
        keypair = self.keys.get(epoch)
        if keypair is None:
            keypair = self.scheme.generate(self.rng)
            self.keys[epoch] = keypair
            self.registry.issue(self.node_id, keypair.public)
        return keypair

    def interest_for(self, epoch: int) -> ValidatorInterestTx:
        """This node's interest transaction for ``epoch``, created on first use."""
        tvi = self.tvis.get(epoch)
        if tvi is not None:
            return tvi
        keypair = self._fresh_key(epoch)
        previous = None
        prev_table = self.latest_table(epoch - 1)
        prev_key = self.keys.get(epoch - 1)
        if prev_table is not None and prev_key is not None:
            if prev_key.public in prev_table.members():
                previous = prev_key
        tvi = ValidatorInterestTx.create(self.scheme, keypair, epoch, previous)
        self.tvis[epoch] = tvi
        return tvi

    def apply(self, epoch: int) -> None:
        """Interest step: candidates announce a fresh key for ``epoch``."""
        if self.state.phase is Phase.IDLE:
            self.state.phase = Phase.SETUP
        self.state.setup_step = SetupStep.INTEREST
        if not self.candidate:
            return
        tvi = self.interest_for(epoch)
        self._setup(epoch).interest.append((self.now, tvi))
        self._broadcast(Kind.INTEREST, tvi)

    def _on_interest(self, envelope: Envelope) -> None:
        tvi: ValidatorInterestTx = envelope.payload
        self._setup(tvi.epoch).interest.append((self.now, tvi))

    def _rank(self, epoch: int) -> None:
        self.state.setup_step = SetupStep.RANKING
        setup = self._setup(epoch)
        prev_table = self.latest_table(epoch - 1)
        try:
            if prev_table is None:
                collected = collect_interest(
                    self.schedule.step_window(epoch, SetupStep.INTEREST),
                    setup.interest,
                    self.registry,
                    self.scheme,
                    epoch=epoch,
                    stats=setup.stats,
                )
                setup.draft = rank_candidates(collected, self.dictionary, epoch=epoch)
            else:
                draft = reform_validators(
                    self.schedule.setup_start(epoch),
                    self.schedule,
                    prev_table,
                    setup.interest,
                    registry=self.registry,
                    scheme=self.scheme,
                    dictionary=self.dictionary,
                    stats=setup.stats,
                )
                if draft.carried:
                    logger.warning(
                        "%s: no applicants for epoch %d; the table carries over",
                        self.node_id,
                        epoch,
                    )
                    return
                setup.draft = draft
        except NoValidatorsError:
            logger.warning("%s: no applicants for epoch %d", self.node_id, epoch)

    def _share_view(self, epoch: int) -> None:
        self.state.setup_step = SetupStep.NEGOTIATION
        setup = self._setup(epoch)
        tvi = self.tvis.get(epoch)
        if setup.draft is None or tvi is None or tvi.pk not in setup.draft.pks():
            return
        view = view_of(setup.draft, tvi)
        setup.views.append(view)
        self._broadcast(Kind.VIEW, view)

    def _on_view(self, envelope: Envelope) -> None:
        view: TableView = envelope.payload
        self._setup(view.interest.epoch).views.append(view)

    def _negotiate(self, epoch: int) -> None:
        self.state.setup_step = SetupStep.GENESIS
        if self.epoch:
            self.state.phase = Phase.REFORMING
        setup = self._setup(epoch)
        if setup.draft is None:
            return
        try:
            setup.table = negotiate_table(setup.draft, setup.views, self.dictionary)
        except EpochAbortError as exc:
            if not setup.retried:
                setup.retried = True
                logger.warning("%s: %s; retrying", self.node_id, exc)
                self._record("epoch-abort", f"epoch={epoch}")
                self._share_view(epoch)
                retry_at = self.now + self.schedule.quarter // 2
                self.network.call_at(self.node_id, retry_at, lambda: self._negotiate(epoch))
                return
            logger.warning("%s: %s; epoch %d aborted", self.node_id, exc, epoch)
            self._record("epoch-abort", f"epoch={epoch} final")
            setup.draft = None
            return
        self.network.call_at(
            self.node_id, self.now + self.settle, lambda: self._build_genesis(epoch)
        )

    def closing_hashes(self, epoch: int) -> dict[PublicKey, Digest]:
        """Closing ledger hash of every member of ``epoch``."""
        table = self.latest_table(epoch)
        if table is None:
            return {}
        return {
            pk: self.forest.closing_ledger_hash(epoch, table.ranges_of(pk))
            for pk in table.members()
        }

    def _build_genesis(self, epoch: int) -> None:
        setup = self._setup(epoch)
        keypair = self.keys.get(epoch)
        if setup.table is None or keypair is None:
            return
        if setup.table.genesis_author != keypair.public:
            return
        prev_table = self.latest_table(epoch - 1)
        previous = self.forest.genesis_chain[-1] if self.forest.genesis_chain else None
        try:
            heads = self.closing_hashes(epoch - 1)
        except UnknownLedgerError as exc:
            logger.error("%s: cannot close epoch %d: %s", self.node_id, epoch - 1, exc)
            return
        genesis = build_genesis_block(
            setup.table,
            prev_table,
            heads,
            caller=keypair,
            scheme=self.scheme,
            timestamp=self.now,
            prev_genesis=previous.block_hash() if previous is not None else None,
        )
        self._record("genesis-built", f"epoch={epoch} validators={genesis.total_val}")
        logger.info("%s built the genesis block of epoch %d", self.node_id, epoch)
        self._broadcast(Kind.GENESIS, genesis)
        self._accept_genesis(genesis)

    def _on_genesis(self, envelope: Envelope) -> None:
        self._accept_genesis(envelope.payload)

    def _accept_genesis(self, genesis: GenesisBlock) -> None:
        epoch = genesis.epoch
        setup = self._setup(epoch)
        if setup.table is None:
            return
        prev_table = self.latest_table(epoch - 1)
        verdict = check_genesis_structure(genesis, setup.table, self.scheme, prev_table)
        if not verdict.accepted:
            logger.warning("%s rejected genesis %d: %s", self.node_id, epoch, verdict.detail)
            return
        if prev_table is not None and not self._closing_hashes_match(genesis, prev_table):
            logger.warning("%s: genesis %d ledger hashes differ from its forest", self.node_id, epoch)
            self._record("genesis-mismatch", f"epoch={epoch}")
            return
        setup.genesis = genesis
        keypair = self.keys.get(epoch)
        if keypair is None or keypair.public not in setup.table.pks():
            return
        approval = approve_genesis(genesis, keypair, self.scheme)
        message = ApprovalMessage(epoch, genesis.block_hash(), approval)
        self._store_approval(message)
        self._broadcast(Kind.APPROVAL, message)

    def _closing_hashes_match(self, genesis: GenesisBlock, prev_table: ConsensusTable) -> bool:
        try:
            mine = self.closing_hashes(prev_table.epoch)
        except UnknownLedgerError:
            return False
        for entry in genesis.entries:
            if entry.hash_ledger is None:
                continue
            owner = entry.pk if entry.departing else entry.prev_pk
            if owner is None or mine.get(owner) != entry.hash_ledger:
                return False
        return True

    def _on_approval(self, envelope: Envelope) -> None:
        self._store_approval(envelope.payload)

    def _store_approval(self, message: ApprovalMessage) -> None:
        self.approvals.setdefault(message.genesis_hash, {})[message.approval.pk] = message.approval

    def _adopt(self, epoch: int) -> None:
        """Start of the epoch: validate the genesis block and take up ranges.

        Without an acceptable genesis block the previous table carries over.
        """
        setup = self._setup(epoch)
        if setup.genesis is None or setup.table is None:
            logger.warning("%s has no genesis block for epoch %d", self.node_id, epoch)
            self._carry(epoch)
            return
        collected = self.approvals.get(setup.genesis.block_hash(), {})
        approvals = [collected[pk] for pk in sorted(collected)]
        genesis = setup.genesis.with_approvals(approvals)
        prev_table = self.latest_table(epoch - 1)
        verdict = validate_genesis_block(genesis, setup.table, self.scheme, prev_table)
        if not verdict.accepted:
            logger.warning("%s rejected genesis %d: %s", self.node_id, epoch, verdict.detail)
            self._record("genesis-rejected", f"epoch={epoch} reason={verdict.detail}")
            self._carry(epoch)
            return
        self.forest.open_epoch(genesis)
        previous = epoch - 1
        while previous in self.tables:
            self.forest.epoch_compact(previous)
            if not self.tables[previous][0][1].carried:
                break
            previous -= 1
        self._enter(epoch, setup.table)
        keypair = self.keys.get(epoch)
        if keypair is not None and keypair.public == setup.table.genesis_author:
            self._record("genesis-adopted", f"epoch={epoch} approvals={len(approvals)}")

    def _carry(self, epoch: int) -> None:
        """Run ``epoch`` on the latest table of the previous epoch."""
        prev_table = self.latest_table(epoch - 1)
        if prev_table is None or self.epoch != epoch - 1:
            logger.warning("%s: no table to carry into epoch %d", self.node_id, epoch)
            return
        table = replace(prev_table, epoch=epoch, carried=True)
        try:
            self.forest.carry_epoch(epoch - 1, epoch, table.ranges())
        except UnknownLedgerError as exc:
            logger.error("%s: cannot carry epoch %d: %s", self.node_id, epoch, exc)
            return
        previous_key = self.keys.get(epoch - 1)
        if previous_key is not None and previous_key.public in table.pks():
            # Members keep their key; assignments need an interest of this epoch.
            self.keys[epoch] = previous_key
            self.tvis[epoch] = ValidatorInterestTx.create(self.scheme, previous_key, epoch)
        self._enter(epoch, table)
        self._record("epoch-carried", f"epoch={epoch} validators={len(table.entries)}")

    def _enter(self, epoch: int, table: ConsensusTable) -> None:
        self.tables[epoch] = [(self.now, table)]
        self.epoch = epoch
        self.awaiting.clear()
        self.state.owned = {}
        keypair = self.keys.get(epoch)
        for code_range in table.ranges_of(keypair.public) if keypair else []:
            self._take_range(code_range, ready_at=self.now)
        self.state.phase = Phase.COMMITTING
        self.state.setup_step = None
        self._refresh_role()
        self._reseed_counters(table.ranges())

    def _refresh_role(self) -> None:
        table = self.table
        keypair = self.keypair
        if table is None or keypair is None:
            self.state.role = Role.STANDBY
        elif self.state.owned:
            self.state.role = Role.VALIDATOR
        elif any(entry.backup_pk == keypair.public for entry in table.entries):
            self.state.role = Role.BACKUP
        else:
            self.state.role = Role.STANDBY

    # ------------------------------------------------------------------
    # Transactions and pools
    # ------------------------------------------------------------------

    def _fresh(self, tx: Transaction, now: int) -> bool:
        return now - tx.timestamp <= self.protocol.expiry_ms - self.settle

    def _take_range(self, code_range: ConsensusCodeRange, *, ready_at: int) -> OwnedRange:
        interval = self.protocol.block.interval_ms
        owned = OwnedRange(ready_at=ready_at, last_block_time=ready_at - interval)
        self.state.owned[code_range] = owned
        for entry in list(self.buffer.values()):
            if code_range.contains(digest_to_base62(entry.tx.t_id)):
                self._admit(code_range, PoolEntry(entry.tx, entry.arrival), self.now)
        return owned

    def _reseed_counters(self, ranges: list[ConsensusCodeRange], *, grace: int = 0) -> None:
        now = self.now
        for code_range in ranges:
            counters = self.state.counters(code_range)
            counters.observed = 0
            counters.committed = 0
            counters.last_block = now
            counters.reported = False
            counters.grace_until = now + grace
        for t_id in self.buffer:
            code = digest_to_base62(t_id)
            for code_range in ranges:
                if code_range.contains(code):
                    self.watched[t_id] = code_range
                    self.state.counters(code_range).observed += 1
                    break

    def _forget_expired(self, now: int) -> None:
        """Drop buffered transactions no block can include any more."""
        horizon = self.protocol.expiry_ms + self.settle
        while self.buffer:
            t_id, entry = next(iter(self.buffer.items()))
            if now - entry.arrival <= horizon:
                break
            self._discard(t_id)

    def _discard(self, t_id: Digest) -> None:
        self.buffer.pop(t_id, None)
        code_range = self.watched.pop(t_id, None)
        if code_range is not None:
            self.state.counters(code_range).observed -= 1

    def _on_tx(self, envelope: Envelope) -> None:
        self.on_transaction(envelope.payload, self.now)

    def on_transaction(self, tx: Transaction, now: int) -> None:
        """Buffer ``tx``, count it for its range and pool it if the range is ours."""
        if tx.t_id in self.buffer or self.forest.has_transaction(tx.t_id):
            return
        self.buffer[tx.t_id] = PoolEntry(tx, now)
        table = self.table
        if table is None:
            return
        code = digest_to_base62(tx.t_id)
        owner = table.owner_of(code)
        if owner is not None:
            self.watched[tx.t_id] = owner.code_range
            self.state.counters(owner.code_range).observed += 1
            self._check_gap(owner.code_range, owner.pk, now)
        for code_range in self.state.owned:
            if code_range.contains(code):
                self._admit(code_range, PoolEntry(tx, now), now)
                return

    def _admit(self, code_range: ConsensusCodeRange, entry: PoolEntry, now: int) -> None:
        tx = entry.tx
        if not tx.verify(self.scheme):
            self._discard(tx.t_id)
            return
        if not self._fresh(tx, now):
            self._discard(tx.t_id)
            self.stats.stale_dropped += 1
            return
        owned = self.state.owned[code_range]
        if tx.input is None:
            owned.pool.append(entry)
            return
        self._request_spend(code_range, entry, now)

    def _request_spend(self, code_range: ConsensusCodeRange, entry: PoolEntry, now: int) -> None:
        table = self.table
        keypair = self.keypair
        tx = entry.tx
        assert tx.input is not None
        if table is None or keypair is None:
            return
        owner = table.owner_of(digest_to_base62(tx.input))
        if owner is None:
            return
        if owner.pk == keypair.public:
            auth = self.authorize(tx)
            self._on_authorization(code_range, entry, auth)
            return
        self.awaiting[tx.t_id] = AwaitingSpend(entry, code_range, now)
        self._send(owner.pk, Kind.SPEND_REQUEST, SpendRequest(self.epoch, tx))

    def authorize(self, spender: Transaction) -> SpendAuthorization | None:
        """Answer a spend of ``spender.input``; ``None`` when it cannot be judged."""
        keypair = self.keypair
        table = self.table
        t_out_id = spender.input
        if keypair is None or table is None or t_out_id is None:
            return None
        t_out = self.forest.transaction(t_out_id)
        if t_out is None or t_out.output != spender.pk or not spender.verify(self.scheme):
            return None
        flag = self.forest.spent_sidecar.get(t_out_id)
        if (
            flag is not None
            and flag.spender_id == spender.t_id
            and not self.forest.has_transaction(spender.t_id)
        ):
            # Re-issued for the same spender, e.g. after a key change.
            auth = SpendAuthorization.create(
                self.scheme, keypair, t_out_id, spender.t_id, Verdict.APPROVED
            )
            self.forest.record_spend(t_out_id, SpentFlag(spender.t_id, auth))
            return auth
        try:
            return authorize_spend(t_out_id, self.forest, keypair, table, self.scheme, spender.t_id)
        except (UnknownTransactionError, NotResponsibleError) as exc:
            logger.debug("%s cannot authorize: %s", self.node_id, exc)
            return None

    def _on_authorization(
        self, code_range: ConsensusCodeRange, entry: PoolEntry, auth: SpendAuthorization | None
    ) -> None:
        if auth is None:
            return
        if not auth.approved:
            self.stats.spends_refused += 1
            self._discard(entry.tx.t_id)
            self._record("spend-refused", digest_to_base62(entry.tx.t_id)[:8])
            return
        owned = self.state.owned.get(code_range)
        if owned is None:
            return
        entry.authorization = auth
        owned.pool.append(entry)

    def _on_spend_request(self, envelope: Envelope) -> None:
        request: SpendRequest = envelope.payload
        if request.epoch != self.epoch:
            return
        auth = self.authorize(request.spender)
        if auth is not None:
            self.network.send(
                self.node_id, envelope.src, Kind.SPEND_RESPONSE.value, SpendResponse(self.epoch, auth)
            )

    def _on_spend_response(self, envelope: Envelope) -> None:
        response: SpendResponse = envelope.payload
        auth = response.authorization
        pending = self.awaiting.get(auth.spender_id)
        table = self.table
        if response.epoch != self.epoch or pending is None or table is None:
            return
        owner = table.owner_of(digest_to_base62(auth.t_out_id))
        if owner is None or owner.pk != auth.authorizer_pk or not auth.verify(self.scheme):
            return
        del self.awaiting[auth.spender_id]
        self._on_authorization(pending.code_range, pending.entry, auth)

    def _retry_spends(self, now: int) -> None:
        timeout = 2 * self.settle + self.protocol.tick_ms
        for t_id, pending in list(self.awaiting.items()):
            if not self._fresh(pending.entry.tx, now):
                del self.awaiting[t_id]
                self._discard(t_id)
                self.stats.stale_dropped += 1
            elif now - pending.requested_at >= timeout and pending.code_range in self.state.owned:
                self._request_spend(pending.code_range, pending.entry, now)

    def _expire_stale(self, now: int) -> None:
        for owned in self.state.owned.values():
            kept = [entry for entry in owned.pool if self._fresh(entry.tx, now)]
            for entry in owned.pool:
                if not self._fresh(entry.tx, now):
                    self._discard(entry.tx.t_id)
                    self.stats.stale_dropped += 1
            owned.pool = kept

    # ------------------------------------------------------------------
    # Blocks
    # ------------------------------------------------------------------

    def _tick(self) -> None:
        now = self.now
        if self.epoch == 0:
            return
        self._expire_stale(now)
        self._forget_expired(now)
        self._retry_spends(now)
        self._check_reclaims(now)
        self.monitor_peers(now)
        self._close_requests(now)
        for code_range in list(self.state.owned):
            self.maybe_form_block(now, code_range)
            self._check_overload(now, code_range)

    def _due(self, owned: OwnedRange, now: int) -> bool:
        block = self.protocol.block
        by_size = len(owned.pool) >= block.size
        by_time = bool(owned.pool) and now - owned.last_block_time >= block.interval_ms
        if block.mode == "size":
            return by_size
        if block.mode == "time":
            return by_time
        return by_size or by_time

    def maybe_form_block(self, now: int, code_range: ConsensusCodeRange) -> Block | None:
        """Emit one block for ``code_range`` when the formation rule fires."""
        owned = self.state.owned.get(code_range)
        keypair = self.keypair
        table = self.table
        if owned is None or keypair is None or table is None:
            return None
        if owned.frozen or now < owned.ready_at or self._suppressed(now):
            return None
        if not self._due(owned, now):
            return None
        size = self.protocol.block.size
        entries, owned.pool = owned.pool[:size], owned.pool[size:]
        key = (self.epoch, code_range)
        block = Block.assemble(
            self.scheme,
            keypair,
            epoch=self.epoch,
            height=self.forest.next_height(key),
            prev_hash=self.forest.head(key),
            code_range=code_range,
            ledger_hashes=self.forest.ledger_head_hashes(self.epoch, table.ranges(), code_range),
            transactions=[entry.tx for entry in entries],
            timestamp=now,
            authorizations=[entry.authorization for entry in entries if entry.authorization],
        )
        self.forest.append_block(block)
        owned.last_block_time = now
        self.stats.blocks_formed += 1
        self._on_committed(block, now)
        self._broadcast(Kind.BLOCK, block)
        self._record("block-formed", f"{code_range} txs={len(entries)}")
        return block

    def _on_committed(self, block: Block, now: int) -> None:
        ids = {tx.t_id for tx in block.transactions}
        for t_id in ids:
            self.buffer.pop(t_id, None)
            self.awaiting.pop(t_id, None)
            code_range = self.watched.pop(t_id, None)
            if code_range is not None:
                self.state.counters(code_range).committed += 1
        owned = self.state.owned.get(block.code_range)
        if owned is not None:
            owned.pool = [entry for entry in owned.pool if entry.tx.t_id not in ids]
        self.state.counters(block.code_range).last_block = now

    def _on_block(self, envelope: Envelope) -> None:
        block: Block = envelope.payload
        now = self.now
        table = self.table_for(block.epoch, block.timestamp)
        if table is None:
            logger.debug("%s: block for unknown epoch %d", self.node_id, block.epoch)
            return
        verdict = verify_block(
            block, table, self.forest, now, self.protocol.expiry_ms, self.scheme
        )
        disputed = False
        if not verdict.accepted:
            if verdict.evidence is None:
                self.stats.blocks_rejected += 1
                logger.warning(
                    "%s rejected a block of %s (%s: %s)",
                    self.node_id,
                    block.code_range,
                    verdict.tag,
                    verdict.reason,
                )
                self._record("block-rejected", f"{block.code_range} {verdict.tag} {verdict.reason}")
                return
            disputed = True
        try:
            self.forest.append_block(block, disputed=disputed)
        except (ForkDetectedError, UnknownLedgerError) as exc:
            self.stats.forks_detected += 1
            logger.warning("%s: %s", self.node_id, exc)
            self._record("fork-detected", str(block.code_range))
            return
        self.stats.blocks_accepted += 1
        self._on_committed(block, now)
        if disputed and verdict.evidence is not None:
            self.stats.disputed += 1
            self._report_double_spend(verdict.evidence)

    # ------------------------------------------------------------------
    # Monitoring and reports
    # ------------------------------------------------------------------

    def _check_gap(
        self, code_range: ConsensusCodeRange, accused: PublicKey, now: int
    ) -> MisbehaviorReport | None:
        keypair = self.keypair
        counters = self.state.counters(code_range)
        if keypair is None or accused == keypair.public or counters.reported:
            return None
        if self._suppressed(now) or (self.epoch, code_range) in self.replacing:
            return None
        if now < counters.grace_until:
            return None
        if counters.gap <= self.protocol.monitor.dos_threshold:
            return None
        counters.reported = True
        return self._issue_report(
            ReportKind.DOS, accused, code_range, f"gap={counters.gap}".encode()
        )

    def monitor_peers(self, now: int) -> list[MisbehaviorReport]:
        """Check every peer range for a counter gap or for silence.

        Returns the reports issued by this call. A silent range is taken
        over by its backup; after twice the silence window the genesis
        author looks for a replacement.
        """
        table = self.table
        keypair = self.keypair
        if table is None or keypair is None or self._suppressed(now):
            return []
        issued: list[MisbehaviorReport] = []
        silence = self.protocol.silence_ms
        original = self.genesis_table(self.epoch)
        is_author = original is not None and original.genesis_author == keypair.public
        for entry in table.entries:
            if entry.pk == keypair.public:
                continue
            counters = self.state.counters(entry.code_range)
            report = self._check_gap(entry.code_range, entry.pk, now)
            if report is not None:
                issued.append(report)
            if counters.gap <= 0:
                continue
            quiet = now - counters.last_block
            if quiet >= silence and entry.backup_pk == keypair.public:
                report = self._issue_report(
                    ReportKind.SILENCE, entry.pk, entry.code_range, f"quiet={quiet}".encode()
                )
                if report is not None:
                    issued.append(report)
                self.handle_failover(entry.code_range)
            if (
                quiet >= 2 * silence
                and is_author
                and (self.epoch, entry.code_range) not in self.replacing
            ):
                self._start_request(Purpose.REPLACE, entry.code_range, now)
        return issued

    def _issue_report(
        self,
        kind: ReportKind,
        accused: PublicKey,
        code_range: ConsensusCodeRange | None,
        evidence: bytes,
    ) -> MisbehaviorReport | None:
        keypair = self.keypair
        key = (self.epoch, bytes(accused), kind)
        if keypair is None or key in self.reported:
            return None
        self.reported.add(key)
        report = MisbehaviorReport.create(
            self.scheme, keypair, kind, self.epoch, accused, code_range, evidence
        )
        self.stats.reports_sent += 1
        owner = self.registry.owner_of(accused) or "?"
        detail = f"{kind.value} accused={owner} range={code_range}"
        if kind is not ReportKind.DOUBLE_SPEND:
            detail = f"{detail} {evidence.decode()}"
        self._record("report", detail)
        logger.info("%s reports %s by %s", self.node_id, kind.value, owner)
        self._broadcast(Kind.REPORT, report)
        self._handle_report(report)
        return report

    def _report_double_spend(self, evidence: DoubleSpendEvidence) -> None:
        accused = evidence.authorizer_pk
        owner = self.registry.owner_of(accused)
        payload = evidence.first.to_bytes() + evidence.second.to_bytes()
        table = self.table
        ranges = table.ranges_of(accused) if table is not None else []
        self._issue_report(ReportKind.DOUBLE_SPEND, accused, ranges[0] if ranges else None, payload)
        if owner is not None:
            self.registry.ban(owner, "double spend")

    def _on_report(self, envelope: Envelope) -> None:
        report: MisbehaviorReport = envelope.payload
        if not report.verify(self.scheme):
            return
        if report.kind is ReportKind.DOUBLE_SPEND:
            if not self._valid_evidence(report):
                return
            owner = self.registry.owner_of(report.accused_pk)
            if owner is not None:
                self.registry.ban(owner, "double spend")
        self._handle_report(report)

    def _valid_evidence(self, report: MisbehaviorReport) -> bool:
        try:
            reader = Reader(report.evidence, tagged=True)
            first = SpendAuthorization.read(reader)
            second = SpendAuthorization.read(Reader(report.evidence[reader.offset :]))
        except ValueError:
            return False
        return (
            first.t_out_id == second.t_out_id
            and first.spender_id != second.spender_id
            and first.approved
            and second.approved
            and first.authorizer_pk == second.authorizer_pk == report.accused_pk
            and first.verify(self.scheme)
            and second.verify(self.scheme)
        )

    def _handle_report(self, report: MisbehaviorReport) -> None:
        """The genesis author replaces what a report accuses.

        A double spend costs the accused every range; a gap report costs the
        reported range. Silence is left to the backup.
        """
        keypair = self.keypair
        genesis_table = self.genesis_table(self.epoch)
        table = self.latest_table(self.epoch)
        if report.epoch != self.epoch or keypair is None or table is None:
            return
        if genesis_table is None or genesis_table.genesis_author != keypair.public:
            return
        if report.accused_pk == keypair.public or report.kind is ReportKind.SILENCE:
            return
        if report.kind is ReportKind.DOUBLE_SPEND:
            targets = table.ranges_of(report.accused_pk)
        else:
            targets = [r for r in table.ranges_of(report.accused_pk) if r == report.code_range]
        for code_range in targets:
            if (self.epoch, code_range) not in self.replacing:
                self._start_request(Purpose.REPLACE, code_range, self.now)

    # ------------------------------------------------------------------
    # Failover, replacement and load balancing
    # ------------------------------------------------------------------

    def handle_failover(self, silent_range: ConsensusCodeRange) -> Assignment | None:
        """Backup side: claim ``silent_range`` from its silent primary."""
        keypair = self.keypair
        tvi = self.tvis.get(self.epoch)
        if keypair is None or tvi is None or (self.epoch, silent_range) in self.replacing:
            return None
        activation = self.now + self.settle
        assignment = Assignment.create(
            self.scheme,
            keypair,
            AssignmentKind.TAKEOVER,
            self.epoch,
            silent_range,
            tvi,
            activation,
        )
        self._record("takeover", f"{silent_range} activation={activation}")
        logger.info("%s takes over %s", self.node_id, silent_range)
        self._broadcast(Kind.ASSIGN, assignment)
        self._apply_assignment(assignment)
        return assignment

    def _check_reclaims(self, now: int) -> None:
        """A primary that lost its range to a takeover keeps it only if it wins the tie."""
        keypair = self.keypair
        original = self.genesis_table(self.epoch)
        current = self.latest_table(self.epoch)
        tvi = self.tvis.get(self.epoch)
        if keypair is None or original is None or current is None or tvi is None:
            return
        if self.registry.is_banned(self.node_id):
            return
        for code_range in original.ranges_of(keypair.public):
            if code_range in self.state.owned or (self.epoch, code_range) in self.reclaim_checked:
                continue
            holder = current.entry_for_range(code_range)
            first_owner = original.entry_for_range(code_range)
            if holder is None or first_owner is None or holder.pk != first_owner.backup_pk:
                continue
            self.reclaim_checked.add((self.epoch, code_range))
            mine = candidate_score(keypair.public, self.dictionary)[1]
            if mine >= holder.encoded_hash:
                self._record("halted", str(code_range))
                logger.info("%s yields %s to its backup", self.node_id, code_range)
                continue
            assignment = Assignment.create(
                self.scheme,
                keypair,
                AssignmentKind.RECLAIM,
                self.epoch,
                code_range,
                tvi,
                now + self.settle,
            )
            self._record("reclaim", str(code_range))
            self._broadcast(Kind.ASSIGN, assignment)
            self._apply_assignment(assignment)

    def _start_request(self, purpose: Purpose, code_range: ConsensusCodeRange, now: int) -> None:
        keypair = self.keypair
        if keypair is None:
            return
        if purpose is Purpose.REPLACE:
            self.replacing.add((self.epoch, code_range))
        request = ValidatorRequest.create(self.epoch, code_range, purpose, keypair.public, now)
        self.requests[request.request_id] = PendingRequest(request, deadline=now + 2 * self.settle)
        self._record("validator-request", f"{purpose.value} {code_range}")
        self._broadcast(Kind.VALIDATOR_REQUEST, request)

    def _on_validator_request(self, envelope: Envelope) -> None:
        request: ValidatorRequest = envelope.payload
        table = self.latest_table(self.epoch)
        if request.epoch != self.epoch or table is None or self.state.owned:
            return
        if self.registry.is_banned(self.node_id):
            return
        current = self.keys.get(self.epoch)
        if current is not None and current.public in table.members():
            return
        tvi = self.interest_for(self.epoch)
        if not self.registry.is_certified(tvi.pk):
            return
        self._send(request.requester_pk, Kind.VALIDATOR_OFFER, ValidatorOffer(request.request_id, tvi))

    def _on_validator_offer(self, envelope: Envelope) -> None:
        offer: ValidatorOffer = envelope.payload
        pending = self.requests.get(offer.request_id)
        if pending is None or offer.interest.epoch != self.epoch:
            return
        if offer.interest.verify(self.scheme) and self.registry.is_certified(offer.interest.pk):
            pending.offers.append(offer.interest)

    def _close_requests(self, now: int) -> None:
        for request_id, pending in list(self.requests.items()):
            if now < pending.deadline:
                continue
            del self.requests[request_id]
            self._conclude(pending, now)

    def _conclude(self, pending: PendingRequest, now: int) -> Assignment | None:
        request = pending.request
        keypair = self.keypair
        table = self.latest_table(self.epoch)
        if keypair is None or table is None or request.epoch != self.epoch:
            return None
        owned = self.state.owned.get(request.code_range)
        if not pending.offers:
            logger.warning(
                "%s: nobody answered the %s request for %s",
                self.node_id,
                request.purpose.value,
                request.code_range,
            )
            self._record("no-applicants", f"{request.purpose.value} {request.code_range}")
            if owned is not None:
                owned.split_requested = False
            self.replacing.discard((self.epoch, request.code_range))
            return None
        chosen_pk = rank_candidates(pending.offers, self.dictionary, epoch=self.epoch).entries[0].pk
        newcomer = next(tvi for tvi in pending.offers if tvi.pk == chosen_pk)
        activation = now + self.settle
        if request.purpose is Purpose.SPLIT:
            if owned is None:
                return None
            first, second = split_range(request.code_range)
            owned.frozen = True
            assignment = Assignment.create(
                self.scheme,
                keypair,
                AssignmentKind.SPLIT,
                self.epoch,
                request.code_range,
                newcomer,
                activation,
                first=first,
                second=second,
            )
            self._record("split", f"{request.code_range} -> {first} + {second}")
        else:
            assignment = Assignment.create(
                self.scheme,
                keypair,
                AssignmentKind.REASSIGN,
                self.epoch,
                request.code_range,
                newcomer,
                activation,
            )
            self._record("reassign", f"{request.code_range}")
        logger.info(
            "%s assigns %s (%s)", self.node_id, request.code_range, assignment.kind.value
        )
        self._broadcast(Kind.ASSIGN, assignment)
        self._apply_assignment(assignment)
        return assignment

    def trigger_load_balancing(
        self, code_range: ConsensusCodeRange, now: int
    ) -> ValidatorRequest | None:
        """Ask for a validator to share an overloaded range.

        Skipped when load balancing is disabled, when a request is already
        open, and within the guard window before block suppression.
        """
        owned = self.state.owned.get(code_range)
        monitor = self.protocol.monitor
        if owned is None or owned.split_requested or owned.frozen or not monitor.load_balancing:
            return None
        guard = monitor.lb_guard_intervals * self.protocol.block.interval_ms
        if now >= self.schedule.suppression_start(self.epoch) - guard:
            return None
        owned.split_requested = True
        self._start_request(Purpose.SPLIT, code_range, now)
        return next(
            (
                pending.request
                for pending in self.requests.values()
                if pending.request.code_range == code_range
            ),
            None,
        )

    def _check_overload(self, now: int, code_range: ConsensusCodeRange) -> None:
        owned = self.state.owned.get(code_range)
        if owned is None:
            return
        monitor = self.protocol.monitor
        block = self.protocol.block
        if len(owned.pool) <= monitor.overload_factor * block.size:
            owned.overloaded_since = None
            return
        if owned.overloaded_since is None:
            owned.overloaded_since = now
        if now - owned.overloaded_since >= monitor.overload_intervals * block.interval_ms:
            self.trigger_load_balancing(code_range, now)

    # ------------------------------------------------------------------
    # Assignments
    # ------------------------------------------------------------------

    def _on_assignment(self, envelope: Envelope) -> None:
        self._apply_assignment(envelope.payload)

    def _assignment_allowed(self, assignment: Assignment, table: ConsensusTable) -> bool:
        holder = table.entry_for_range(assignment.code_range)
        newcomer = assignment.newcomer
        if holder is None or newcomer.epoch != assignment.epoch or not newcomer.verify(self.scheme):
            return False
        if not self.registry.is_certified(newcomer.pk):
            return False
        kind = assignment.kind
        if kind is AssignmentKind.SPLIT:
            halves = split_range(assignment.code_range)
            return holder.pk == assignment.signer_pk and halves == (
                assignment.first,
                assignment.second,
            )
        if kind is AssignmentKind.TAKEOVER:
            return holder.backup_pk == assignment.signer_pk == newcomer.pk
        if kind is AssignmentKind.RECLAIM:
            original = self.genesis_table(assignment.epoch)
            first_owner = original.entry_for_range(assignment.code_range) if original else None
            claimant = candidate_score(assignment.signer_pk, self.dictionary)[1]
            return (
                first_owner is not None
                and first_owner.pk == assignment.signer_pk == newcomer.pk
                and holder.pk == first_owner.backup_pk
                and claimant < holder.encoded_hash
            )
        original = self.genesis_table(assignment.epoch)
        return original is not None and original.genesis_author == assignment.signer_pk

    def _apply_assignment(self, assignment: Assignment) -> None:
        table = self.latest_table(assignment.epoch)
        if assignment.epoch != self.epoch or table is None:
            return
        if not assignment.verify(self.scheme) or not self._assignment_allowed(assignment, table):
            logger.warning("%s ignored an invalid %s", self.node_id, assignment.kind.value)
            return
        weight, encoded = candidate_score(assignment.newcomer.pk, self.dictionary)
        holder = table.entry_for_range(assignment.code_range)
        assert holder is not None
        newcomer = TableEntry(
            pk=assignment.newcomer.pk,
            kwm=weight,
            code_range=assignment.code_range,
            backup_pk=None,
            encoded_hash=encoded,
            prev_pk=assignment.newcomer.prev_pk,
            interest_sign=assignment.newcomer.sign,
        )
        if assignment.kind is AssignmentKind.SPLIT:
            assert assignment.first is not None and assignment.second is not None
            amended = table.with_split(
                assignment.code_range, assignment.first, assignment.second, newcomer
            )
        else:
            amended = table.with_owner(assignment.code_range, newcomer)
        if assignment.kind is not AssignmentKind.REASSIGN:
            self.replacing.add((self.epoch, assignment.code_range))
        activation = max(assignment.activation, self.now)
        history = self.tables[self.epoch]
        history.append((activation, amended))
        history.sort(key=lambda item: item[0])
        keypair = self.keypair
        owned = self.state.owned.get(assignment.code_range)
        if owned is not None and keypair is not None and holder.pk == keypair.public:
            owned.frozen = True
        self.network.call_at(
            self.node_id, activation, lambda: self._activate(assignment)
        )

    def _activate(self, assignment: Assignment) -> None:
        if assignment.epoch != self.epoch:
            return
        keypair = self.keypair
        mine = keypair.public if keypair is not None else None
        parent = assignment.code_range
        touched = [parent]
        self.state.owned.pop(parent, None)
        if assignment.kind is AssignmentKind.SPLIT:
            assert assignment.first is not None and assignment.second is not None
            self.forest.fork(self.epoch, parent, assignment.first, assignment.second)
            touched = [assignment.first, assignment.second]
            if assignment.signer_pk == mine:
                self._take_range(assignment.first, ready_at=self.now + 1)
            if assignment.newcomer.pk == mine:
                self._take_range(assignment.second, ready_at=self.now + self.settle)
        elif assignment.newcomer.pk == mine:
            self._take_range(parent, ready_at=self.now + self.settle)
        self.replacing.discard((self.epoch, parent))
        # Transactions inherited from the previous owner expire within the grace.
        self._reseed_counters(touched, grace=self.protocol.expiry_ms + self.settle)
        self._refresh_role()
        logger.debug("%s activated %s on %s", self.node_id, assignment.kind.value, parent)
