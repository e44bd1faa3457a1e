"""Transactions, blocks, genesis blocks and consensus-code ranges.

All types are immutable. ``to_bytes``/``from_bytes`` give the canonical
record layout from :mod:`app.core.encoding`; hashes and signatures are
computed over dedicated preimages documented on each type.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, replace
from enum import Enum

from app.core.encoding import DecodeError, Reader, Writer
from app.core.merkle import merkle_root
from app.crypto.hashing import (
    BASE,
    Digest,
    check_symbols,
    code_from_value,
    code_value,
    digest_to_base62,
    hash_content,
)
from app.crypto.signing import KeyPair, PublicKey, Signature, SignatureScheme


class Verdict(Enum):
    APPROVED = "approved"
    ALREADY_SPENT = "already-spent"


@dataclass(frozen=True, slots=True)
class ConsensusCodeRange:
    """Inclusive interval ``[low, high]`` of ``k``-symbol codes."""

    k: int
    low: str
    high: str

    def __post_init__(self) -> None:
        if self.k < 1:
            msg = f"Range prefix length must be >= 1, got {self.k}"
            raise ValueError(msg)
        if len(self.low) != self.k or len(self.high) != self.k:
            msg = f"Range bounds {self.low!r}-{self.high!r} must both have length {self.k}"
            raise ValueError(msg)
        check_symbols(self.low)
        check_symbols(self.high)
        if self.low > self.high:
            msg = f"Range low {self.low!r} sorts after high {self.high!r}"
            raise ValueError(msg)

    @property
    def size(self) -> int:
        return code_value(self.high) - code_value(self.low) + 1

    @property
    def label(self) -> str:
        return f"{self.low}-{self.high}"

    @property
    def sort_key(self) -> tuple[str, int]:
        return (self.low, self.k)

    def contains(self, code: str) -> bool:
        """Whether ``code`` (at least ``k`` symbols long) falls in the range."""
        prefix = code[: self.k]
        return len(prefix) == self.k and self.low <= prefix <= self.high

    def covers(self, other: ConsensusCodeRange) -> bool:
        """Whether every code of ``other`` lies inside this range."""
        if other.k < self.k:
            return False
        return self.contains(other.low) and self.contains(other.high)

    def deepen(self) -> ConsensusCodeRange:
        """Same codes expressed with one more symbol."""
        return ConsensusCodeRange(self.k + 1, self.low + "0", self.high + "z")

    def codes(self) -> Iterable[str]:
        start = code_value(self.low)
        for value in range(start, start + self.size):
            yield code_from_value(value, self.k)

    @classmethod
    def parse(cls, label: str) -> ConsensusCodeRange:
        low, sep, high = label.partition("-")
        if not sep:
            msg = f"Range label {label!r} must look like 'LOW-HIGH'"
            raise ValueError(msg)
        return cls(len(low), low, high)

    def write(self, writer: Writer) -> Writer:
        return writer.int_(self.k).str_(self.low).str_(self.high)

    @classmethod
    def read(cls, reader: Reader) -> ConsensusCodeRange:
        return cls(reader.int_(), reader.str_(), reader.str_())

    def __str__(self) -> str:
        return self.label


def full_range(k: int = 1) -> ConsensusCodeRange:
    """Range spanning the whole ``62**k`` code space."""
    return ConsensusCodeRange(k, "0" * k, code_from_value(BASE**k - 1, k))


def code_of_digest(digest: Digest, k: int) -> str:
    return digest_to_base62(digest)[:k]


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Transaction:
    """Signed transfer with at most one spent input."""

    t_id: Digest
    timestamp: int
    input: Digest | None
    output: bytes
    pk: PublicKey
    sign: Signature

    @staticmethod
    def content(timestamp: int, input: Digest | None, output: bytes, pk: PublicKey) -> bytes:
        return (
            Writer()
            .str_("tx")
            .int_(timestamp)
            .optional_bytes(input)
            .bytes_(output)
            .bytes_(pk)
            .getvalue()
        )

    @classmethod
    def create(
        cls,
        scheme: SignatureScheme,
        keypair: KeyPair,
        timestamp: int,
        output: bytes,
        input: Digest | None = None,
    ) -> Transaction:
        if timestamp < 0:
            msg = f"Transaction timestamp must be >= 0, got {timestamp}"
            raise ValueError(msg)
        content = cls.content(timestamp, input, output, keypair.public)
        return cls(
            t_id=hash_content(content),
            timestamp=timestamp,
            input=input,
            output=output,
            pk=keypair.public,
            sign=scheme.sign(keypair, content),
        )

    def verify(self, scheme: SignatureScheme) -> bool:
        if self.timestamp < 0:
            return False
        content = self.content(self.timestamp, self.input, self.output, self.pk)
        if hash_content(content) != self.t_id:
            return False
        return scheme.verify(self.pk, content, self.sign)

    def write(self, writer: Writer) -> Writer:
        return (
            writer.bytes_(self.t_id)
            .int_(self.timestamp)
            .optional_bytes(self.input)
            .bytes_(self.output)
            .bytes_(self.pk)
            .bytes_(self.sign)
        )

    @classmethod
    def read(cls, reader: Reader) -> Transaction:
        t_id = Digest(reader.bytes_())
        timestamp = reader.int_()
        raw_input = reader.optional_bytes()
        return cls(
            t_id=t_id,
            timestamp=timestamp,
            input=Digest(raw_input) if raw_input is not None else None,
            output=reader.bytes_(),
            pk=PublicKey(reader.bytes_()),
            sign=Signature(reader.bytes_()),
        )

    def to_bytes(self) -> bytes:
        return self.write(Writer()).getvalue()


@dataclass(frozen=True, slots=True)
class ValidatorInterestTx:
    """Application for a validator slot in ``epoch``.

    A continuing validator links its fresh key to the key it used in the
    previous epoch through ``prev_pk`` and ``prev_sign``.
    """

    t_id: Digest
    epoch: int
    pk: PublicKey
    sign: Signature
    prev_pk: PublicKey | None = None
    prev_sign: Signature | None = None

    @staticmethod
    def content(epoch: int, pk: PublicKey, prev_pk: PublicKey | None) -> bytes:
        return Writer().str_("interest").int_(epoch).bytes_(pk).optional_bytes(prev_pk).getvalue()

    @staticmethod
    def continuity_message(epoch: int, pk: PublicKey) -> bytes:
        return Writer().str_("continuity").int_(epoch).bytes_(pk).getvalue()

    @classmethod
    def create(
        cls,
        scheme: SignatureScheme,
        keypair: KeyPair,
        epoch: int,
        previous: KeyPair | None = None,
    ) -> ValidatorInterestTx:
        prev_pk = previous.public if previous is not None else None
        content = cls.content(epoch, keypair.public, prev_pk)
        prev_sign = None
        if previous is not None:
            prev_sign = scheme.sign(previous, cls.continuity_message(epoch, keypair.public))
        return cls(
            t_id=hash_content(content),
            epoch=epoch,
            pk=keypair.public,
            sign=scheme.sign(keypair, content),
            prev_pk=prev_pk,
            prev_sign=prev_sign,
        )

    def verify(self, scheme: SignatureScheme) -> bool:
        content = self.content(self.epoch, self.pk, self.prev_pk)
        if hash_content(content) != self.t_id or not scheme.verify(self.pk, content, self.sign):
            return False
        if self.prev_pk is None:
            return self.prev_sign is None
        if self.prev_sign is None:
            return False
        message = self.continuity_message(self.epoch, self.pk)
        return scheme.verify(self.prev_pk, message, self.prev_sign)

    def write(self, writer: Writer) -> Writer:
        return (
            writer.bytes_(self.t_id)
            .int_(self.epoch)
            .bytes_(self.pk)
            .bytes_(self.sign)
            .optional_bytes(self.prev_pk)
            .optional_bytes(self.prev_sign)
        )

    @classmethod
    def read(cls, reader: Reader) -> ValidatorInterestTx:
        t_id = Digest(reader.bytes_())
        epoch = reader.int_()
        pk = PublicKey(reader.bytes_())
        sign = Signature(reader.bytes_())
        prev_pk = reader.optional_bytes()
        prev_sign = reader.optional_bytes()
        return cls(
            t_id=t_id,
            epoch=epoch,
            pk=pk,
            sign=sign,
            prev_pk=PublicKey(prev_pk) if prev_pk is not None else None,
            prev_sign=Signature(prev_sign) if prev_sign is not None else None,
        )

    def to_bytes(self) -> bytes:
        return self.write(Writer()).getvalue()


@dataclass(frozen=True, slots=True)
class SpendAuthorization:
    """Signed answer of the validator responsible for a spent output."""

    t_out_id: Digest
    spender_id: Digest
    authorizer_pk: PublicKey
    verdict: Verdict
    sign: Signature

    @staticmethod
    def message(t_out_id: Digest, spender_id: Digest, verdict: Verdict) -> bytes:
        return (
            Writer()
            .str_("spend")
            .bytes_(t_out_id)
            .bytes_(spender_id)
            .str_(verdict.value)
            .getvalue()
        )

    @classmethod
    def create(
        cls,
        scheme: SignatureScheme,
        keypair: KeyPair,
        t_out_id: Digest,
        spender_id: Digest,
        verdict: Verdict,
    ) -> SpendAuthorization:
        message = cls.message(t_out_id, spender_id, verdict)
        return cls(t_out_id, spender_id, keypair.public, verdict, scheme.sign(keypair, message))

    @property
    def approved(self) -> bool:
        return self.verdict is Verdict.APPROVED

    def verify(self, scheme: SignatureScheme) -> bool:
        message = self.message(self.t_out_id, self.spender_id, self.verdict)
        return scheme.verify(self.authorizer_pk, message, self.sign)

    def write(self, writer: Writer) -> Writer:
        return (
            writer.bytes_(self.t_out_id)
            .bytes_(self.spender_id)
            .bytes_(self.authorizer_pk)
            .str_(self.verdict.value)
            .bytes_(self.sign)
        )

    @classmethod
    def read(cls, reader: Reader) -> SpendAuthorization:
        return cls(
            t_out_id=Digest(reader.bytes_()),
            spender_id=Digest(reader.bytes_()),
            authorizer_pk=PublicKey(reader.bytes_()),
            verdict=Verdict(reader.str_()),
            sign=Signature(reader.bytes_()),
        )

    def to_bytes(self) -> bytes:
        return self.write(Writer()).getvalue()


# ---------------------------------------------------------------------------
# Blocks
# ---------------------------------------------------------------------------

LedgerHead = tuple[ConsensusCodeRange, Digest | None]


def ledger_leaf(code_range: ConsensusCodeRange, head: Digest | None) -> Digest:
    payload = code_range.write(Writer(tag=None)).optional_bytes(head).getvalue()
    return hash_content(payload)


def ledger_hashes_root(heads: Iterable[LedgerHead]) -> Digest:
    return merkle_root([ledger_leaf(code_range, head) for code_range, head in heads])


def transactions_root(transactions: Iterable[Transaction]) -> Digest:
    return merkle_root([tx.t_id for tx in transactions])


@dataclass(frozen=True, slots=True)
class Block:
    """One block of a range ledger.

    The header preimage covers epoch, height, previous hash, validator key,
    range, both merkle roots and the timestamp. The ledger-hash vector, the
    signature and the spend authorizations stay outside of it, so dropping
    the vector during compaction keeps every block hash intact.
    """

    epoch: int
    height: int
    prev_hash: Digest
    validator_pk: PublicKey
    code_range: ConsensusCodeRange
    ledger_hashes: tuple[LedgerHead, ...] | None
    ledger_merkle_root: Digest
    tx_merkle_root: Digest
    transactions: tuple[Transaction, ...]
    timestamp: int
    validator_sign: Signature
    authorizations: tuple[SpendAuthorization, ...] = ()

    @staticmethod
    def header_preimage(
        epoch: int,
        height: int,
        prev_hash: Digest,
        validator_pk: PublicKey,
        code_range: ConsensusCodeRange,
        ledger_merkle_root: Digest,
        tx_merkle_root: Digest,
        timestamp: int,
    ) -> bytes:
        writer = Writer().str_("block").int_(epoch).int_(height).bytes_(prev_hash)
        writer.bytes_(validator_pk)
        code_range.write(writer)
        return (
            writer.bytes_(ledger_merkle_root).bytes_(tx_merkle_root).int_(timestamp).getvalue()
        )

    def header_bytes(self) -> bytes:
        return self.header_preimage(
            self.epoch,
            self.height,
            self.prev_hash,
            self.validator_pk,
            self.code_range,
            self.ledger_merkle_root,
            self.tx_merkle_root,
            self.timestamp,
        )

    def block_hash(self) -> Digest:
        return hash_content(self.header_bytes())

    @classmethod
    def assemble(
        cls,
        scheme: SignatureScheme,
        keypair: KeyPair,
        *,
        epoch: int,
        height: int,
        prev_hash: Digest,
        code_range: ConsensusCodeRange,
        ledger_hashes: tuple[LedgerHead, ...] | None,
        transactions: Iterable[Transaction],
        timestamp: int,
        authorizations: Iterable[SpendAuthorization] = (),
    ) -> Block:
        """Compute roots, sign the header and return the block."""
        txs = tuple(transactions)
        ledger_root = ledger_hashes_root(ledger_hashes or ())
        tx_root = transactions_root(txs)
        preimage = cls.header_preimage(
            epoch, height, prev_hash, keypair.public, code_range, ledger_root, tx_root, timestamp
        )
        return cls(
            epoch=epoch,
            height=height,
            prev_hash=prev_hash,
            validator_pk=keypair.public,
            code_range=code_range,
            ledger_hashes=ledger_hashes,
            ledger_merkle_root=ledger_root,
            tx_merkle_root=tx_root,
            transactions=txs,
            timestamp=timestamp,
            validator_sign=scheme.sign(keypair, preimage),
            authorizations=tuple(authorizations),
        )

    def compacted(self) -> Block:
        return replace(self, ledger_hashes=None)

    def write(self, writer: Writer) -> Writer:
        writer.int_(self.epoch).int_(self.height).bytes_(self.prev_hash)
        writer.bytes_(self.validator_pk)
        self.code_range.write(writer)
        if self.ledger_hashes is None:
            writer.bool_(False)
        else:
            writer.bool_(True).count(len(self.ledger_hashes))
            for code_range, head in self.ledger_hashes:
                code_range.write(writer).optional_bytes(head)
        writer.bytes_(self.ledger_merkle_root).bytes_(self.tx_merkle_root)
        writer.count(len(self.transactions))
        for tx in self.transactions:
            tx.write(writer)
        writer.int_(self.timestamp).bytes_(self.validator_sign)
        writer.count(len(self.authorizations))
        for auth in self.authorizations:
            auth.write(writer)
        return writer

    @classmethod
    def read(cls, reader: Reader) -> Block:
        epoch = reader.int_()
        height = reader.int_()
        prev_hash = Digest(reader.bytes_())
        validator_pk = PublicKey(reader.bytes_())
        code_range = ConsensusCodeRange.read(reader)
        ledger_hashes: tuple[LedgerHead, ...] | None = None
        if reader.bool_():
            heads: list[LedgerHead] = []
            for _ in range(reader.count()):
                head_range = ConsensusCodeRange.read(reader)
                head = reader.optional_bytes()
                heads.append((head_range, Digest(head) if head is not None else None))
            ledger_hashes = tuple(heads)
        ledger_root = Digest(reader.bytes_())
        tx_root = Digest(reader.bytes_())
        transactions = tuple(Transaction.read(reader) for _ in range(reader.count()))
        timestamp = reader.int_()
        sign = Signature(reader.bytes_())
        authorizations = tuple(SpendAuthorization.read(reader) for _ in range(reader.count()))
        return cls(
            epoch=epoch,
            height=height,
            prev_hash=prev_hash,
            validator_pk=validator_pk,
            code_range=code_range,
            ledger_hashes=ledger_hashes,
            ledger_merkle_root=ledger_root,
            tx_merkle_root=tx_root,
            transactions=transactions,
            timestamp=timestamp,
            validator_sign=sign,
            authorizations=authorizations,
        )

    def to_bytes(self) -> bytes:
        return self.write(Writer()).getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, *, base_offset: int = 0) -> Block:
        reader = Reader(data, base_offset=base_offset)
        block = cls.read(reader)
        reader.expect_end()
        return block


@dataclass(frozen=True, slots=True)
class GenesisEntry:
    """One validator line of a genesis block.

    ``code_range`` is ``None`` for a validator leaving after the previous
    epoch and ``hash_ledger`` is ``None`` for a validator new this epoch.
    ``sign`` is the validator's interest signature for the epoch.
    """

    pk: PublicKey
    code_range: ConsensusCodeRange | None
    sign: Signature | None
    hash_ledger: Digest | None
    prev_pk: PublicKey | None = None

    @property
    def departing(self) -> bool:
        return self.code_range is None

    def write(self, writer: Writer) -> Writer:
        writer.bytes_(self.pk)
        if self.code_range is None:
            writer.bool_(False)
        else:
            self.code_range.write(writer.bool_(True))
        return (
            writer.optional_bytes(self.sign)
            .optional_bytes(self.hash_ledger)
            .optional_bytes(self.prev_pk)
        )

    @classmethod
    def read(cls, reader: Reader) -> GenesisEntry:
        pk = PublicKey(reader.bytes_())
        code_range = ConsensusCodeRange.read(reader) if reader.bool_() else None
        sign = reader.optional_bytes()
        hash_ledger = reader.optional_bytes()
        prev_pk = reader.optional_bytes()
        return cls(
            pk=pk,
            code_range=code_range,
            sign=Signature(sign) if sign is not None else None,
            hash_ledger=Digest(hash_ledger) if hash_ledger is not None else None,
            prev_pk=PublicKey(prev_pk) if prev_pk is not None else None,
        )


@dataclass(frozen=True, slots=True)
class Approval:
    pk: PublicKey
    sign: Signature


@dataclass(frozen=True, slots=True)
class GenesisBlock:
    """Root of one epoch: validator set, ranges and closing ledger hashes.

    Approvals are gathered after the block circulates and are therefore not
    part of the hashed body.
    """

    epoch: int
    total_val: int
    entries: tuple[GenesisEntry, ...]
    prev_genesis: Digest | None
    author_pk: PublicKey
    timestamp: int
    approvals: tuple[Approval, ...] = ()

    def body_bytes(self) -> bytes:
        writer = Writer().str_("genesis").int_(self.epoch).int_(self.total_val)
        writer.count(len(self.entries))
        for entry in self.entries:
            entry.write(writer)
        writer.optional_bytes(self.prev_genesis).bytes_(self.author_pk).int_(self.timestamp)
        return writer.getvalue()

    def block_hash(self) -> Digest:
        return hash_content(self.body_bytes())

    @staticmethod
    def approval_message(genesis_hash: Digest) -> bytes:
        return Writer().str_("approve").bytes_(genesis_hash).getvalue()

    def current_entries(self) -> tuple[GenesisEntry, ...]:
        return tuple(entry for entry in self.entries if not entry.departing)

    def departing_entries(self) -> tuple[GenesisEntry, ...]:
        return tuple(entry for entry in self.entries if entry.departing)

    def with_approvals(self, approvals: Iterable[Approval]) -> GenesisBlock:
        return replace(self, approvals=tuple(approvals))

    def to_bytes(self) -> bytes:
        writer = Writer().bytes_(self.body_bytes()).count(len(self.approvals))
        for approval in self.approvals:
            writer.bytes_(approval.pk).bytes_(approval.sign)
        return writer.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes, *, base_offset: int = 0) -> GenesisBlock:
        outer = Reader(data, base_offset=base_offset)
        body_offset = outer.offset + 4
        body = outer.bytes_()
        approvals = tuple(
            Approval(PublicKey(outer.bytes_()), Signature(outer.bytes_()))
            for _ in range(outer.count())
        )
        outer.expect_end()
        reader = Reader(body, base_offset=body_offset)
        if reader.str_() != "genesis":
            raise DecodeError("Record is not a genesis block", body_offset)
        epoch = reader.int_()
        total_val = reader.int_()
        entries = tuple(GenesisEntry.read(reader) for _ in range(reader.count()))
        prev = reader.optional_bytes()
        author = PublicKey(reader.bytes_())
        timestamp = reader.int_()
        reader.expect_end()
        return cls(
            epoch=epoch,
            total_val=total_val,
            entries=entries,
            prev_genesis=Digest(prev) if prev is not None else None,
            author_pk=author,
            timestamp=timestamp,
            approvals=approvals,
        )
