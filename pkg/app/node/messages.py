"""Wire messages exchanged by nodes, besides the core records themselves."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from app.core.encoding import Writer
from app.core.types import (
    Approval,
    ConsensusCodeRange,
    SpendAuthorization,
    Transaction,
    ValidatorInterestTx,
)
from app.crypto.hashing import Digest, hash_content
from app.crypto.signing import KeyPair, PublicKey, Signature, SignatureScheme


class Kind(str, Enum):
    TX = "tx"
    INTEREST = "interest"
    VIEW = "view"
    GENESIS = "genesis"
    APPROVAL = "approval"
    BLOCK = "block"
    SPEND_REQUEST = "spend-request"
    SPEND_RESPONSE = "spend-response"
    REPORT = "report"
    VALIDATOR_REQUEST = "validator-request"
    VALIDATOR_OFFER = "validator-offer"
    ASSIGN = "assign"


SETUP_KINDS = (Kind.INTEREST, Kind.VIEW, Kind.GENESIS)


@dataclass(frozen=True, slots=True)
class ApprovalMessage:
    epoch: int
    genesis_hash: Digest
    approval: Approval

    def to_bytes(self) -> bytes:
        return (
            Writer()
            .str_(Kind.APPROVAL.value)
            .int_(self.epoch)
            .bytes_(self.genesis_hash)
            .bytes_(self.approval.pk)
            .bytes_(self.approval.sign)
            .getvalue()
        )


@dataclass(frozen=True, slots=True)
class SpendRequest:
    epoch: int
    spender: Transaction

    def to_bytes(self) -> bytes:
        writer = Writer().str_(Kind.SPEND_REQUEST.value).int_(self.epoch)
        return self.spender.write(writer).getvalue()


@dataclass(frozen=True, slots=True)
class SpendResponse:
    epoch: int
    authorization: SpendAuthorization

    def to_bytes(self) -> bytes:
        writer = Writer().str_(Kind.SPEND_RESPONSE.value).int_(self.epoch)
        return self.authorization.write(writer).getvalue()


class ReportKind(str, Enum):
    DOUBLE_SPEND = "double-spend"
    DOS = "dos"
    SILENCE = "silence"


@dataclass(frozen=True, slots=True)
class MisbehaviorReport:
    """Signed accusation against the validator ``accused_pk``."""

    kind: ReportKind
    epoch: int
    accused_pk: PublicKey
    code_range: ConsensusCodeRange | None
    reporter_pk: PublicKey
    evidence: bytes
    sign: Signature

    @staticmethod
    def body(
        kind: ReportKind,
        epoch: int,
        accused_pk: PublicKey,
        code_range: ConsensusCodeRange | None,
        evidence: bytes,
    ) -> bytes:
        writer = Writer().str_(Kind.REPORT.value).str_(kind.value).int_(epoch).bytes_(accused_pk)
        if code_range is None:
            writer.bool_(False)
        else:
            code_range.write(writer.bool_(True))
        return writer.bytes_(evidence).getvalue()

    @classmethod
    def create(
        cls,
        scheme: SignatureScheme,
        reporter: KeyPair,
        kind: ReportKind,
        epoch: int,
        accused_pk: PublicKey,
        code_range: ConsensusCodeRange | None,
        evidence: bytes = b"",
    ) -> MisbehaviorReport:
        body = cls.body(kind, epoch, accused_pk, code_range, evidence)
        return cls(
            kind, epoch, accused_pk, code_range, reporter.public, evidence, scheme.sign(reporter, body)
        )

    def verify(self, scheme: SignatureScheme) -> bool:
        body = self.body(self.kind, self.epoch, self.accused_pk, self.code_range, self.evidence)
        return scheme.verify(self.reporter_pk, body, self.sign)

    def to_bytes(self) -> bytes:
        body = self.body(self.kind, self.epoch, self.accused_pk, self.code_range, self.evidence)
        return Writer().bytes_(body).bytes_(self.reporter_pk).bytes_(self.sign).getvalue()


class Purpose(str, Enum):
    SPLIT = "split"
    REPLACE = "replace"


@dataclass(frozen=True, slots=True)
class ValidatorRequest:
    """Call for applicants to take over or share ``code_range``."""

    request_id: Digest
    epoch: int
    code_range: ConsensusCodeRange
    purpose: Purpose
    requester_pk: PublicKey

    @classmethod
    def create(
        cls,
        epoch: int,
        code_range: ConsensusCodeRange,
        purpose: Purpose,
        requester_pk: PublicKey,
        issued_at: int,
    ) -> ValidatorRequest:
        seed = Writer().int_(epoch).str_(code_range.label).str_(purpose.value).int_(issued_at)
        request_id = hash_content(seed.bytes_(requester_pk).getvalue())
        return cls(request_id, epoch, code_range, purpose, requester_pk)

    def to_bytes(self) -> bytes:
        writer = Writer().str_(Kind.VALIDATOR_REQUEST.value).bytes_(self.request_id)
        writer.int_(self.epoch)
        self.code_range.write(writer)
        return writer.str_(self.purpose.value).bytes_(self.requester_pk).getvalue()


@dataclass(frozen=True, slots=True)
class ValidatorOffer:
    request_id: Digest
    interest: ValidatorInterestTx

    def to_bytes(self) -> bytes:
        writer = Writer().str_(Kind.VALIDATOR_OFFER.value).bytes_(self.request_id)
        return self.interest.write(writer).getvalue()


class AssignmentKind(str, Enum):
    SPLIT = "split"
    TAKEOVER = "takeover"
    RECLAIM = "reclaim"
    REASSIGN = "reassign"


@dataclass(frozen=True, slots=True)
class Assignment:
    """Signed mid-epoch change of range ownership, effective at ``activation``.

    ``split`` keeps ``first`` with the signer (the parent's owner) and hands
    ``second`` to ``newcomer``; the other kinds hand ``code_range`` itself
    to ``newcomer``.
    """

    kind: AssignmentKind
    epoch: int
    code_range: ConsensusCodeRange
    newcomer: ValidatorInterestTx
    activation: int
    signer_pk: PublicKey
    sign: Signature
    first: ConsensusCodeRange | None = None
    second: ConsensusCodeRange | None = None

    @staticmethod
    def body(
        kind: AssignmentKind,
        epoch: int,
        code_range: ConsensusCodeRange,
        newcomer: ValidatorInterestTx,
        activation: int,
        first: ConsensusCodeRange | None,
        second: ConsensusCodeRange | None,
    ) -> bytes:
        writer = Writer().str_(Kind.ASSIGN.value).str_(kind.value).int_(epoch)
        code_range.write(writer)
        newcomer.write(writer).int_(activation)
        for half in (first, second):
            if half is None:
                writer.bool_(False)
            else:
                half.write(writer.bool_(True))
        return writer.getvalue()

    @classmethod
    def create(
        cls,
        scheme: SignatureScheme,
        signer: KeyPair,
        kind: AssignmentKind,
        epoch: int,
        code_range: ConsensusCodeRange,
        newcomer: ValidatorInterestTx,
        activation: int,
        *,
        first: ConsensusCodeRange | None = None,
        second: ConsensusCodeRange | None = None,
    ) -> Assignment:
        body = cls.body(kind, epoch, code_range, newcomer, activation, first, second)
        return cls(
            kind,
            epoch,
            code_range,
            newcomer,
            activation,
            signer.public,
            scheme.sign(signer, body),
            first,
            second,
        )

    def verify(self, scheme: SignatureScheme) -> bool:
        body = self.body(
            self.kind,
            self.epoch,
            self.code_range,
            self.newcomer,
            self.activation,
            self.first,
            self.second,
        )
        return scheme.verify(self.signer_pk, body, self.sign)

    def to_bytes(self) -> bytes:
        body = self.body(
            self.kind,
            self.epoch,
            self.code_range,
            self.newcomer,
            self.activation,
            self.first,
            self.second,
        )
        return Writer().bytes_(body).bytes_(self.signer_pk).bytes_(self.sign).getvalue()
