"""Counters and trace records of a simulated run."""

from __future__ import annotations

import hashlib
from collections import Counter
from collections.abc import Iterable
from dataclasses import dataclass, field


@dataclass(frozen=True, slots=True)
class TraceRecord:
    time: int
    src: str
    dst: str
    kind: str
    size: int
    dropped: bool = False

    def line(self) -> str:
        kind = f"drop:{self.kind}" if self.dropped else self.kind
        return f"{self.time},{self.src},{self.dst},{kind},{self.size}"


@dataclass(frozen=True, slots=True)
class ProtocolEvent:
    """A protocol milestone such as a formed block or an adopted genesis."""

    time: int
    node: str
    kind: str
    detail: str = ""

    def line(self) -> str:
        return f"{self.time},{self.node},{self.kind},{self.detail}"


@dataclass(slots=True)
class NetworkMetrics:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    bytes_delivered: int = 0
    sent_by_kind: Counter[str] = field(default_factory=Counter)
    # Each broadcast counted once, whatever the number of recipients.
    broadcast_bytes: Counter[str] = field(default_factory=Counter)
    broadcasts: Counter[str] = field(default_factory=Counter)

    @property
    def in_flight(self) -> int:
        return self.sent - self.delivered - self.dropped

    def snapshot(self) -> dict[str, int]:
        data = {
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "in_flight": self.in_flight,
            "bytes_delivered": self.bytes_delivered,
        }
        for kind in sorted(self.broadcast_bytes):
            data[f"broadcast_bytes.{kind}"] = self.broadcast_bytes[kind]
        return data


def trace_digest(lines: Iterable[str]) -> str:
    """SHA-256 over the newline-joined trace; equal digests mean equal runs."""
    digest = hashlib.sha256()
    for line in lines:
        digest.update(line.encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def packet_overhead_setup(j: int, psi: float, big_psi: int) -> int:
    """Bytes broadcast during one setup round: ``2 * psi * j + big_psi``.

    ``psi`` is the mean size of one validator's setup message (interest and
    table view averaged) and ``big_psi`` the size of the genesis block.
    """
    if j < 1:
        msg = f"Validator count must be >= 1, got {j}"
        raise ValueError(msg)
    return round(2 * psi * j + big_psi)
