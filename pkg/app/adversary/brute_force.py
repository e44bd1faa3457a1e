"""Steering a transaction into a chosen consensus-code range.

An adversary that wants its transaction validated by an accomplice keeps
moving the timestamp back one millisecond at a time until the transaction
hash lands in the accomplice's range. Only hashing is needed per attempt;
the winning transaction is signed once at the end. The validity window
bounds how far back the timestamp may go.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

from app.core.ranges import allocate_ranges, range_probability
from app.core.types import ConsensusCodeRange, Transaction
from app.crypto.hashing import digest_to_base62, hash_content
from app.crypto.signing import KeyPair, SignatureScheme

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class BruteForceResult:
    success: bool
    attempts: int
    elapsed: float
    transaction: Transaction | None = None


def expected_attempts(code_range: ConsensusCodeRange) -> float:
    """Mean attempts of the geometric search, ``1 / p(range)``."""
    return 1.0 / range_probability(code_range)


TARGETS = ("first", "middle")


def target_range(j: int, position: str = "middle") -> ConsensusCodeRange:
    """Range of the accomplice among the ``j`` ranges of a table.

    ``first`` is the widest range. ``middle`` holds only codes whose leading
    symbol is fully represented, so its expected attempts stay close to ``j``
    while each range spans at least two symbols.

    Raises
    ------
    ValueError
        If ``position`` is not one of ``TARGETS``.
    """
    if position not in TARGETS:
        msg = f"Unknown target position {position!r}, expected one of {TARGETS}"
        raise ValueError(msg)
    ranges = allocate_ranges(j)
    return ranges[0] if position == "first" else ranges[j // 2]


def brute_force_double_spend(
    adv_range: ConsensusCodeRange,
    base_tx: Transaction,
    delta: int,
    attempt_budget: int,
    *,
    scheme: SignatureScheme,
    keypair: KeyPair,
) -> BruteForceResult:
    """Search timestamps ``base_tx.timestamp, base_tx.timestamp - 1, ...``.

    At most ``delta + 1`` timestamps are tried (never below 0), and at most
    ``attempt_budget``. On success the returned transaction is signed by
    ``keypair`` and keeps the input and output of ``base_tx``.
    """
    started = time.perf_counter()
    newest = base_tx.timestamp
    oldest = max(0, newest - delta)
    attempts = 0
    for timestamp in range(newest, oldest - 1, -1):
        if attempts >= attempt_budget:
            break
        attempts += 1
        content = Transaction.content(timestamp, base_tx.input, base_tx.output, keypair.public)
        if adv_range.contains(digest_to_base62(hash_content(content))):
            tx = Transaction.create(
                scheme, keypair, timestamp, base_tx.output, input=base_tx.input
            )
            return BruteForceResult(True, attempts, time.perf_counter() - started, tx)
    logger.debug("No timestamp within %d ms lands in %s", delta, adv_range)
    return BruteForceResult(False, attempts, time.perf_counter() - started)
