"""Partitioning of the consensus-code space."""

from __future__ import annotations

from collections.abc import Sequence
from fractions import Fraction

from app.core.types import ConsensusCodeRange, Transaction
from app.crypto.hashing import (
    BASE,
    ENCODED_LENGTH,
    code_from_value,
    code_value,
    digest_space,
    digest_to_base62,
)


class InvalidInputError(ValueError):
    """Raised for arguments outside an operation's domain."""


def prefix_length(j: int) -> int:
    """Smallest ``k >= 1`` with ``62**k >= j``."""
    if j < 1:
        msg = f"Validator count must be >= 1, got {j}"
        raise InvalidInputError(msg)
    k = 1
    while BASE**k < j:
        k += 1
    return k


def allocate_ranges(j: int) -> list[ConsensusCodeRange]:
    """Split the ``62**k`` code space into ``j`` contiguous ranges.

    Sizes differ by at most one, the larger ranges come first, and ranges
    follow canonical symbol order (digits, uppercase, lowercase).

    Raises
    ------
    InvalidInputError
        If ``j`` is smaller than one.
    """
    k = prefix_length(j)
    size, extra = divmod(BASE**k, j)
    ranges: list[ConsensusCodeRange] = []
    start = 0
    for index in range(j):
        width = size + (1 if index < extra else 0)
        end = start + width - 1
        ranges.append(ConsensusCodeRange(k, code_from_value(start, k), code_from_value(end, k)))
        start = end + 1
    return ranges


def split_range(code_range: ConsensusCodeRange) -> tuple[ConsensusCodeRange, ConsensusCodeRange]:
    """Halve ``code_range``; the first half keeps the low end.

    A single-code range is first deepened by one symbol so a split is always
    possible.
    """
    if code_range.size < 2:
        code_range = code_range.deepen()
    k = code_range.k
    low = code_value(code_range.low)
    high = code_value(code_range.high)
    first_size = (code_range.size + 1) // 2
    pivot = low + first_size
    first = ConsensusCodeRange(k, code_range.low, code_from_value(pivot - 1, k))
    second = ConsensusCodeRange(k, code_from_value(pivot, k), code_from_value(high, k))
    return first, second


def code_of_transaction(tx: Transaction, k: int) -> str:
    """First ``k`` symbols of the encoded transaction id."""
    if not 1 <= k <= ENCODED_LENGTH:
        msg = f"Prefix length must be within 1..{ENCODED_LENGTH}, got {k}"
        raise InvalidInputError(msg)
    return digest_to_base62(tx.t_id)[:k]


def find_range(ranges: Sequence[ConsensusCodeRange], code: str) -> int | None:
    """Index of the range containing ``code`` or ``None``."""
    for index, code_range in enumerate(ranges):
        if code_range.contains(code):
            return index
    return None


def range_probability_exact(code_range: ConsensusCodeRange) -> Fraction:
    """Probability that a uniformly random digest encodes into ``code_range``.

    The encoding is a big-integer conversion, so the leading symbols are not
    uniform: 2**256 is slightly below 61 * 62**42, which leaves the last
    symbols of the first position under-represented.
    """
    scale = BASE ** (ENCODED_LENGTH - code_range.k)
    space = digest_space()
    start = code_value(code_range.low) * scale
    end = min((code_value(code_range.high) + 1) * scale, space)
    if start >= space:
        return Fraction(0)
    return Fraction(end - start, space)


def range_probability(code_range: ConsensusCodeRange) -> float:
    return float(range_probability_exact(code_range))
