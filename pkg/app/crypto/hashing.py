"""Content hashing and the base-62 digest encoding."""

from __future__ import annotations

import hashlib
from typing import NewType

Digest = NewType("Digest", bytes)

HASH_WIDTH = 32
ALPHABET = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz"
BASE = len(ALPHABET)
# Smallest length able to hold every 256-bit value.
ENCODED_LENGTH = 43

_INDEX = {symbol: index for index, symbol in enumerate(ALPHABET)}
_DIGEST_SPACE = 1 << (8 * HASH_WIDTH)


class MalformedInputError(ValueError):
    """Raised when a string holds symbols outside the base-62 alphabet."""

    def __init__(self, text: str, position: int) -> None:
        self.text = text
        self.position = position
        super().__init__(
            f"Symbol {text[position]!r} at position {position} is not part of the "
            f"base-62 alphabet ({ALPHABET[0]}-{ALPHABET[-1]})"
        )


def hash_content(payload: bytes) -> Digest:
    """Return the SHA-256 digest of ``payload``."""
    return Digest(hashlib.sha256(payload).digest())


def symbol_index(symbol: str) -> int:
    """Return the canonical position of ``symbol`` in the alphabet."""
    try:
        return _INDEX[symbol]
    except KeyError:
        raise MalformedInputError(symbol, 0) from None


def check_symbols(text: str) -> None:
    """Raise :class:`MalformedInputError` for the first foreign symbol in ``text``."""
    for position, symbol in enumerate(text):
        if symbol not in _INDEX:
            raise MalformedInputError(text, position)


def digest_to_base62(digest: Digest | bytes) -> str:
    """Encode ``digest`` as a fixed-length base-62 string.

    The digest is read as an unsigned big-endian integer and written most
    significant symbol first, left padded with ``'0'``. Because the alphabet
    is in ASCII order, comparing two encodings as strings compares the
    underlying integers.
    """
    if len(digest) != HASH_WIDTH:
        msg = f"Digest must be {HASH_WIDTH} bytes, got {len(digest)}"
        raise ValueError(msg)
    value = int.from_bytes(digest, "big")
    symbols = ["0"] * ENCODED_LENGTH
    position = ENCODED_LENGTH - 1
    while value:
        value, rem = divmod(value, BASE)
        symbols[position] = ALPHABET[rem]
        position -= 1
    return "".join(symbols)


def base62_to_digest(text: str) -> Digest:
    """Decode a string produced by :func:`digest_to_base62`."""
    if len(text) != ENCODED_LENGTH:
        msg = f"Encoded digest must be {ENCODED_LENGTH} symbols, got {len(text)}"
        raise ValueError(msg)
    check_symbols(text)
    value = 0
    for symbol in text:
        value = value * BASE + _INDEX[symbol]
    if value >= _DIGEST_SPACE:
        msg = f"Encoded value {text!r} exceeds the {HASH_WIDTH}-byte digest space"
        raise ValueError(msg)
    return Digest(value.to_bytes(HASH_WIDTH, "big"))


def digest_space() -> int:
    """Number of distinct digests."""
    return _DIGEST_SPACE


def code_value(code: str) -> int:
    """Integer value of a base-62 code read most significant symbol first."""
    check_symbols(code)
    value = 0
    for symbol in code:
        value = value * BASE + _INDEX[symbol]
    return value


def code_from_value(value: int, k: int) -> str:
    """Inverse of :func:`code_value` for codes of length ``k``."""
    if not 0 <= value < BASE**k:
        msg = f"Value {value} does not fit in {k} base-62 symbol(s)"
        raise ValueError(msg)
    symbols = ["0"] * k
    for position in range(k - 1, -1, -1):
        value, rem = divmod(value, BASE)
        symbols[position] = ALPHABET[rem]
    return "".join(symbols)
