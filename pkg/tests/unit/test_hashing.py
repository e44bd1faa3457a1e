from __future__ import annotations

import random

import pytest

from app.crypto.hashing import (
    ALPHABET,
    ENCODED_LENGTH,
    MalformedInputError,
    base62_to_digest,
    code_from_value,
    code_value,
    digest_to_base62,
    hash_content,
)


def test_alphabet_is_in_canonical_order() -> None:
    assert ALPHABET[:10] == "0123456789"
    assert ALPHABET[10] == "A"
    assert ALPHABET[36] == "a"
    assert list(ALPHABET) == sorted(ALPHABET)


def test_zero_digest_encodes_to_zeros() -> None:
    assert digest_to_base62(bytes(32)) == "0" * ENCODED_LENGTH


def test_max_digest_fits_and_round_trips() -> None:
    top = b"\xff" * 32
    encoded = digest_to_base62(top)
    assert len(encoded) == ENCODED_LENGTH
    assert encoded[0] == "y"
    assert base62_to_digest(encoded) == top


def test_leading_symbol_never_z() -> None:
    rng = random.Random(3)
    leading = {digest_to_base62(rng.randbytes(32))[0] for _ in range(20_000)}
    assert "z" not in leading
    assert "0" in leading


def test_string_order_matches_integer_order() -> None:
    rng = random.Random(5)
    digests = [rng.randbytes(32) for _ in range(200)]
    by_value = sorted(digests)
    by_encoding = sorted(digests, key=digest_to_base62)
    assert by_value == by_encoding


def test_distinct_digests_encode_distinctly() -> None:
    rng = random.Random(11)
    digests = {rng.randbytes(32) for _ in range(10_000)}
    assert len({digest_to_base62(d) for d in digests}) == len(digests)


def test_wrong_width_is_rejected() -> None:
    with pytest.raises(ValueError, match="32 bytes"):
        digest_to_base62(b"\x00" * 31)


def test_decode_rejects_foreign_symbol() -> None:
    text = "0" * (ENCODED_LENGTH - 1) + "!"
    with pytest.raises(MalformedInputError) as info:
        base62_to_digest(text)
    assert info.value.position == ENCODED_LENGTH - 1


def test_decode_rejects_values_beyond_digest_space() -> None:
    with pytest.raises(ValueError, match="exceeds"):
        base62_to_digest("z" * ENCODED_LENGTH)


def test_hash_content_is_sha256() -> None:
    assert hash_content(b"abc").hex().startswith("ba7816bf")


@pytest.mark.parametrize(("code", "value"), [("0", 0), ("z", 61), ("10", 62), ("zz", 3843)])
def test_code_value(code: str, value: int) -> None:
    assert code_value(code) == value
    assert code_from_value(value, len(code)) == code


def test_code_from_value_overflow() -> None:
    with pytest.raises(ValueError):
        code_from_value(62, 1)
