from __future__ import annotations

from app.core.merkle import merkle_root
from app.crypto.hashing import hash_content


def test_empty_list_hashes_empty_payload() -> None:
    assert merkle_root([]) == hash_content(b"")


def test_single_leaf_is_hashed_once() -> None:
    assert merkle_root([b"a"]) == hash_content(b"a")


def test_two_leaves() -> None:
    assert merkle_root([b"a", b"b"]) == hash_content(b"ab")


def test_odd_level_duplicates_last_leaf() -> None:
    three = merkle_root([b"a", b"b", b"c"])
    four = merkle_root([b"a", b"b", b"c", b"c"])
    assert three == four
    assert three == hash_content(hash_content(b"ab") + hash_content(b"cc"))


def test_order_matters() -> None:
    assert merkle_root([b"a", b"b"]) != merkle_root([b"b", b"a"])
