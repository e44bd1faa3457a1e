from __future__ import annotations

import random

import pytest

from app.core.registry import UnknownEntryError
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.signing import Ed25519Scheme, MacScheme, make_scheme, signature_schemes


def test_ed25519_sign_and_verify() -> None:
    scheme = Ed25519Scheme()
    keypair = scheme.generate(random.Random(1))
    signature = scheme.sign(keypair, b"message")
    assert len(keypair.public) == 32
    assert scheme.verify(keypair.public, b"message", signature)
    assert not scheme.verify(keypair.public, b"other", signature)
    assert not scheme.verify(keypair.public, b"message", b"\x00" * 64)


def test_ed25519_keys_follow_the_seed() -> None:
    scheme = Ed25519Scheme()
    first = scheme.generate(random.Random(9))
    second = scheme.generate(random.Random(9))
    assert first.public == second.public


def test_mac_scheme_only_verifies_its_own_keys() -> None:
    scheme = MacScheme()
    keypair = scheme.generate(random.Random(1))
    signature = scheme.sign(keypair, b"m")
    assert scheme.verify(keypair.public, b"m", signature)
    assert not MacScheme().verify(keypair.public, b"m", signature)


def test_scheme_registry() -> None:
    assert signature_schemes.names() == ["ed25519", "mac"]
    assert make_scheme("mac").name == "mac"
    with pytest.raises(UnknownEntryError, match="Available: ed25519, mac"):
        make_scheme("rsa")


def test_certificates_and_bans() -> None:
    scheme = MacScheme()
    rng = random.Random(2)
    registry = CertifiedKeyRegistry()
    first = scheme.generate(rng).public
    second = scheme.generate(rng).public
    assert registry.issue("v01", first)
    assert registry.issue("v01", second)
    assert registry.owner_of(first) == "v01"
    assert registry.keys_of("v01") == [first, second]

    registry.ban("v01", "double-spend")

    assert registry.is_banned("v01")
    assert not registry.is_certified(first)
    assert registry.keys_of("v01") == []
    assert not registry.issue("v01", scheme.generate(rng).public)
    assert registry.banned() == {"v01": "double-spend"}


def test_ban_is_logged(caplog: pytest.LogCaptureFixture) -> None:
    registry = CertifiedKeyRegistry()
    registry.issue("v02", MacScheme().generate(random.Random(3)).public)
    with caplog.at_level("INFO", logger="app.crypto.certificates"):
        registry.ban("v02", "dos")
        registry.issue("v02", MacScheme().generate(random.Random(4)).public)
    assert "Banned v02 (dos); revoked 1 key(s)" in caplog.text
    assert "Refused certificate for banned owner v02" in caplog.text
