"""Signature schemes behind a small protocol.

Two schemes are registered:

``ed25519``
    Real Ed25519 signatures from :mod:`cryptography`.
``mac``
    A keyed-MAC stand-in for fast simulations. Verification looks the
    secret up by public key, so it only works inside one process sharing the
    scheme instance. Never use it outside tests and benchmarks.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass, field
from typing import NewType, Protocol

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from app.core.registry import Registry

PublicKey = NewType("PublicKey", bytes)
Signature = NewType("Signature", bytes)


@dataclass(frozen=True, slots=True)
class KeyPair:
    """A public key with its secret material."""

    public: PublicKey
    secret: bytes = field(repr=False)


class SignatureScheme(Protocol):
    name: str

    def generate(self, rng: random.Random) -> KeyPair: ...

    def sign(self, keypair: KeyPair, message: bytes) -> Signature: ...

    def verify(self, public: PublicKey, message: bytes, signature: Signature) -> bool: ...


class Ed25519Scheme:
    """Ed25519 keys derived from a seeded RNG so simulations are repeatable."""

    name = "ed25519"

    def generate(self, rng: random.Random) -> KeyPair:
        private = Ed25519PrivateKey.from_private_bytes(rng.randbytes(32))
        secret = private.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        public = private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        return KeyPair(PublicKey(public), secret)

    def sign(self, keypair: KeyPair, message: bytes) -> Signature:
        private = Ed25519PrivateKey.from_private_bytes(keypair.secret)
        return Signature(private.sign(message))

    def verify(self, public: PublicKey, message: bytes, signature: Signature) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


class MacScheme:
    """HMAC-SHA256 test double satisfying the signature contract."""

    name = "mac"

    def __init__(self) -> None:
        self._secrets: dict[PublicKey, bytes] = {}

    def generate(self, rng: random.Random) -> KeyPair:
        secret = rng.randbytes(32)
        public = PublicKey(hashlib.sha256(b"mac-public:" + secret).digest())
        self._secrets[public] = secret
        return KeyPair(public, secret)

    def sign(self, keypair: KeyPair, message: bytes) -> Signature:
        return Signature(hmac.new(keypair.secret, message, hashlib.sha256).digest())

    def verify(self, public: PublicKey, message: bytes, signature: Signature) -> bool:
        secret = self._secrets.get(public)
        if secret is None:
            return False
        expected = hmac.new(secret, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


signature_schemes: Registry[SignatureScheme] = Registry("signature scheme")
signature_schemes.register(Ed25519Scheme.name, Ed25519Scheme)
signature_schemes.register(MacScheme.name, MacScheme)


def make_scheme(name: str) -> SignatureScheme:
    """Return a fresh scheme instance registered under ``name``."""
    return signature_schemes.create(name)
