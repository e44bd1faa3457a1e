from __future__ import annotations

import random
import sys
from collections.abc import Callable
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.core.config import Settings, settings  # noqa: E402
from app.crypto.certificates import CertifiedKeyRegistry  # noqa: E402
from app.crypto.signing import KeyPair, MacScheme  # noqa: E402


@pytest.fixture
def scheme() -> MacScheme:
    """Fast signature scheme; keys only verify within this instance."""
    return MacScheme()


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture
def registry() -> CertifiedKeyRegistry:
    return CertifiedKeyRegistry()


@pytest.fixture
def make_keypair(
    scheme: MacScheme, rng: random.Random, registry: CertifiedKeyRegistry
) -> Callable[[str], KeyPair]:
    """Generate a key and certify it for ``owner``."""

    def _make(owner: str = "owner") -> KeyPair:
        keypair = scheme.generate(rng)
        registry.issue(owner, keypair.public)
        return keypair

    return _make


@pytest.fixture
def fast_protocol() -> Settings:
    return settings.with_overrides({"crypto.signature_scheme": "mac"})
