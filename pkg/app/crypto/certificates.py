"""In-simulation certificate authority.

Every participant obtains its public keys from this registry. A banned
owner loses all of its certificates and cannot be issued new ones, which
is how misbehaving validators are kept out of later epochs.
"""

from __future__ import annotations

import logging

from app.crypto.signing import PublicKey

logger = logging.getLogger(__name__)


class CertifiedKeyRegistry:
    """Maps certified public keys to the owner they were issued to."""

    def __init__(self) -> None:
        self._owners: dict[PublicKey, str] = {}
        self._banned: dict[str, str] = {}

    def issue(self, owner: str, public: PublicKey) -> bool:
        """Certify ``public`` for ``owner``; returns ``False`` for banned owners."""
        if owner in self._banned:
            logger.warning("Refused certificate for banned owner %s", owner)
            return False
        self._owners[public] = owner
        return True

    def is_certified(self, public: PublicKey) -> bool:
        return public in self._owners

    def owner_of(self, public: PublicKey) -> str | None:
        return self._owners.get(public)

    def keys_of(self, owner: str) -> list[PublicKey]:
        return [pk for pk, name in self._owners.items() if name == owner]

    def is_banned(self, owner: str) -> bool:
        return owner in self._banned

    def ban(self, owner: str, reason: str) -> None:
        """Revoke every key of ``owner`` and refuse future issuance."""
        if owner in self._banned:
            return
        self._banned[owner] = reason
        revoked = self.keys_of(owner)
        for public in revoked:
            del self._owners[public]
        logger.info("Banned %s (%s); revoked %d key(s)", owner, reason, len(revoked))

    def banned(self) -> dict[str, str]:
        return dict(self._banned)
