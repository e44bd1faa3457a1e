"""Binary merkle root over digests."""

from __future__ import annotations

from collections.abc import Sequence

from app.crypto.hashing import Digest, hash_content


def merkle_root(leaves: Sequence[bytes]) -> Digest:
    """Return the merkle root of ``leaves``.

    An empty list hashes the empty payload and a single leaf is hashed once.
    Otherwise adjacent leaves are concatenated and hashed level by level,
    duplicating the last leaf of an odd-sized level.
    """
    if not leaves:
        return hash_content(b"")
    if len(leaves) == 1:
        return hash_content(leaves[0])
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [hash_content(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return Digest(level[0])
