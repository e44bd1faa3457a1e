"""Scripted attackers: brute-forced codes, double spends, dropping and sybil keys."""

from __future__ import annotations

from .brute_force import (
    BruteForceResult,
    brute_force_double_spend,
    expected_attempts,
    target_range,
)
from .nodes import ColludingValidator, DoubleSpendClient, SelectiveDropValidator, SybilValidator

__all__ = [
    "BruteForceResult",
    "ColludingValidator",
    "DoubleSpendClient",
    "SelectiveDropValidator",
    "SybilValidator",
    "brute_force_double_spend",
    "expected_attempts",
    "target_range",
]
