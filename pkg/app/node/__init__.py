"""Clients, validators and the messages they exchange."""

from __future__ import annotations

from .client import ClientNode
from .validator import NodeStats, ValidatorNode

__all__ = ["ClientNode", "NodeStats", "ValidatorNode"]
