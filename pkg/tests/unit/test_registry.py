from __future__ import annotations

import pytest

from app.bench.scenarios import scenario_registry
from app.core.registry import Registry, UnknownEntryError


def test_register_and_create() -> None:
    registry: Registry[list[int]] = Registry("thing")
    registry.register("empty", list)
    assert registry.create("empty") == []
    assert registry.names() == ["empty"]


def test_duplicate_registration_fails() -> None:
    registry: Registry[list[int]] = Registry()
    registry.register("a", list)
    with pytest.raises(ValueError, match="already registered"):
        registry.register("a", list)


def test_unknown_name_lists_options() -> None:
    registry: Registry[list[int]] = Registry("thing")
    registry.register("b", list)
    registry.register("a", list)
    with pytest.raises(UnknownEntryError) as info:
        registry.create("c")
    assert str(info.value) == "Unknown thing 'c'. Available: a, b."
    assert isinstance(info.value, KeyError)


def test_every_scenario_is_registered() -> None:
    assert scenario_registry.names() == sorted(
        [
            "block-generation",
            "dos",
            "double-spending",
            "failover",
            "honest-run",
            "isolation",
            "load-balancing",
            "packet-overhead",
            "retrieval",
            "simultaneous-double-spend",
            "sybil",
            "consensus-formation",
        ]
    )
