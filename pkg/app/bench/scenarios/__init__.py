"""Benchmark scenarios and their registry.

Each module registers its scenarios under the name used in scenario files::

    scenario_registry.register("honest-run", HonestRun)
"""

from __future__ import annotations

import importlib

from app.core.registry import Registry

from .base import Scenario, ScenarioFailure, ScenarioResult, Table

scenario_registry: Registry[Scenario] = Registry("scenario")

_MODULES: list[str] = [
    "formation",
    "block_generation",
    "load_balancing",
    "double_spending",
    "retrieval",
    "honest",
    "failover",
    "attacks",
    "overhead",
]

for _module in _MODULES:
    importlib.import_module(f"{__name__}.{_module}")

__all__ = ["Scenario", "ScenarioFailure", "ScenarioResult", "Table", "scenario_registry"]
