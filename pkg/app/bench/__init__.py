"""Benchmark harness: scenario files, simulated networks and result files."""

from __future__ import annotations

from .config import ConfigError, ScenarioSpec, load_scenario, parse_scenario
from .runner import RunReport, run_spec
from .simulation import Simulation

__all__ = [
    "ConfigError",
    "RunReport",
    "ScenarioSpec",
    "Simulation",
    "load_scenario",
    "parse_scenario",
    "run_spec",
]
