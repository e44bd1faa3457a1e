"""Scenario interface and the checks shared by several scenarios."""

from __future__ import annotations

import re
from abc import ABC, abstractmethod
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, ClassVar

from app.bench.config import ScenarioSpec
from app.bench.simulation import Simulation, commit_counts, committed_spends
from app.crypto.hashing import Digest
from app.ledger.forest import LedgerForest
from app.simnet.config import SimConfig
from app.simnet.network import RunResult

Row = tuple[Any, ...]


class ScenarioFailure(RuntimeError):
    """Raised when a scenario ran but one of its checks did not hold."""

    def __init__(self, name: str, failed: Sequence[str]) -> None:
        self.name = name
        self.failed = list(failed)
        super().__init__(f"Scenario {name} failed: {', '.join(self.failed)}")


@dataclass(slots=True)
class Table:
    header: tuple[str, ...]
    rows: list[Row] = field(default_factory=list)


@dataclass(slots=True)
class ScenarioResult:
    """CSV rows, trace lines, named checks and an optional forest."""

    name: str
    header: tuple[str, ...]
    rows: list[Row] = field(default_factory=list)
    checks: dict[str, bool] = field(default_factory=dict)
    trace: list[str] = field(default_factory=list)
    forest: LedgerForest | None = None
    extra: dict[str, Table] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [name for name, passed in self.checks.items() if not passed]

    @property
    def passed(self) -> bool:
        return not self.failed

    def add_run(self, result: RunResult) -> None:
        self.trace.extend(result.trace)
        self.trace.extend(event.line() for event in result.events)


class Scenario(ABC):
    """A named experiment; instances are created through the scenario registry."""

    name: ClassVar[str]
    header: ClassVar[tuple[str, ...]]

    @abstractmethod
    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        """Execute the scenario for ``spec`` (one seed)."""

    def result(self) -> ScenarioResult:
        return ScenarioResult(self.name, self.header)


def point_config(spec: ScenarioSpec, index: int, **changes: Any) -> SimConfig:
    """Config of sweep point ``index``: seed ``seed + index`` plus ``changes``."""
    return replace(spec.sim, seed=spec.sim.seed + index, **changes)


def event_details(result: RunResult, kind: str) -> list[tuple[int, str, str]]:
    return [(event.time, event.node, event.detail) for event in result.events if event.kind == kind]


def events_per_epoch(result: RunResult, kind: str) -> dict[int, int]:
    counts: dict[int, int] = {}
    for _, _, detail in event_details(result, kind):
        match = re.search(r"epoch=(\d+)", detail)
        if match is not None:
            epoch = int(match.group(1))
            counts[epoch] = counts.get(epoch, 0) + 1
    return counts


def reports_against(result: RunResult, kind: str, node_id: str) -> list[tuple[int, str, str]]:
    needle = f"{kind} accused={node_id} "
    return [item for item in event_details(result, "report") if item[2].startswith(needle)]


def double_spend_safe(sim: Simulation, result: RunResult) -> bool:
    """Every output committed twice comes with a double-spend report."""
    spends = committed_spends(sim.observer().forest)
    if all(len(spenders) < 2 for spenders in spends.values()):
        return True
    return any(detail.startswith("double-spend ") for _, _, detail in event_details(result, "report"))


def committed_once(forest: LedgerForest, t_ids: Iterable[Digest]) -> bool:
    counts = commit_counts(forest)
    return all(counts[t_id] == 1 for t_id in t_ids)
