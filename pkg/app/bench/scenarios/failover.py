"""Crashed, stalled and isolated validators and the backups that replace them."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from app.bench.config import ScenarioSpec
from app.bench.simulation import Simulation
from app.core.types import ConsensusCodeRange
from app.simnet.network import RunResult

from . import scenario_registry
from .base import Scenario, ScenarioResult, event_details

logger = logging.getLogger(__name__)

MODES = ("kill", "kill-both", "stall")


@dataclass(slots=True)
class Fault:
    """Who was hit, resolved when the fault fires."""

    time: int
    victim: str = ""
    backup: str = ""
    code_range: ConsensusCodeRange | None = None


def first_event(run: RunResult, kind: str, node: str | None, prefix: str, after: int) -> int | None:
    """Time of the first ``kind`` event at or after ``after`` whose detail starts with ``prefix``."""
    for time, source, detail in event_details(run, kind):
        if time >= after and (node is None or source == node) and detail.startswith(prefix):
            return time
    return None


def schedule_fault(sim: Simulation, at: int, mode: str, stall_ms: int) -> Fault:
    """Hit the owner of table entry 1 of epoch 1 at ``at``."""
    fault = Fault(at)

    def strike() -> None:
        entry, victim = sim.entry_node(1, 1)
        backup = sim.node_of(entry.backup_pk) if entry.backup_pk is not None else None
        fault.victim = victim.node_id
        fault.backup = backup.node_id if backup is not None else ""
        fault.code_range = entry.code_range
        logger.info("%s %s, owner of %s", mode, victim.node_id, entry.code_range)
        if mode == "stall":
            sim.stall(victim.node_id, at + stall_ms)
        elif mode == "isolate":
            sim.isolate(victim.node_id)
        else:
            sim.kill(victim.node_id)
            if mode == "kill-both" and backup is not None:
                sim.kill(backup.node_id)

    sim.at(at, strike)
    return fault


class Failover(Scenario):
    """One run per mode; the victim is the second entry of the first table.

    ``kill`` expects the backup to take over and commit within one silence
    window, one block interval, two settle delays and a tick. ``kill-both``
    expects the genesis author to reassign the range to a standby node and
    ``stall`` expects the returning primary to either reclaim or yield.
    """

    name = "failover"
    header = (
        "mode",
        "victim",
        "backup",
        "fault_ms",
        "takeover_ms",
        "first_backup_block_ms",
        "reassign_ms",
    )

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        protocol = spec.sim.protocol
        schedule = spec.sim.schedule
        at = int(spec.param("at_ms", schedule.epoch_start(1) + 1_000))
        stall_ms = int(spec.param("stall_ms", protocol.silence_ms + 2 * protocol.block.interval_ms))
        bound = (
            protocol.silence_ms
            + protocol.block.interval_ms
            + 2 * protocol.settle_ms
            + 2 * protocol.tick_ms
        )
        for mode in [str(item) for item in spec.param("modes", list(MODES))]:
            if mode not in MODES:
                msg = f"Unknown failover mode '{mode}' (expected one of {', '.join(MODES)})"
                raise ValueError(msg)
            sim = Simulation(spec.sim)
            fault = schedule_fault(sim, at, mode, stall_ms)
            run = sim.run()
            result.add_run(run)
            if fault.code_range is None:
                result.checks[f"{mode}-fault-fired"] = False
                continue
            prefix = f"{fault.code_range} "
            takeover = first_event(run, "takeover", fault.backup, prefix, at)
            first_block = first_event(run, "block-formed", fault.backup, prefix, at)
            reassign = first_event(run, "reassign", None, str(fault.code_range), at)
            if mode == "kill":
                result.checks["kill-takeover"] = takeover is not None
                result.checks["kill-backup-commits-in-time"] = (
                    first_block is not None and first_block <= at + bound
                )
            elif mode == "kill-both":
                result.checks["kill-both-reassign"] = reassign is not None
            else:
                back = [
                    detail
                    for kind in ("reclaim", "halted")
                    for _, node, detail in event_details(run, kind)
                    if node == fault.victim and detail == str(fault.code_range)
                ]
                result.checks["stall-takeover"] = takeover is not None
                result.checks["stall-reclaim-or-yield"] = len(back) == 1
            result.rows.append(
                (
                    mode,
                    fault.victim,
                    fault.backup,
                    at,
                    takeover if takeover is not None else "",
                    first_block if first_block is not None else "",
                    reassign if reassign is not None else "",
                )
            )
        return result


class Isolation(Scenario):
    """Partition the second table entry's owner; nothing reaches it or leaves it."""

    name = "isolation"
    header = ("victim", "backup", "fault_ms", "takeover_ms", "delivered_after")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        schedule = spec.sim.schedule
        settle = spec.sim.protocol.settle_ms
        at = int(spec.param("at_ms", schedule.epoch_start(1) + 1_000))
        sim = Simulation(spec.sim)
        fault = schedule_fault(sim, at, "isolate", 0)
        run = sim.run()
        result.add_run(run)
        if fault.code_range is None:
            result.checks["isolation-fired"] = False
            return result
        takeover = first_event(run, "takeover", fault.backup, f"{fault.code_range} ", at)
        leaked = 0
        for line in run.trace:
            time, src, dst, kind, _ = line.split(",")
            if kind.startswith("drop:") or int(time) < at + settle:
                continue
            if fault.victim in (src, dst):
                leaked += 1
        result.checks["isolated-takeover"] = takeover is not None
        result.checks["isolated-silent"] = leaked == 0
        result.rows.append(
            (fault.victim, fault.backup, at, takeover if takeover is not None else "", leaked)
        )
        return result


scenario_registry.register(Failover.name, Failover)
scenario_registry.register(Isolation.name, Isolation)
