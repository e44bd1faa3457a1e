"""A fault-free network over several epochs; every safety property must hold."""

from __future__ import annotations

import logging

from app.bench.config import ScenarioSpec
from app.bench.simulation import Simulation, ledger_digest
from app.consensus.setup import approval_threshold_met
from app.simnet.network import RunResult

from . import scenario_registry
from .base import Scenario, ScenarioResult, committed_once, events_per_epoch

logger = logging.getLogger(__name__)


def blocks_inside_epochs(sim: Simulation) -> bool:
    """Every block is timestamped within its epoch, before block suppression."""
    schedule = sim.schedule
    return all(
        schedule.epoch_start(block.epoch) <= block.timestamp < schedule.suppression_start(block.epoch)
        for node in sim.nodes
        for _, block in node.forest.iter_blocks()
    )


def replicas_agree(sim: Simulation) -> bool:
    reference = ledger_digest(sim.observer().forest)
    return all(
        ledger_digest(node.forest) == reference
        for node in sim.nodes
        if node.node_id not in sim.faulted | sim.adversaries
    )


def messages_accounted(run: RunResult) -> bool:
    metrics = run.metrics
    return metrics["sent"] == metrics["delivered"] + metrics["dropped"]


class HonestRun(Scenario):
    name = "honest-run"
    header = ("epoch", "validators", "blocks", "transactions", "approvals")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        sim = Simulation(spec.sim)
        run = sim.run()
        result.add_run(run)
        forest = sim.observer().forest
        built = events_per_epoch(run, "genesis-built")
        quorum = True
        for epoch in range(1, spec.sim.epochs + 1):
            genesis = forest.genesis_of(epoch)
            blocks = [block for _, block in forest.iter_blocks(epoch)]
            if genesis is None:
                quorum = False
                result.rows.append((epoch, 0, len(blocks), 0, 0))
                continue
            approvals = len(genesis.approvals)
            quorum = quorum and approval_threshold_met(approvals, genesis.total_val)
            result.rows.append(
                (
                    epoch,
                    genesis.total_val,
                    len(blocks),
                    sum(len(block.transactions) for block in blocks),
                    approvals,
                )
            )
        epochs = range(1, spec.sim.epochs + 1)
        problems = {node.node_id: node.forest.check_integrity() for node in sim.nodes}
        for node_id, found in problems.items():
            for problem in found:
                logger.error("%s: %s", node_id, problem)
        submitted = sim.submitted()
        result.checks["submitted-committed-once"] = bool(submitted) and committed_once(
            forest, submitted
        )
        result.checks["blocks-inside-epochs"] = blocks_inside_epochs(sim)
        result.checks["one-genesis-per-epoch"] = all(built.get(epoch) == 1 for epoch in epochs)
        result.checks["genesis-quorum"] = quorum
        result.checks["forest-integrity"] = not any(problems.values())
        if spec.param("check_replicas", True):
            result.checks["replicas-agree"] = replicas_agree(sim)
        result.checks["messages-accounted"] = messages_accounted(run)
        result.forest = forest
        return result


scenario_registry.register(HonestRun.name, HonestRun)
