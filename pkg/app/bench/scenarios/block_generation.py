"""Commit latency and per-transaction cost as the submission rate grows."""

from __future__ import annotations

import logging
import time

import numpy as np

from app.bench.config import ScenarioSpec
from app.bench.simulation import Simulation
from app.ledger.forest import LedgerForest

from . import scenario_registry
from .base import Scenario, ScenarioResult, point_config

logger = logging.getLogger(__name__)


def commit_latencies(forest: LedgerForest) -> list[int]:
    """Block timestamp minus transaction timestamp, for every committed transaction."""
    return [
        block.timestamp - tx.timestamp
        for _, block in forest.iter_blocks()
        for tx in block.transactions
    ]


class BlockGeneration(Scenario):
    """Sweep the total rate (transactions per second across all clients)."""

    name = "block-generation"
    header = (
        "rate",
        "committed",
        "blocks",
        "tx_per_block",
        "mean_latency_ms",
        "wall_ms",
        "wall_us_per_tx",
    )

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        clients = max(1, spec.sim.clients)
        costs: list[float] = []
        for index, rate in enumerate(spec.int_list("rates", [10, 50, 100, 150, 200, 250])):
            config = point_config(spec, index, clients=clients, tx_rate=rate / clients)
            sim = Simulation(config)
            started = time.perf_counter()
            run = sim.run()
            wall_ms = (time.perf_counter() - started) * 1000
            result.add_run(run)
            forest = sim.observer().forest
            samples = commit_latencies(forest)
            committed = len(samples)
            latency = float(np.mean(samples)) if samples else 0.0
            per_tx = wall_ms * 1000 / committed if committed else float("inf")
            costs.append(per_tx)
            blocks = forest.block_count()
            fill = committed / blocks if blocks else 0.0
            logger.info("Rate %d tx/s: %d committed, mean latency %.1f ms", rate, committed, latency)
            result.rows.append(
                (
                    rate,
                    committed,
                    blocks,
                    round(fill, 3),
                    round(latency, 3),
                    round(wall_ms, 3),
                    round(per_tx, 3),
                )
            )
        result.checks["per-tx-cost-falls"] = len(costs) < 2 or costs[-1] < costs[0]
        return result


scenario_registry.register(BlockGeneration.name, BlockGeneration)
