"""Overloaded ranges split in two, with and without load balancing enabled."""

from __future__ import annotations

import logging

import numpy as np

from app.bench.config import ScenarioSpec
from app.bench.simulation import Simulation
from app.core.ranges import range_probability_exact
from app.core.types import ConsensusCodeRange
from app.crypto.hashing import code_value, digest_to_base62
from app.ledger.forest import ForkRecord

from . import scenario_registry
from .base import Scenario, ScenarioResult, Table, event_details, point_config
from .block_generation import commit_latencies

logger = logging.getLogger(__name__)


def halves_cover(parent: ConsensusCodeRange, first: ConsensusCodeRange, second: ConsensusCodeRange) -> bool:
    """``first`` and ``second`` are contiguous and together span ``parent``."""
    whole = parent if parent.k == first.k else parent.deepen()
    return (
        first.k == second.k == whole.k
        and first.low == whole.low
        and second.high == whole.high
        and code_value(first.high) + 1 == code_value(second.low)
    )


def sample_split_shares(
    record: ForkRecord, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Shares of uniformly random in-parent digests landing in each half."""
    first = second = 0
    while first + second < samples:
        batch = rng.integers(0, 256, size=(4096, 32), dtype=np.uint8)
        for row in batch:
            code = digest_to_base62(row.tobytes())
            if record.first.contains(code):
                first += 1
            elif record.second.contains(code):
                second += 1
            if first + second == samples:
                break
    return first / samples, second / samples


def expected_share(record: ForkRecord) -> tuple[float, bool]:
    """Exact share of the first half and whether every parent code is equally likely."""
    first = range_probability_exact(record.first)
    second = range_probability_exact(record.second)
    total = first + second
    if total == 0:
        return 0.5, False
    uniform = first * record.second.size == second * record.first.size
    return float(first / total), uniform


def ledger_share(sim: Simulation, record: ForkRecord) -> float:
    """Fraction of post-split commits that went to the first half."""
    forest = sim.observer().forest
    counts = [
        sum(len(block.transactions) for block in forest.ledgers[(record.epoch, half)].blocks)
        if (record.epoch, half) in forest.ledgers
        else 0
        for half in (record.first, record.second)
    ]
    total = sum(counts)
    return counts[0] / total if total else 0.0


class LoadBalancing(Scenario):
    """Run the same overloaded network with load balancing on and off.

    The halves of every split are then checked against 10 000 uniformly
    random in-range digests. The sampled share must sit within four
    standard errors of the exact one and, when every code of the parent is
    equally likely, each half must receive between 45% and 55%.
    """

    name = "load-balancing"
    header = ("mode", "splits", "committed", "stale_dropped", "mean_latency_ms", "first_half_share")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        halves = Table(
            ("parent", "first", "second", "expected_share", "first_share", "second_share", "samples")
        )
        result.extra["halves"] = halves
        samples = int(spec.param("samples", 10_000))
        low, high = float(spec.param("share_low", 0.45)), float(spec.param("share_high", 0.55))
        rng = np.random.default_rng(spec.sim.seed)
        splits_by_mode: dict[bool, int] = {}
        records: list[ForkRecord] = []
        for index, mode in enumerate(spec.param("modes", ["on", "off"])):
            enabled = str(mode).lower() in {"on", "true", "1"}
            protocol = spec.sim.protocol.with_overrides({"monitor.load_balancing": enabled})
            sim = Simulation(point_config(spec, index, protocol=protocol))
            run = sim.run()
            result.add_run(run)
            forks = list(sim.observer().forest.forks)
            splits = len(event_details(run, "split"))
            splits_by_mode[enabled] = splits_by_mode.get(enabled, 0) + splits
            if enabled:
                records.extend(forks)
            latencies = commit_latencies(sim.observer().forest)
            stale = sum(node.stats.stale_dropped for node in sim.nodes)
            share = ledger_share(sim, forks[0]) if forks else 0.0
            logger.info("Load balancing %s: %d split(s)", "on" if enabled else "off", splits)
            result.rows.append(
                (
                    "on" if enabled else "off",
                    splits,
                    len(latencies),
                    stale,
                    round(float(np.mean(latencies)), 3) if latencies else 0.0,
                    round(share, 4),
                )
            )
        balanced = bool(records)
        covered = bool(records)
        for record in records:
            first_share, second_share = sample_split_shares(record, samples, rng)
            expected, uniform = expected_share(record)
            error = 4 * (expected * (1 - expected) / samples) ** 0.5
            in_band = low <= first_share <= high and low <= second_share <= high
            balanced = balanced and abs(first_share - expected) <= error and (in_band or not uniform)
            covered = covered and halves_cover(record.parent, record.first, record.second)
            halves.rows.append(
                (
                    str(record.parent),
                    str(record.first),
                    str(record.second),
                    round(expected, 4),
                    round(first_share, 4),
                    round(second_share, 4),
                    samples,
                )
            )
        if True in splits_by_mode:
            result.checks["split-with-load-balancing"] = splits_by_mode[True] >= 1
            result.checks["halves-balanced"] = balanced
            result.checks["halves-cover-parent"] = covered
        if False in splits_by_mode:
            result.checks["no-split-without-load-balancing"] = splits_by_mode[False] == 0
        return result


scenario_registry.register(LoadBalancing.name, LoadBalancing)
