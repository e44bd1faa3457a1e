"""Cost of steering a spend into an accomplice's range, and spend-check delay."""

from __future__ import annotations

import logging
import random
import time

import numpy as np

from app.adversary.brute_force import (
    TARGETS,
    brute_force_double_spend,
    expected_attempts,
    target_range,
)
from app.bench.config import ConfigError, ScenarioSpec
from app.bench.simulation import Simulation
from app.core.types import Transaction
from app.crypto.signing import make_scheme

from . import scenario_registry
from .base import Scenario, ScenarioResult, Table, point_config

logger = logging.getLogger(__name__)


def spend_delays(sim: Simulation) -> dict[str, list[int]]:
    """Commit latency of plain transactions and of spends, split by authorizer.

    A spend is ``local`` when the validator committing it also authorized it.
    """
    delays: dict[str, list[int]] = {"plain": [], "spend-local": [], "spend-remote": []}
    for _, block in sim.observer().forest.iter_blocks():
        authorizers = {auth.spender_id: auth.authorizer_pk for auth in block.authorizations}
        for tx in block.transactions:
            latency = block.timestamp - tx.timestamp
            if tx.input is None:
                delays["plain"].append(latency)
            elif authorizers.get(tx.t_id) == block.validator_pk:
                delays["spend-local"].append(latency)
            else:
                delays["spend-remote"].append(latency)
    return delays


class DoubleSpending(Scenario):
    """Brute-force attempts against the geometric oracle for several ``j``.

    The accomplice holds the ``target`` range (``middle`` or ``first``). Every
    trial starts from its own timestamp window so trials never share a hash
    input. A second table measures how long a spend waits for its
    authorization when the authorizer is local or remote.
    """

    name = "double-spending"
    header = ("j", "trials", "mean_attempts", "expected", "success_rate", "wall_ms")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        protocol = spec.sim.protocol
        trials = int(spec.param("trials", 2000))
        tolerance = float(spec.param("tolerance", 0.10))
        delta = int(spec.param("delta_ms", protocol.expiry_ms))
        scheme = make_scheme(protocol.crypto.signature_scheme)
        keypair = scheme.generate(random.Random(f"brute-force:{spec.sim.seed}"))
        position = str(spec.param("target", "middle"))
        if position not in TARGETS:
            msg = f"Parameter 'target' of {self.name} must be one of {TARGETS}"
            raise ConfigError(msg)
        means: list[float] = []
        within = True
        for j in spec.int_list("js", [5, 10, 20, 50]):
            target = target_range(j, position)
            attempts: list[int] = []
            successes = 0
            started = time.perf_counter()
            for trial in range(trials):
                newest = (trial + 1) * (delta + 1) - 1
                base = Transaction.create(scheme, keypair, newest, b"accomplice")
                outcome = brute_force_double_spend(
                    target, base, delta, delta + 1, scheme=scheme, keypair=keypair
                )
                attempts.append(outcome.attempts)
                successes += outcome.success
            wall_ms = (time.perf_counter() - started) * 1000
            mean_attempts = float(np.mean(attempts))
            expected = expected_attempts(target)
            within = within and abs(mean_attempts - expected) <= tolerance * expected
            means.append(mean_attempts)
            logger.info("j=%d: %.2f attempts on average (oracle %.2f)", j, mean_attempts, expected)
            result.rows.append(
                (
                    j,
                    trials,
                    round(mean_attempts, 3),
                    round(expected, 3),
                    round(successes / trials, 4),
                    round(wall_ms, 3),
                )
            )
        result.checks["attempts-match-oracle"] = within
        result.checks["attempts-grow-with-j"] = all(a < b for a, b in zip(means, means[1:]))
        if spec.param("spend_delay", True):
            result.extra["spend_delay"] = self._spend_delay(spec, result)
        return result

    def _spend_delay(self, spec: ScenarioSpec, result: ScenarioResult) -> Table:
        fraction = float(spec.param("spend_fraction", 0.3))
        sim = Simulation(point_config(spec, 0, spend_fraction=fraction))
        result.add_run(sim.run())
        table = Table(("kind", "count", "mean_latency_ms"))
        for kind, values in spend_delays(sim).items():
            mean = round(float(np.mean(values)), 3) if values else 0.0
            table.rows.append((kind, len(values), mean))
        return table


scenario_registry.register(DoubleSpending.name, DoubleSpending)
