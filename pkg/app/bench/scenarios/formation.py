"""Wall-clock cost of forming a consensus table and its genesis block."""

from __future__ import annotations

import logging
import random
import time

import numpy as np

from app.bench.config import ScenarioSpec
from app.consensus.setup import (
    approve_genesis,
    build_genesis_block,
    collect_interest,
    validate_genesis_block,
)
from app.consensus.table import SetupStep, rank_candidates
from app.core.ranges import prefix_length
from app.core.types import ValidatorInterestTx
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.signing import make_scheme

from . import scenario_registry
from .base import Scenario, ScenarioResult

logger = logging.getLogger(__name__)


class ConsensusFormation(Scenario):
    """Time collection, ranking, genesis building, approval and validation.

    Key generation happens before the timer starts. Each ``j`` is measured
    ``repeats`` times and the median is reported.
    """

    name = "consensus-formation"
    header = ("j", "k", "wall_ms")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        protocol = spec.sim.protocol
        schedule = spec.sim.schedule
        dictionary = protocol.crypto.dictionary()
        repeats = int(spec.param("repeats", 3))
        window = schedule.step_window(1, SetupStep.INTEREST)
        all_valid = True
        for index, j in enumerate(spec.int_list("js", range(10, 501, 10))):
            scheme = make_scheme(protocol.crypto.signature_scheme)
            rng = random.Random(f"formation:{spec.sim.seed + index}")
            registry = CertifiedKeyRegistry()
            keys = [scheme.generate(rng) for _ in range(j)]
            for number, keypair in enumerate(keys):
                registry.issue(f"v{number:03d}", keypair.public)
            by_pk = {keypair.public: keypair for keypair in keys}
            incoming = [(window[0], ValidatorInterestTx.create(scheme, kp, 1)) for kp in keys]
            samples = []
            for _ in range(repeats):
                started = time.perf_counter()
                collected = collect_interest(window, incoming, registry, scheme, epoch=1)
                table = rank_candidates(collected, dictionary, epoch=1)
                genesis = build_genesis_block(
                    table,
                    None,
                    {},
                    caller=by_pk[table.genesis_author],
                    scheme=scheme,
                    timestamp=window[1],
                )
                approvals = [approve_genesis(genesis, by_pk[pk], scheme) for pk in table.pks()]
                verdict = validate_genesis_block(genesis.with_approvals(approvals), table, scheme)
                samples.append((time.perf_counter() - started) * 1000)
                all_valid = all_valid and verdict.accepted
            wall_ms = float(np.median(samples))
            logger.info("Formed a %d-validator table in %.2f ms", j, wall_ms)
            result.rows.append((j, prefix_length(j), round(wall_ms, 3)))
        result.checks["genesis-valid"] = all_valid
        return result


scenario_registry.register(ConsensusFormation.name, ConsensusFormation)
