"""Bytes broadcast while forming one table, against the closed-form estimate."""

from __future__ import annotations

import logging

from app.bench.config import ScenarioSpec
from app.bench.simulation import Simulation
from app.node.messages import Kind
from app.simnet.metrics import packet_overhead_setup

from . import scenario_registry
from .base import Scenario, ScenarioResult, point_config

logger = logging.getLogger(__name__)


class PacketOverhead(Scenario):
    """Each ``j`` forms the first table on a lossless network without clients.

    ``psi`` averages the serialized interest and view of one validator and
    ``big_psi`` is the serialized genesis block; the estimate is compared
    with the bytes the network counted. Approvals are reported separately.
    """

    name = "packet-overhead"
    header = ("j", "psi", "big_psi", "formula", "measured", "approval_bytes")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        protocol = spec.sim.protocol.with_overrides({"network.drop_rate": 0.0})
        tolerance = float(spec.param("tolerance", 0.01))
        matches = True
        counted = True
        for index, j in enumerate(spec.int_list("js", [5, 10, 50])):
            config = point_config(
                spec, index, validators=j, standby=0, clients=0, epochs=1, protocol=protocol
            )
            sim = Simulation(config)
            result.add_run(sim.run(until=config.schedule.epoch_start(1) + 1))
            sizes = sim.network.metrics.broadcast_bytes
            counts = sim.network.metrics.broadcasts
            setup = sim.observer().setups[1]
            if not setup.interest or not setup.views or setup.genesis is None:
                logger.warning("j=%d: setup did not complete", j)
                matches = False
                continue
            interest = setup.interest[0][1]
            psi = (len(interest.to_bytes()) + len(setup.views[0].to_bytes())) / 2
            big_psi = len(setup.genesis.to_bytes())
            formula = packet_overhead_setup(j, psi, big_psi)
            measured = sum(
                sizes[kind.value] for kind in (Kind.INTEREST, Kind.VIEW, Kind.GENESIS)
            )
            matches = matches and abs(formula - measured) <= tolerance * measured
            counted = counted and (
                counts[Kind.INTEREST.value] == j
                and counts[Kind.VIEW.value] == j
                and counts[Kind.GENESIS.value] == 1
            )
            logger.info("j=%d: %d setup bytes broadcast", j, measured)
            result.rows.append(
                (j, round(psi, 3), big_psi, formula, measured, sizes[Kind.APPROVAL.value])
            )
        result.checks["formula-matches"] = matches
        result.checks["one-message-each"] = counted
        return result


scenario_registry.register(PacketOverhead.name, PacketOverhead)
