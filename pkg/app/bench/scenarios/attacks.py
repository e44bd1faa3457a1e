"""Adversarial validators and clients: dropping, sybil keys and double spends."""

from __future__ import annotations

import logging
import re
from dataclasses import replace
from functools import partial

from app.adversary import (
    ColludingValidator,
    DoubleSpendClient,
    SelectiveDropValidator,
    SybilValidator,
    brute_force_double_spend,
)
from app.bench.config import ScenarioSpec
from app.bench.simulation import NodeFactory, Simulation, commit_counts
from app.core.types import Transaction

from . import scenario_registry
from .base import (
    Scenario,
    ScenarioResult,
    double_spend_safe,
    event_details,
    point_config,
    reports_against,
)

logger = logging.getLogger(__name__)

_ACCUSED = re.compile(r"accused=(\S+)")


class SelectiveDrop(Scenario):
    """A validator starts ignoring a share of its range mid-epoch.

    Every validator runs the dropping variant with nothing dropped; at
    ``at_ms`` the owner of the second table entry is armed. A full drop must
    be reported as soon as the gap exceeds the threshold and the range must
    be reassigned; dropping nothing must never be reported.
    """

    name = "dos"
    header = ("drop_fraction", "victim", "dropped", "first_report_ms", "reassign_ms", "reports")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        threshold = spec.sim.protocol.monitor.dos_threshold
        at = int(spec.param("at_ms", spec.sim.schedule.epoch_start(1) + 1_000))
        for index, fraction in enumerate(spec.param("drop_fractions", [1.0, 0.0])):
            fraction = float(fraction)
            config = point_config(spec, index)
            dropping: NodeFactory = partial(SelectiveDropValidator, drop_fraction=0.0)
            types = {f"v{number:02d}": dropping for number in range(config.validators)}
            sim = Simulation(config, validator_types=types)
            armed: list[SelectiveDropValidator] = []

            def arm(
                sim: Simulation = sim,
                fraction: float = fraction,
                armed: list[SelectiveDropValidator] = armed,
            ) -> None:
                _, node = sim.entry_node(1, 1)
                assert isinstance(node, SelectiveDropValidator)
                node.drop_fraction = fraction
                sim.adversaries.add(node.node_id)
                armed.append(node)
                logger.info("%s now drops %.0f%% of its range", node.node_id, 100 * fraction)

            sim.at(at, arm)
            run = sim.run()
            result.add_run(run)
            if not armed:
                result.checks[f"drop-{fraction}-armed"] = False
                continue
            victim = armed[0]
            reports = event_details(run, "report")
            against = reports_against(run, "dos", victim.node_id)
            others = [
                detail
                for _, _, detail in reports
                if (match := _ACCUSED.search(detail)) is not None
                and match.group(1) != victim.node_id
            ]
            reassigned = event_details(run, "reassign")
            if fraction >= 1.0:
                result.checks["full-drop-reported"] = any(
                    detail.endswith(f"gap={threshold + 1}") for _, _, detail in against
                )
                result.checks["full-drop-reassigned"] = bool(reassigned)
                result.checks["full-drop-no-other-accused"] = not others
            elif fraction == 0.0:
                result.checks["no-drop-no-report"] = not reports
            result.rows.append(
                (
                    fraction,
                    victim.node_id,
                    victim.dropped,
                    against[0][0] if against else "",
                    reassigned[0][0] if reassigned else "",
                    len(reports),
                )
            )
        return result


class Sybil(Scenario):
    """One certified validator advertises many keys nobody certified."""

    name = "sybil"
    header = ("epoch", "uncertified", "attacker_entries", "fake_entries")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        n_fake = int(spec.param("n_fake", 99))
        attacker = str(spec.param("attacker", "v01"))
        sim = Simulation(
            spec.sim, validator_types={attacker: partial(SybilValidator, n_fake=n_fake)}
        )
        sim.adversaries.add(attacker)
        result.add_run(sim.run())
        sybil = sim.node(attacker)
        assert isinstance(sybil, SybilValidator)
        counted = True
        single = True
        no_fakes = True
        for epoch in range(1, spec.sim.epochs + 1):
            table = sim.table(epoch)
            setup = sim.observer().setups.get(epoch)
            uncertified = setup.stats.uncertified if setup is not None else 0
            pks = table.pks() if table is not None else []
            owned = sum(1 for pk in pks if sim.registry.owner_of(pk) == attacker)
            fakes = len(set(pks) & set(sybil.fake_keys.get(epoch, [])))
            counted = counted and uncertified == n_fake
            single = single and owned == 1
            no_fakes = no_fakes and fakes == 0
            result.rows.append((epoch, uncertified, owned, fakes))
        result.checks["fake-keys-counted"] = counted
        result.checks["one-entry-per-identity"] = single
        result.checks["no-fake-key-in-table"] = no_fakes
        return result


class SimultaneousDoubleSpend(Scenario):
    """A client spends one output twice in the same millisecond.

    With honest validators exactly one spend commits. With ``colluding`` the
    funding transaction is brute-forced into the range of a colluding
    validator, which approves both spends; it must then be reported, banned
    and left out of the next table.
    """

    name = "simultaneous-double-spend"
    header = ("colluding", "first_committed", "second_committed", "refused", "reports", "banned")

    def run(self, spec: ScenarioSpec) -> ScenarioResult:
        result = self.result()
        protocol = spec.sim.protocol
        fund_at = int(spec.param("fund_at_ms", spec.sim.schedule.epoch_start(1) + 1_000))
        spend_at = fund_at + int(spec.param("spend_after_ms", 3_000))
        colluder = str(spec.param("colluder", "v01"))
        modes = [bool(item) for item in spec.param("colluding", [False, True])]
        for index, colluding in enumerate(modes):
            config = point_config(spec, index)
            if colluding and config.epochs < 2:
                config = replace(config, epochs=2)
            types = {colluder: ColludingValidator} if colluding else {}
            sim = Simulation(config, validator_types=types)
            if colluding:
                sim.adversaries.add(colluder)
            client = sim.add_client("c-adv", cls=DoubleSpendClient)
            assert isinstance(client, DoubleSpendClient)
            funded: list[Transaction] = []
            spends: list[Transaction] = []

            def fund(
                sim: Simulation = sim,
                client: DoubleSpendClient = client,
                colluding: bool = colluding,
                funded: list[Transaction] = funded,
            ) -> None:
                tx = client.mint(sim.network.now)
                if colluding:
                    table = sim.table(1)
                    entry = table.entry_for_pk(sim.node(colluder).keys[1].public) if table else None
                    if entry is not None:
                        delta = (
                            protocol.expiry_ms - protocol.block.interval_ms - 4 * protocol.settle_ms
                        )
                        steered = brute_force_double_spend(
                            entry.code_range,
                            tx,
                            delta,
                            delta + 1,
                            scheme=sim.scheme,
                            keypair=client.keypair,
                        )
                        if steered.transaction is not None:
                            tx = steered.transaction
                client.fund(tx)
                funded.append(tx)

            def spend(
                sim: Simulation = sim,
                client: DoubleSpendClient = client,
                funded: list[Transaction] = funded,
                spends: list[Transaction] = spends,
            ) -> None:
                x, y = (node.keys[1].public for node in sim.validators[-2:])
                spends.extend(client.inject_simultaneous_double_spend(x, y, output=funded[0].t_id))

            sim.at(fund_at, fund)
            sim.at(spend_at, spend)
            run = sim.run()
            result.add_run(run)
            counts = commit_counts(sim.observer().forest)
            committed = [counts[tx.t_id] for tx in spends] if spends else [0, 0]
            refused = len(event_details(run, "spend-refused"))
            reports = reports_against(run, "double-spend", colluder)
            banned = sim.registry.is_banned(colluder)
            if colluding:
                table = sim.table(2)
                key = sim.node(colluder).keys.get(2)
                setup = sim.observer().setups.get(2)
                result.checks["collusion-both-committed"] = committed == [1, 1]
                result.checks["collusion-reported"] = bool(reports)
                result.checks["colluder-banned"] = banned
                result.checks["colluder-left-out"] = (
                    table is not None and (key is None or key.public not in table.pks())
                )
                result.checks["colluder-key-uncertified"] = (
                    setup is not None and setup.stats.uncertified >= 1
                )
                result.checks["collusion-safe"] = double_spend_safe(sim, run)
            else:
                result.checks["honest-one-committed"] = sum(committed) == 1
                result.checks["honest-refused"] = refused >= 1
                result.checks["honest-safe"] = double_spend_safe(sim, run)
            result.rows.append(
                (colluding, committed[0], committed[1], refused, len(reports), banned)
            )
        return result


scenario_registry.register(SelectiveDrop.name, SelectiveDrop)
scenario_registry.register(Sybil.name, Sybil)
scenario_registry.register(SimultaneousDoubleSpend.name, SimultaneousDoubleSpend)
