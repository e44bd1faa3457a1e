"""Epochs that end setup without an adoptable genesis block."""

from __future__ import annotations

import pytest

from app.bench.scenarios.base import committed_once, events_per_epoch
from app.bench.scenarios.honest import replicas_agree
from app.bench.simulation import Simulation
from app.core.config import settings
from app.ledger.persistence import export_forest, import_forest
from app.node.messages import Kind
from app.simnet.config import SimConfig
from app.simnet.network import Envelope

pytestmark = pytest.mark.slow


def _simulation(*, validators: int, epochs: int) -> Simulation:
    protocol = settings.with_overrides({"crypto.signature_scheme": "mac"})
    config = SimConfig(
        seed=5,
        clients=5,
        validators=validators,
        standby=0,
        epochs=epochs,
        tx_rate=1.0,
        protocol=protocol,
    )
    return Simulation(config)


def _assert_carried_second_epoch(sim: Simulation) -> None:
    schedule = sim.schedule
    assert {node.node_id: node.epoch for node in sim.nodes} == {
        node.node_id: 2 for node in sim.nodes
    }
    carried = sim.table(2)
    previous = sim.table(1, latest=True)
    assert carried is not None and previous is not None
    assert carried.carried
    assert carried.epoch == 2
    assert carried.assignments() == previous.assignments()
    forest = sim.observer().forest
    assert forest.genesis_of(2) is None
    blocks = [block for _, block in forest.iter_blocks(2)]
    assert blocks
    assert all(
        schedule.epoch_start(2) <= block.timestamp < schedule.suppression_start(2)
        for block in blocks
    )
    assert forest.check_integrity() == []
    assert replicas_agree(sim)


def test_epoch_without_applicants_keeps_the_previous_table() -> None:
    sim = _simulation(validators=4, epochs=2)

    def withdraw() -> None:
        for node in sim.nodes:
            node.candidate = False

    sim.at(sim.schedule.setup_start(2) - 1, withdraw)
    run = sim.run()

    _assert_carried_second_epoch(sim)
    assert events_per_epoch(run, "epoch-carried") == {2: 4}
    assert events_per_epoch(run, "genesis-built") == {1: 1}
    assert committed_once(sim.observer().forest, sim.submitted())


def test_carried_ledgers_survive_export() -> None:
    sim = _simulation(validators=4, epochs=2)

    def withdraw() -> None:
        for node in sim.nodes:
            node.candidate = False

    sim.at(sim.schedule.setup_start(2) - 1, withdraw)
    sim.run()
    forest = sim.observer().forest
    assert forest.carries

    data = export_forest(forest)
    restored = import_forest(data)
    assert restored.check_integrity() == []
    assert restored.carries == forest.carries
    assert export_forest(restored) == data


def test_unconfirmed_first_epoch_is_aborted() -> None:
    sim = _simulation(validators=5, epochs=1)
    sim.network.add_drop_rule(lambda envelope: envelope.kind == Kind.VIEW.value)
    run = sim.run()

    assert events_per_epoch(run, "genesis-built") == {}
    assert events_per_epoch(run, "epoch-abort") == {1: 10}
    for node in sim.nodes:
        assert node.epoch == 0
        assert node.forest.genesis_chain == []
        assert node.forest.block_count() == 0


def test_unconfirmed_later_epoch_carries_the_table() -> None:
    sim = _simulation(validators=5, epochs=2)
    second_setup = sim.schedule.setup_start(2)

    def drop_late_views(envelope: Envelope) -> bool:
        return envelope.kind == Kind.VIEW.value and envelope.sent_at >= second_setup

    sim.network.add_drop_rule(drop_late_views)
    run = sim.run()

    _assert_carried_second_epoch(sim)
    assert events_per_epoch(run, "genesis-built") == {1: 1}
    assert events_per_epoch(run, "epoch-abort") == {2: 10}
    assert events_per_epoch(run, "epoch-carried") == {2: 5}
