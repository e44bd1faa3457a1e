"""Full simulated runs; each takes a few seconds with mac signatures."""

from __future__ import annotations

import pytest

from app.bench.config import parse_scenario
from app.bench.scenarios import ScenarioResult, scenario_registry
from app.simnet.metrics import trace_digest

pytestmark = pytest.mark.slow

NETWORK = """\
seed: {seed}
clients: {clients}
validators: {validators}
standby: {standby}
epochs: {epochs}
tx_rate: {tx_rate}
protocol:
  crypto.signature_scheme: mac
{protocol}"""


def _spec_text(
    name: str,
    *,
    seed: int = 3,
    clients: int = 5,
    validators: int = 5,
    standby: int = 1,
    epochs: int = 1,
    tx_rate: float = 1.0,
    protocol: str = "",
    params: str = "",
) -> str:
    text = f"scenario: {name}\n" + NETWORK.format(
        seed=seed,
        clients=clients,
        validators=validators,
        standby=standby,
        epochs=epochs,
        tx_rate=tx_rate,
        protocol=protocol,
    )
    if params:
        text += f"{name}:\n{params}"
    return text


def _run(name: str, **options: object) -> ScenarioResult:
    spec = parse_scenario(_spec_text(name, **options))  # type: ignore[arg-type]
    return scenario_registry.create(spec.name).run(spec)


def test_honest_network_over_two_epochs() -> None:
    result = _run("honest-run", epochs=2)
    assert result.passed, result.failed
    assert set(result.checks) >= {
        "submitted-committed-once",
        "one-genesis-per-epoch",
        "genesis-quorum",
        "replicas-agree",
    }
    assert [row[0] for row in result.rows] == [1, 2]
    assert all(row[3] > 0 for row in result.rows)
    assert result.forest is not None
    assert result.forest.check_integrity() == []


def test_same_seed_same_trace() -> None:
    first = _run("honest-run", seed=11)
    second = _run("honest-run", seed=11)
    other = _run("honest-run", seed=12)
    assert trace_digest(first.trace) == trace_digest(second.trace)
    assert trace_digest(first.trace) != trace_digest(other.trace)


@pytest.mark.parametrize("mode", ["kill", "kill-both", "stall"])
def test_failover(mode: str) -> None:
    result = _run("failover", standby=2, params=f"  modes: [{mode}]\n")
    assert result.passed, result.failed
    assert result.checks
    assert result.rows[0][0] == mode


def test_isolated_validator_is_replaced() -> None:
    result = _run("isolation", standby=2)
    assert result.passed, result.failed


def test_selective_drop_is_reported() -> None:
    result = _run(
        "dos",
        clients=30,
        validators=10,
        standby=2,
        tx_rate=1.5,
        protocol="  block.size: 5\n  monitor.dos_threshold: 20\n",
    )
    assert result.passed, result.failed
    assert {"full-drop-reported", "no-drop-no-report"} <= set(result.checks)


def test_sybil_keys_stay_out_of_the_table() -> None:
    result = _run("sybil", epochs=2, params="  n_fake: 5\n")
    assert result.passed, result.failed
    assert [row[1] for row in result.rows] == [5, 5]


def test_load_balancing_splits_only_when_enabled() -> None:
    result = _run(
        "load-balancing",
        clients=20,
        validators=2,
        standby=2,
        tx_rate=4.0,
        protocol="  block.size: 2\n",
        params="  samples: 2000\n",
    )
    assert result.passed, result.failed
    assert [row[0] for row in result.rows] == ["on", "off"]
    assert result.extra["halves"].rows


@pytest.mark.parametrize("colluding", ["false", "true"])
def test_simultaneous_double_spend(colluding: str) -> None:
    result = _run(
        "simultaneous-double-spend",
        standby=2,
        params=f"  colluding: [{colluding}]\n",
    )
    assert result.passed, result.failed


def test_block_cost_falls_with_rate() -> None:
    result = _run("block-generation", params="  rates: [2, 20]\n")
    assert result.passed, result.failed
    assert [row[0] for row in result.rows] == [2, 20]


def test_desk_scale_honest_network() -> None:
    result = _run("honest-run", seed=1, clients=100, validators=10, standby=0, epochs=3)
    assert result.passed, result.failed
    assert [row[1] for row in result.rows] == [10, 10, 10]
