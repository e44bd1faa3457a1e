from __future__ import annotations

import pytest

from app.bench.config import ConfigError, parse_scenario
from app.bench.scenarios import ScenarioResult, scenario_registry


def _run(text: str) -> ScenarioResult:
    spec = parse_scenario(text)
    return scenario_registry.create(spec.name).run(spec)


@pytest.mark.parametrize(
    ("target", "expected"), [("middle", (5.06, 10.12)), ("first", (4.67, 8.67))]
)
def test_brute_force_attempts_follow_the_oracle(
    target: str, expected: tuple[float, float]
) -> None:
    result = _run(
        "scenario: double-spending\n"
        "seed: 2\n"
        "protocol:\n"
        "  crypto.signature_scheme: mac\n"
        "double-spending:\n"
        "  js: [5, 10]\n"
        "  trials: 500\n"
        "  tolerance: 0.2\n"
        "  spend_delay: false\n"
        f"  target: {target}\n"
    )
    assert result.passed, result.failed
    assert [row[0] for row in result.rows] == [5, 10]
    assert result.rows[0][3] == pytest.approx(expected[0], abs=0.01)
    assert result.rows[1][3] == pytest.approx(expected[1], abs=0.01)
    assert all(row[4] == 1.0 for row in result.rows)
    assert "spend_delay" not in result.extra


def test_brute_force_rejects_an_unknown_target() -> None:
    with pytest.raises(ConfigError, match="target"):
        _run("scenario: double-spending\ndouble-spending:\n  target: last\n")


def test_retrieval_scans_fewer_blocks_with_more_ledgers() -> None:
    result = _run(
        "scenario: retrieval\n"
        "seed: 5\n"
        "retrieval:\n"
        "  js: [5, 20]\n"
        "  transactions: 2000\n"
        "  samples: 500\n"
    )
    assert result.passed, result.failed
    assert {"scan-falls-with-j", "speedup-grows-with-j", "speedup-tracks-j"} <= set(result.checks)
    first, second = result.rows
    assert first[2] > second[2]
    assert first[1] <= second[1]
    assert first[6] < second[6]
    assert second[6] / first[6] == pytest.approx(4, rel=0.25)
    assert result.forest is not None
    assert len(result.forest.ledgers) == 20


def test_formation_produces_valid_genesis_blocks() -> None:
    result = _run(
        "scenario: consensus-formation\n"
        "protocol:\n"
        "  crypto.signature_scheme: mac\n"
        "consensus-formation:\n"
        "  js: [4, 8]\n"
        "  repeats: 1\n"
    )
    assert result.checks == {"genesis-valid": True}
    assert [(row[0], row[1]) for row in result.rows] == [(4, 1), (8, 1)]


def test_setup_overhead_matches_the_formula() -> None:
    result = _run(
        "scenario: packet-overhead\n"
        "protocol:\n"
        "  crypto.signature_scheme: mac\n"
        "packet-overhead:\n"
        "  js: [3, 5]\n"
    )
    assert result.passed, result.failed
    assert result.checks == {"formula-matches": True, "one-message-each": True}
    for j, psi, big_psi, formula, measured, approval_bytes in result.rows:
        assert formula == pytest.approx(measured, rel=0.01)
        assert formula == round(2 * psi * j + big_psi)
        assert approval_bytes > 0
    assert result.rows[0][2] < result.rows[1][2]
