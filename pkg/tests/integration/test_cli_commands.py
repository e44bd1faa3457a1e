from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

pytest.importorskip("typer")
from typer.testing import CliRunner

from app.cli import EXIT_BAD_INPUT, EXIT_FAILED, app

RETRIEVAL = """\
scenario: retrieval
seed: 4
retrieval:
  js: [3, 6]
  transactions: 600
  samples: 200
  tolerance: 0.3
"""


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def _write(tmp_path: Path, text: str, name: str = "scenario.yml") -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_run_writes_results(runner: CliRunner, tmp_path: Path) -> None:
    config = _write(tmp_path, RETRIEVAL)
    out = tmp_path / "results"
    result = runner.invoke(app, ["run", str(config), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "Scenario retrieval passed" in result.output
    with (out / "metrics.csv").open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0][:2] == ["seed", "j"]
    assert [row[1] for row in rows[1:]] == ["3", "6"]
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["scenario"] == "retrieval"
    assert manifest["seeds"] == [4]
    assert manifest["checks"]["4"]["scan-matches-expectation"] is True
    assert len(manifest["trace_sha256"]) == 64


@pytest.mark.parametrize(
    "text",
    [
        "scenario: retrieval\ncolour: red\n",
        "seed: 1\n",
        "scenario: no-such-scenario\n",
    ],
)
def test_bad_config_exits_with_two(runner: CliRunner, tmp_path: Path, text: str) -> None:
    config = _write(tmp_path, text)
    result = runner.invoke(app, ["run", str(config), "--out", str(tmp_path / "out")])
    assert result.exit_code == EXIT_BAD_INPUT


def test_failed_check_exits_with_one(runner: CliRunner, tmp_path: Path) -> None:
    config = _write(
        tmp_path,
        "scenario: double-spending\n"
        "protocol:\n"
        "  crypto.signature_scheme: mac\n"
        "double-spending:\n"
        "  js: [5]\n"
        "  trials: 20\n"
        "  tolerance: 0.0\n"
        "  spend_delay: false\n",
    )
    out = tmp_path / "out"
    result = runner.invoke(app, ["run", str(config), "--out", str(out)])
    assert result.exit_code == EXIT_FAILED
    assert (out / "metrics.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["checks"]["7"]["attempts-match-oracle"] is False


def test_export_import_and_verify(runner: CliRunner, tmp_path: Path) -> None:
    config = _write(tmp_path, RETRIEVAL)
    forest = tmp_path / "forest.tcf"
    exported = runner.invoke(
        app, ["export", str(forest), "--config", str(config), "--out", str(tmp_path / "out")]
    )
    assert exported.exit_code == 0, exported.output
    assert forest.read_bytes().startswith(b"tree-chain-forest v1\n")

    imported = runner.invoke(app, ["import", str(forest), "--out", str(tmp_path / "copy")])
    assert imported.exit_code == 0, imported.output
    assert "1 epoch(s), 6 ledger(s)" in imported.output
    assert (tmp_path / "copy" / "forest.tcf").read_bytes() == forest.read_bytes()

    verified = runner.invoke(app, ["verify", str(forest)])
    assert verified.exit_code == 0, verified.output
    assert "verified" in verified.output


def test_export_needs_a_forest(runner: CliRunner, tmp_path: Path) -> None:
    config = _write(
        tmp_path,
        "scenario: consensus-formation\n"
        "protocol:\n"
        "  crypto.signature_scheme: mac\n"
        "consensus-formation:\n"
        "  js: [3]\n"
        "  repeats: 1\n",
    )
    result = runner.invoke(
        app,
        ["export", str(tmp_path / "f.tcf"), "--config", str(config), "--out", str(tmp_path / "o")],
    )
    assert result.exit_code == EXIT_BAD_INPUT


def test_stored_forest_feeds_retrieval(runner: CliRunner, tmp_path: Path) -> None:
    forest = tmp_path / "forest.tcf"
    config = _write(tmp_path, RETRIEVAL)
    runner.invoke(
        app, ["export", str(forest), "--config", str(config), "--out", str(tmp_path / "a")]
    )
    stored = _write(
        tmp_path,
        f"scenario: retrieval\nretrieval:\n  forest_file: {forest}\n  tolerance: 0.3\n",
        "stored.yml",
    )
    result = runner.invoke(app, ["run", str(stored), "--out", str(tmp_path / "b")])
    assert result.exit_code == 0, result.output


@pytest.mark.parametrize("content", [b"hello\n", b""])
def test_unreadable_forest(runner: CliRunner, tmp_path: Path, content: bytes) -> None:
    path = tmp_path / "broken.tcf"
    path.write_bytes(content)
    assert runner.invoke(app, ["verify", str(path)]).exit_code == EXIT_BAD_INPUT
    assert runner.invoke(app, ["import", str(path)]).exit_code == EXIT_BAD_INPUT


def test_missing_forest(runner: CliRunner, tmp_path: Path) -> None:
    result = runner.invoke(app, ["verify", str(tmp_path / "absent.tcf")])
    assert result.exit_code == EXIT_BAD_INPUT


def test_default_config_parses() -> None:
    from app.bench import load_scenario

    spec = load_scenario(Path(__file__).resolve().parents[2] / "config.yml")
    assert spec.name == "honest-run"
    assert spec.sim.validators == 8
    assert spec.sim.protocol.crypto.signature_scheme == "mac"
    assert spec.param("check_replicas", False) is True
