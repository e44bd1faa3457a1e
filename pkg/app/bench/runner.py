"""Run a scenario file and write its CSV, trace and manifest."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from importlib import metadata
from pathlib import Path

from app.bench.config import ScenarioSpec
from app.bench.scenarios import ScenarioFailure, ScenarioResult, scenario_registry
from app.ledger.forest import LedgerForest
from app.ledger.persistence import write_forest
from app.simnet.metrics import trace_digest

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
TRACE_FILE = "trace.csv"
MANIFEST_FILE = "manifest.json"
FOREST_FILE = "forest.tcf"


def package_version() -> str:
    try:
        return metadata.version("tree-chain")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass(slots=True)
class RunReport:
    """Where the outputs went and which checks failed, per seed."""

    out_dir: Path
    files: list[Path] = field(default_factory=list)
    failed: dict[int, list[str]] = field(default_factory=dict)
    trace_digest: str = ""
    forest: LedgerForest | None = None


def _write_csv(path: Path, header: tuple[str, ...], rows: list[tuple[object, ...]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def run_spec(spec: ScenarioSpec, out_dir: Path, *, forest_path: Path | None = None) -> RunReport:
    """Run ``spec`` once per seed and write every output under ``out_dir``.

    The CSVs get a leading ``seed`` column. Outputs are written before the
    checks are evaluated, so a failing run can still be inspected.

    Raises
    ------
    UnknownEntryError
        If the scenario name is not registered.
    ScenarioFailure
        If any check of any seed failed.
    """
    scenario = scenario_registry.create(spec.name)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(out_dir)
    results: list[tuple[int, ScenarioResult]] = []
    for seed in spec.run_seeds():
        seeded = replace(spec, sim=replace(spec.sim, seed=seed))
        logger.info("Running %s with seed %d", spec.name, seed)
        result = scenario.run(seeded)
        results.append((seed, result))
        if result.failed:
            report.failed[seed] = result.failed
            logger.warning("Seed %d failed: %s", seed, ", ".join(result.failed))
        if result.forest is not None:
            report.forest = result.forest

    header = ("seed", *scenario.header)
    rows = [(seed, *row) for seed, result in results for row in result.rows]
    report.files.append(_write_csv(out_dir / METRICS_FILE, header, rows))
    extra_names = sorted({name for _, result in results for name in result.extra})
    for name in extra_names:
        tables = [(seed, result.extra[name]) for seed, result in results if name in result.extra]
        extra_header = ("seed", *tables[0][1].header)
        extra_rows = [(seed, *row) for seed, table in tables for row in table.rows]
        report.files.append(_write_csv(out_dir / f"{name}.csv", extra_header, extra_rows))

    trace = [line for _, result in results for line in result.trace]
    trace_path = out_dir / TRACE_FILE
    trace_path.write_text("".join(f"{line}\n" for line in trace), encoding="utf-8")
    report.files.append(trace_path)
    report.trace_digest = trace_digest(trace)

    if report.forest is not None and forest_path is not None:
        report.files.append(write_forest(report.forest, forest_path))

    manifest = {
        "scenario": spec.name,
        "version": package_version(),
        "seeds": spec.run_seeds(),
        "config": dict(spec.source),
        "checks": {str(seed): result.checks for seed, result in results},
        "trace_sha256": report.trace_digest,
        "files": sorted(path.name for path in report.files),
    }
    manifest_path = out_dir / MANIFEST_FILE
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    report.files.append(manifest_path)
    logger.info("Wrote %d file(s) to %s", len(report.files), out_dir)

    if report.failed:
        failed = sorted({f"{name}@{seed}" for seed, names in report.failed.items() for name in names})
        raise ScenarioFailure(spec.name, failed)
    return report
