from __future__ import annotations

import logging
from pathlib import Path
from typing import TYPE_CHECKING, Annotated

import typer

if TYPE_CHECKING:
    from app.ledger.forest import LedgerForest

app = typer.Typer(help="Simulation et bancs d'essai du protocole Tree-Chain.")

EXIT_FAILED = 1
EXIT_BAD_INPUT = 2

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@app.callback()  # type: ignore[misc]
def main(
    log_level: Annotated[
        str,
        typer.Option("--log-level", help=f"One of {', '.join(_LOG_LEVELS)}"),
    ] = "WARNING",
) -> None:
    """Configure logging for every command."""
    level = log_level.upper()
    if level not in _LOG_LEVELS:
        raise typer.BadParameter(f"log level must be one of {', '.join(_LOG_LEVELS)}")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _run_config(config: Path, out: Path, forest_path: Path | None) -> None:
    """Run ``config`` and exit with the protocol's exit codes on error."""
    from app.bench import ConfigError, load_scenario, run_spec
    from app.bench.scenarios import ScenarioFailure
    from app.core.registry import UnknownEntryError

    try:
        spec = load_scenario(config)
    except ConfigError as exc:
        typer.echo(f"{config}: {exc}", err=True)
        raise typer.Exit(code=EXIT_BAD_INPUT) from None
    try:
        report = run_spec(spec, out, forest_path=forest_path)
    except UnknownEntryError as exc:
        typer.echo(f"{config}: {exc}", err=True)
        raise typer.Exit(code=EXIT_BAD_INPUT) from None
    except ConfigError as exc:
        typer.echo(f"{config}: {exc}", err=True)
        raise typer.Exit(code=EXIT_BAD_INPUT) from None
    except ScenarioFailure as exc:
        typer.echo(str(exc), err=True)
        typer.echo(f"Results written to {out}", err=True)
        raise typer.Exit(code=EXIT_FAILED) from None
    if forest_path is not None and report.forest is None:
        typer.echo(f"Scenario {spec.name} produces no ledger forest", err=True)
        raise typer.Exit(code=EXIT_BAD_INPUT)
    typer.echo(f"Scenario {spec.name} passed; results in {out} (trace {report.trace_digest[:16]})")


@app.command()  # type: ignore[misc]
def run(
    config: Annotated[
        Path,
        typer.Argument(dir_okay=False, help="Scenario file (see config.yml)"),
    ] = Path("config.yml"),
    out: Annotated[
        Path,
        typer.Option("--out", file_okay=False, help="Directory for CSV, trace and manifest"),
    ] = Path("results"),
    forest: Annotated[
        Path | None,
        typer.Option("--forest", dir_okay=False, help="Also export the scenario's ledger forest"),
    ] = None,
) -> None:
    """Run the scenario described by ``config``."""
    _run_config(config, out, forest)


@app.command()  # type: ignore[misc]
def export(
    path: Annotated[Path, typer.Argument(dir_okay=False, help="Forest file to write")],
    config: Annotated[
        Path,
        typer.Option("--config", dir_okay=False, help="Scenario producing the forest"),
    ] = Path("config.yml"),
    out: Annotated[
        Path,
        typer.Option("--out", file_okay=False, help="Directory for CSV, trace and manifest"),
    ] = Path("results"),
) -> None:
    """Run ``config`` and export the resulting ledger forest to ``path``."""
    _run_config(config, out, path)
    typer.echo(f"Exported forest to {path}")


def _read(path: Path) -> LedgerForest:
    from app.ledger.persistence import ForestFormatError, read_forest

    try:
        return read_forest(path)
    except ForestFormatError as exc:
        typer.echo(f"{path}: {exc}", err=True)
        raise typer.Exit(code=EXIT_BAD_INPUT) from None
    except OSError as exc:
        typer.echo(f"{path}: {exc.strerror}", err=True)
        raise typer.Exit(code=EXIT_BAD_INPUT) from None


@app.command("import")  # type: ignore[misc]
def import_forest(
    path: Annotated[Path, typer.Argument(dir_okay=False, help="Forest file written by export")],
    out: Annotated[
        Path | None,
        typer.Option("--out", file_okay=False, help="Write a re-export of the forest here"),
    ] = None,
) -> None:
    """Load a forest file and print what it holds."""
    from app.ledger.persistence import write_forest

    forest = _read(path)
    typer.echo(
        f"{len(forest.genesis_chain)} epoch(s), {len(forest.ledgers)} ledger(s), "
        f"{forest.block_count()} block(s), {forest.transaction_count()} transaction(s)"
    )
    if out is not None:
        target = write_forest(forest, out / path.name)
        typer.echo(f"Re-exported to {target}")


@app.command()  # type: ignore[misc]
def verify(
    forest_file: Annotated[Path, typer.Argument(dir_okay=False, help="Forest file to check")],
) -> None:
    """Recompute every hash chain and merkle root of a forest file."""
    forest = _read(forest_file)
    problems = forest.check_integrity()
    for problem in problems:
        typer.echo(problem, err=True)
    if problems:
        raise typer.Exit(code=EXIT_FAILED)
    typer.echo(f"{forest_file}: {forest.block_count()} block(s) verified")


if __name__ == "__main__":  # pragma: no cover
    app()
