"""Scenario files: a small YAML subset with sections.

Example::

    scenario: honest-run
    seed: 7
    clients: 100
    protocol:
      block.size: 10
      crypto.signature_scheme: mac
    honest-run:
      check_replicas: true

Top-level ``key: value`` lines configure the simulated network, the
``protocol:`` section overrides protocol settings by dotted path and the
section named after the scenario holds its own parameters. Values are
integers, floats, booleans, ``null``, bracketed lists or bare strings.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.core.config import Settings, settings
from app.simnet.config import SimConfig

Value = int | float | bool | str | None | list[Any]

_NETWORK_KEYS = {item.name for item in fields(SimConfig)} - {"protocol"}
_RESERVED = {"scenario", "seeds", "protocol"}


class ConfigError(ValueError):
    """Raised for a malformed scenario file; ``line`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, line: int = 0) -> None:
        self.line = line
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True, slots=True)
class ScenarioSpec:
    """A parsed scenario file."""

    name: str
    sim: SimConfig
    params: Mapping[str, Value] = field(default_factory=dict)
    seeds: tuple[int, ...] = ()
    source: Mapping[str, Any] = field(default_factory=dict)

    def param(self, key: str, default: Any) -> Any:
        return self.params.get(key, default)

    def int_list(self, key: str, default: Sequence[int]) -> list[int]:
        value = self.params.get(key, list(default))
        items = value if isinstance(value, list) else [value]
        try:
            return [int(item) for item in items]
        except (TypeError, ValueError):
            msg = f"Parameter '{key}' of {self.name} must be a list of integers"
            raise ConfigError(msg) from None

    def run_seeds(self) -> list[int]:
        return list(self.seeds) or [self.sim.seed]


def parse_value(text: str) -> Value:
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1]
        return [parse_value(item) for item in inner.split(",") if item.strip()]
    lowered = text.lower()
    if lowered in {"true", "yes", "on"}:
        return True
    if lowered in {"false", "no", "off"}:
        return False
    if lowered in {"null", "none", "~", ""}:
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text.strip("\"'")


def _sections(text: str) -> tuple[dict[str, tuple[Value, int]], dict[str, dict[str, tuple[Value, int]]]]:
    top: dict[str, tuple[Value, int]] = {}
    sections: dict[str, dict[str, tuple[Value, int]]] = {}
    current: dict[str, tuple[Value, int]] | None = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if ":" not in line:
            raise ConfigError(f"Expected 'key: value', got {raw.strip()!r}", number)
        key, value = line.split(":", 1)
        indented = line[0] in " \t"
        key = key.strip()
        if not key:
            raise ConfigError("Empty key", number)
        if indented:
            if current is None:
                raise ConfigError(f"Indented key '{key}' outside a section", number)
            current[key] = (parse_value(value), number)
            continue
        if value.strip():
            top[key] = (parse_value(value), number)
            current = None
        else:
            if key in sections:
                raise ConfigError(f"Section '{key}' appears twice", number)
            current = sections[key] = {}
    return top, sections


def parse_scenario(text: str, *, base: Settings | None = None) -> ScenarioSpec:
    """Parse a scenario file's text into a :class:`ScenarioSpec`.

    Raises
    ------
    ConfigError
        On syntax errors, unknown keys or values the models reject.
    """
    top, sections = _sections(text)
    if "scenario" not in top or not isinstance(top["scenario"][0], str):
        raise ConfigError("Missing 'scenario: <name>' line")
    name = str(top["scenario"][0])

    protocol = base or settings
    overrides = sections.get("protocol", {})
    for dotted, (value, number) in overrides.items():
        try:
            protocol = protocol.with_overrides({dotted: value})
        except KeyError:
            raise ConfigError(f"Unknown protocol setting '{dotted}'", number) from None
        except ValidationError as exc:
            first = exc.errors()[0]["msg"]
            raise ConfigError(f"Invalid value for '{dotted}': {first}", number) from None

    network: dict[str, Any] = {}
    for key, (value, number) in top.items():
        if key in _RESERVED:
            continue
        if key not in _NETWORK_KEYS:
            raise ConfigError(f"Unknown setting '{key}'", number)
        network[key] = value
    try:
        sim = SimConfig(protocol=protocol, **network)
    except (TypeError, ValueError) as exc:
        line = min((number for _, number in top.values()), default=0)
        raise ConfigError(str(exc), line) from None

    seeds: tuple[int, ...] = ()
    if "seeds" in top:
        raw, number = top["seeds"]
        items = raw if isinstance(raw, list) else [raw]
        if not all(isinstance(item, int) and not isinstance(item, bool) for item in items):
            raise ConfigError("'seeds' must be a list of integers", number)
        seeds = tuple(int(item) for item in items)  # type: ignore[arg-type]

    for section in sections:
        if section not in {"protocol", name}:
            line = next(iter(sections[section].values()), (None, 0))[1]
            raise ConfigError(f"Section '{section}' does not match scenario '{name}'", line)
    params = {key: value for key, (value, _) in sections.get(name, {}).items()}
    source = {
        "scenario": name,
        "network": {key: getattr(sim, key) for key in sorted(_NETWORK_KEYS)},
        "seeds": list(seeds),
        "protocol": protocol.model_dump(),
        "params": params,
    }
    return ScenarioSpec(name=name, sim=sim, params=params, seeds=seeds, source=source)


def load_scenario(path: Path, *, base: Settings | None = None) -> ScenarioSpec:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, base=base)
