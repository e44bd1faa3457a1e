"""Protocol settings loaded from a JSON file.

Environment variables override the file, for example
``TREE_CHAIN_BLOCK__SIZE=5`` or ``TREE_CHAIN_CRYPTO__SIGNATURE_SCHEME=mac``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal, cast

from pydantic import BaseModel, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from app.crypto.kwm import KwmDictionary

BlockMode = Literal["size", "time", "hybrid"]


class CryptoConfig(BaseModel):  # type: ignore[misc]
    """Signature scheme and key-weight dictionary."""

    signature_scheme: Literal["ed25519", "mac"] = "ed25519"
    # ``None`` keeps the default digit/upper/lower weights.
    kwm_dictionary: dict[str, int] | None = None

    @field_validator("kwm_dictionary")
    @classmethod
    def _check_dictionary(cls, value: dict[str, int] | None) -> dict[str, int] | None:
        if value is not None:
            KwmDictionary(value)
        return value

    def dictionary(self) -> KwmDictionary:
        if self.kwm_dictionary is None:
            return KwmDictionary()
        return KwmDictionary(self.kwm_dictionary)


class EpochConfig(BaseModel):  # type: ignore[misc]
    """Consensus period and setup window, in logical milliseconds."""

    delta_ms: int = Field(default=10_000, ge=4)
    eth_ms: int = Field(default=2_000, ge=4)

    @model_validator(mode="after")
    def _check_window(self) -> EpochConfig:
        if self.eth_ms >= self.delta_ms:
            msg = f"Setup window ({self.eth_ms} ms) must be shorter than the epoch ({self.delta_ms} ms)"
            raise ValueError(msg)
        if self.eth_ms % 4:
            msg = f"Setup window ({self.eth_ms} ms) must split into four equal sub-phases"
            raise ValueError(msg)
        return self


class BlockConfig(BaseModel):  # type: ignore[misc]
    """Block formation rules."""

    size: int = Field(default=10, ge=1)
    interval_ms: int = Field(default=1_000, ge=4)
    mode: BlockMode = "hybrid"


class ValidityConfig(BaseModel):  # type: ignore[misc]
    """Transaction validity window; ``None`` means twice the block interval."""

    expiry_ms: int | None = Field(default=None, ge=1)


class MonitorConfig(BaseModel):  # type: ignore[misc]
    """Thresholds for peer monitoring, failover and load balancing."""

    dos_threshold: int = Field(default=50, ge=1)
    silence_intervals: int = Field(default=3, ge=1)
    overload_factor: int = Field(default=4, ge=1)
    overload_intervals: int = Field(default=2, ge=1)
    lb_guard_intervals: int = Field(default=4, ge=0)
    load_balancing: bool = True


class NetworkConfig(BaseModel):  # type: ignore[misc]
    """Latency model and random message loss."""

    latency_min_ms: int = Field(default=5, ge=0)
    latency_max_ms: int = Field(default=50, ge=0)
    distribution: Literal["uniform", "fixed"] = "uniform"
    drop_rate: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_bounds(self) -> NetworkConfig:
        if self.latency_min_ms > self.latency_max_ms:
            msg = "latency_min_ms must not exceed latency_max_ms"
            raise ValueError(msg)
        return self


class Settings(BaseSettings):  # type: ignore[misc]
    """Protocol configuration container."""

    model_config = SettingsConfigDict(env_prefix="TREE_CHAIN_", env_nested_delimiter="__")

    crypto: CryptoConfig = CryptoConfig()
    epoch: EpochConfig = EpochConfig()
    block: BlockConfig = BlockConfig()
    validity: ValidityConfig = ValidityConfig()
    monitor: MonitorConfig = MonitorConfig()
    network: NetworkConfig = NetworkConfig()

    @property
    def expiry_ms(self) -> int:
        if self.validity.expiry_ms is not None:
            return self.validity.expiry_ms
        return 2 * self.block.interval_ms

    @property
    def tick_ms(self) -> int:
        return max(1, self.block.interval_ms // 4)

    @property
    def settle_ms(self) -> int:
        """Delay after which any message sent now has been delivered."""
        return self.network.latency_max_ms + 1

    @property
    def silence_ms(self) -> int:
        return self.monitor.silence_intervals * self.block.interval_ms

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        # The environment wins over values read from the settings file.
        return env_settings, init_settings

    def with_overrides(self, overrides: dict[str, Any]) -> Settings:
        """Return a copy with dotted-path overrides such as ``{"block.size": 5}``."""
        data = self.model_dump()
        for dotted, value in overrides.items():
            section, _, key = dotted.partition(".")
            if not key or section not in data or not isinstance(data[section], dict):
                msg = f"Unknown setting '{dotted}'"
                raise KeyError(msg)
            if key not in data[section]:
                msg = f"Unknown setting '{dotted}'"
                raise KeyError(msg)
            data[section][key] = value
        return cast(Settings, Settings.model_validate(data))


def load_settings(path: Path | None = None) -> Settings:
    """Load settings from ``path`` or return defaults."""

    path = path or Path(__file__).resolve().parents[1] / "config.json"
    if path.exists():
        data = json.loads(path.read_text())
        return Settings(**data)
    return Settings()


settings = load_settings()
