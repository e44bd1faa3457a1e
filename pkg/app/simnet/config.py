"""Parameters of one simulated network."""

from __future__ import annotations

from dataclasses import dataclass, field

from app.consensus.table import EpochSchedule
from app.core.config import Settings, settings


@dataclass(frozen=True, slots=True)
class SimConfig:
    """Everything a run depends on; ``seed`` fixes all randomness.

    ``clients`` submit transactions at ``tx_rate`` per second each,
    ``validators`` apply for a range every epoch and ``standby`` nodes only
    answer validator requests. Transactions are submitted between the start
    of the first epoch and ``submit_margin_ms`` before the last suppression.
    """

    seed: int = 7
    clients: int = 100
    validators: int = 10
    standby: int = 2
    epochs: int = 3
    tx_rate: float = 1.0
    spend_fraction: float = 0.0
    submit_margin_ms: int | None = None
    protocol: Settings = field(default_factory=lambda: settings)

    def __post_init__(self) -> None:
        if self.validators < 1:
            msg = f"A network needs at least one validator, got {self.validators}"
            raise ValueError(msg)
        if min(self.clients, self.standby) < 0 or self.epochs < 1:
            msg = "Client, standby and epoch counts must be non-negative (epochs >= 1)"
            raise ValueError(msg)
        if self.tx_rate < 0 or not 0.0 <= self.spend_fraction <= 1.0:
            msg = "tx_rate must be >= 0 and spend_fraction within [0, 1]"
            raise ValueError(msg)

    @property
    def schedule(self) -> EpochSchedule:
        return EpochSchedule(self.protocol.epoch.delta_ms, self.protocol.epoch.eth_ms)

    @property
    def end_time(self) -> int:
        """Start of the epoch after the last one; runs stop there."""
        return self.schedule.epoch_start(self.epochs + 1)

    @property
    def submit_window(self) -> tuple[int, int]:
        margin = self.submit_margin_ms
        if margin is None:
            margin = 2 * self.protocol.block.interval_ms
        start = self.schedule.epoch_start(1)
        return start, self.schedule.suppression_start(self.epochs) - margin
