"""Message scheduling over a simpy environment.

Time is integral logical milliseconds. Every delivery is a simpy timeout,
so events at the same instant fire in scheduling order and a run is fully
determined by its seed. Links are FIFO: a message never overtakes an
earlier one on the same (source, destination) pair.
"""

from __future__ import annotations

import logging
import random
from collections.abc import Callable, Generator
from dataclasses import dataclass
from typing import Any, Protocol

import simpy

from app.core.config import NetworkConfig
from app.simnet.metrics import NetworkMetrics, ProtocolEvent, TraceRecord, trace_digest

logger = logging.getLogger(__name__)


class Wire(Protocol):
    def to_bytes(self) -> bytes: ...


@dataclass(frozen=True, slots=True)
class Envelope:
    src: str
    dst: str
    kind: str
    payload: Any
    size: int
    sent_at: int


class Endpoint(Protocol):
    node_id: str

    def receive(self, envelope: Envelope) -> None: ...


DropRule = Callable[[Envelope], bool]


@dataclass(frozen=True, slots=True)
class RunResult:
    trace: list[str]
    events: list[ProtocolEvent]
    metrics: dict[str, int]

    @property
    def digest(self) -> str:
        return trace_digest([*self.trace, *(event.line() for event in self.events)])


class SimNetwork:
    """Registry of endpoints plus the event loop that connects them."""

    def __init__(self, config: NetworkConfig, seed: int) -> None:
        self.config = config
        self.env = simpy.Environment()
        self.rng = random.Random(f"network:{seed}")
        self.metrics = NetworkMetrics()
        self.trace: list[TraceRecord] = []
        self.events: list[ProtocolEvent] = []
        self._nodes: dict[str, Endpoint] = {}
        self._clients: set[str] = set()
        self._rules: list[DropRule] = []
        self._down: set[str] = set()
        self._stalled: dict[str, int] = {}
        self._link_clock: dict[tuple[str, str], int] = {}

    @property
    def now(self) -> int:
        return int(self.env.now)

    # -- membership -----------------------------------------------------------

    def register(self, node: Endpoint, *, client: bool = False) -> None:
        if node.node_id in self._nodes:
            msg = f"Node {node.node_id} is already registered"
            raise ValueError(msg)
        self._nodes[node.node_id] = node
        if client:
            self._clients.add(node.node_id)

    def node(self, node_id: str) -> Endpoint:
        return self._nodes[node_id]

    def peers(self, exclude: str | None = None) -> list[str]:
        """Non-client nodes in registration order."""
        return [
            node_id
            for node_id in self._nodes
            if node_id not in self._clients and node_id != exclude
        ]

    # -- faults ---------------------------------------------------------------

    def add_drop_rule(self, rule: DropRule) -> None:
        self._rules.append(rule)

    def isolate(self, node_id: str) -> None:
        """Drop everything sent to or by ``node_id``."""
        self.add_drop_rule(lambda envelope: node_id in (envelope.src, envelope.dst))
        self.record(node_id, "isolated")

    def kill(self, node_id: str) -> None:
        self._down.add(node_id)
        self.record(node_id, "killed")

    def stall(self, node_id: str, until: int) -> None:
        """Freeze the outbound side and timers of ``node_id`` until ``until``."""
        self._stalled[node_id] = until
        self.record(node_id, "stalled", f"until={until}")

    def is_up(self, node_id: str) -> bool:
        return node_id not in self._down

    def is_stalled(self, node_id: str) -> bool:
        return self._stalled.get(node_id, -1) > self.now

    def active(self, node_id: str) -> bool:
        return self.is_up(node_id) and not self.is_stalled(node_id)

    # -- messages -------------------------------------------------------------

    def latency(self) -> int:
        low, high = self.config.latency_min_ms, self.config.latency_max_ms
        if self.config.distribution == "fixed":
            return low
        return self.rng.randint(low, high)

    def _drop(self, envelope: Envelope, *, at: int) -> None:
        self.metrics.dropped += 1
        self.trace.append(
            TraceRecord(at, envelope.src, envelope.dst, envelope.kind, envelope.size, dropped=True)
        )

    def send(
        self, src: str, dst: str, kind: str, payload: Wire, *, size: int | None = None
    ) -> None:
        """Schedule one delivery of ``payload`` from ``src`` to ``dst``."""
        if size is None:
            size = len(payload.to_bytes())
        self._post(Envelope(src, dst, kind, payload, size, self.now))

    def _post(self, envelope: Envelope) -> None:
        self.metrics.sent += 1
        self.metrics.sent_by_kind[envelope.kind] += 1
        if not self.active(envelope.src) or any(rule(envelope) for rule in self._rules):
            self._drop(envelope, at=self.now)
            return
        if self.config.drop_rate and self.rng.random() < self.config.drop_rate:
            self._drop(envelope, at=self.now)
            return
        link = (envelope.src, envelope.dst)
        deliver_at = max(self.now + self.latency(), self._link_clock.get(link, 0))
        self._link_clock[link] = deliver_at
        self.env.process(self._deliver(envelope, deliver_at - self.now))

    def _deliver(self, envelope: Envelope, delay: int) -> Generator[simpy.Event, Any, None]:
        yield self.env.timeout(delay)
        if not self.is_up(envelope.dst):
            self._drop(envelope, at=self.now)
            return
        self.metrics.delivered += 1
        self.metrics.bytes_delivered += envelope.size
        self.trace.append(
            TraceRecord(self.now, envelope.src, envelope.dst, envelope.kind, envelope.size)
        )
        self._nodes[envelope.dst].receive(envelope)

    def broadcast(self, src: str, kind: str, payload: Wire) -> int:
        """Send ``payload`` to every non-client node except ``src``.

        Returns the number of deliveries scheduled or dropped.
        """
        size = len(payload.to_bytes())
        if self.active(src):
            self.metrics.broadcasts[kind] += 1
            self.metrics.broadcast_bytes[kind] += size
        targets = self.peers(exclude=src)
        for dst in targets:
            self._post(Envelope(src, dst, kind, payload, size, self.now))
        return len(targets)

    # -- timers ---------------------------------------------------------------

    def call_at(self, node_id: str, time: int, callback: Callable[[], None]) -> None:
        """Run ``callback`` at ``time`` unless ``node_id`` is down by then."""
        if time < self.now:
            msg = f"Cannot schedule at {time}, clock is already at {self.now}"
            raise ValueError(msg)
        self.env.process(self._timer(node_id, time - self.now, callback))

    def _timer(
        self, node_id: str, delay: int, callback: Callable[[], None]
    ) -> Generator[simpy.Event, Any, None]:
        yield self.env.timeout(delay)
        if self.is_up(node_id):
            callback()

    def every(
        self, node_id: str, period: int, callback: Callable[[], None], *, start: int = 0
    ) -> None:
        """Run ``callback`` every ``period`` ms while ``node_id`` is active."""
        if period < 1:
            msg = f"Timer period must be >= 1 ms, got {period}"
            raise ValueError(msg)
        self.env.process(self._ticker(node_id, period, callback, start))

    def _ticker(
        self, node_id: str, period: int, callback: Callable[[], None], start: int
    ) -> Generator[simpy.Event, Any, None]:
        yield self.env.timeout(max(0, start - self.now))
        while self.is_up(node_id):
            if not self.is_stalled(node_id):
                callback()
            yield self.env.timeout(period)

    # -- run ------------------------------------------------------------------

    def record(self, node: str, kind: str, detail: str = "") -> None:
        self.events.append(ProtocolEvent(self.now, node, kind, detail))

    def events_of(self, kind: str) -> list[ProtocolEvent]:
        return [event for event in self.events if event.kind == kind]

    def run_until(self, t_end: int) -> RunResult:
        """Process every event strictly before ``t_end``."""
        if t_end < self.now:
            msg = f"Cannot run back to {t_end}, clock is at {self.now}"
            raise ValueError(msg)
        if t_end > self.now:
            self.env.run(until=t_end)
        logger.debug("Ran until %d: %s", t_end, self.metrics.snapshot())
        return self.result()

    def result(self) -> RunResult:
        return RunResult(
            trace=[record.line() for record in self.trace],
            events=list(self.events),
            metrics=self.metrics.snapshot(),
        )
