from __future__ import annotations

from collections.abc import Callable, Sequence
from typing import Generic, TypeVar

T = TypeVar("T")


class UnknownEntryError(KeyError):
    """Raised when a name is not registered.

    The message lists the registered names so a typo in a config file is easy
    to spot.
    """

    def __init__(self, kind: str, name: str, available: Sequence[str]) -> None:
        self.kind = kind
        self.name = name
        self.available = sorted(available)
        options = ", ".join(self.available) or "<none>"
        hint = f"Unknown {kind} '{name}'. Available: {options}."
        super().__init__(hint)

    def __str__(self) -> str:
        return str(self.args[0])


class Registry(Generic[T]):
    """Named factories for one family of plug-ins (schemes, scenarios)."""

    def __init__(self, kind: str = "entry") -> None:
        self.kind = kind
        self._factories: dict[str, Callable[[], T]] = {}

    def register(self, name: str, factory: Callable[[], T]) -> None:
        if name in self._factories:
            msg = f"Factory already registered for {name}"
            raise ValueError(msg)
        self._factories[name] = factory

    def create(self, name: str) -> T:
        return self.factory(name)()

    def factory(self, name: str) -> Callable[[], T]:
        """Factory registered under ``name``; raises :class:`UnknownEntryError` otherwise."""
        try:
            return self._factories[name]
        except KeyError as exc:
            raise UnknownEntryError(self.kind, name, self.names()) from exc

    def names(self) -> list[str]:
        return sorted(self._factories)
