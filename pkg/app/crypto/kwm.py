"""Key weight metric used to rank validator candidates."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from types import MappingProxyType

from app.crypto.hashing import ALPHABET, MalformedInputError


def _default_weights() -> dict[str, int]:
    weights: dict[str, int] = {}
    for offset, symbol in enumerate("0123456789"):
        weights[symbol] = offset
    for offset, symbol in enumerate("ABCDEFGHIJKLMNOPQRSTUVWXYZ"):
        weights[symbol] = 11 + offset
    for offset, symbol in enumerate("abcdefghijklmnopqrstuvwxyz"):
        weights[symbol] = 37 + offset
    return weights


@dataclass(frozen=True, slots=True)
class KwmDictionary:
    """Total map from every alphabet symbol to a non-negative weight.

    The default instance weighs digits ``0-9`` as 0-9, uppercase letters as
    11-36 and lowercase letters as 37-62.
    """

    weights: Mapping[str, int] = field(default_factory=_default_weights)

    def __post_init__(self) -> None:
        missing = [symbol for symbol in ALPHABET if symbol not in self.weights]
        if missing:
            msg = f"KWM dictionary lacks weights for {''.join(missing)!r}"
            raise ValueError(msg)
        extra = sorted(set(self.weights) - set(ALPHABET))
        if extra:
            msg = f"KWM dictionary has symbols outside the alphabet: {extra}"
            raise ValueError(msg)
        negative = sorted(s for s, w in self.weights.items() if w < 0)
        if negative:
            msg = f"KWM weights must be non-negative, got negatives for {negative}"
            raise ValueError(msg)
        object.__setattr__(self, "weights", MappingProxyType(dict(self.weights)))

    def weight_of(self, symbol: str) -> int:
        try:
            return self.weights[symbol]
        except KeyError:
            raise MalformedInputError(symbol, 0) from None

    def as_dict(self) -> dict[str, int]:
        return {symbol: self.weights[symbol] for symbol in ALPHABET}


DEFAULT_DICTIONARY = KwmDictionary()


def kwm(text: str, dictionary: KwmDictionary = DEFAULT_DICTIONARY) -> int:
    """Return the sum of per-symbol weights of ``text``.

    Raises
    ------
    MalformedInputError
        If ``text`` contains a symbol outside the base-62 alphabet.
    """
    weights = dictionary.weights
    total = 0
    for position, symbol in enumerate(text):
        try:
            total += weights[symbol]
        except KeyError:
            raise MalformedInputError(text, position) from None
    return total
