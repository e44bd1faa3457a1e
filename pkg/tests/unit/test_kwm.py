from __future__ import annotations

import pytest

from app.crypto.hashing import ALPHABET, MalformedInputError
from app.crypto.kwm import DEFAULT_DICTIONARY, KwmDictionary, kwm


@pytest.mark.parametrize(
    ("text", "expected"),
    [
        ("axqPe96aiwZjQ", 482),
        ("aQfx12ijAtcTM", 419),
        ("J94Vswa72liac", 394),
        ("Mq83V2mq62kEl", 341),
        ("Rnah72Mec123a", 314),
        ("", 0),
    ],
)
def test_kwm_golden_values(text: str, expected: int) -> None:
    assert kwm(text) == expected


def test_default_weights() -> None:
    assert DEFAULT_DICTIONARY.weight_of("0") == 0
    assert DEFAULT_DICTIONARY.weight_of("9") == 9
    assert DEFAULT_DICTIONARY.weight_of("A") == 11
    assert DEFAULT_DICTIONARY.weight_of("Z") == 36
    assert DEFAULT_DICTIONARY.weight_of("a") == 37
    assert DEFAULT_DICTIONARY.weight_of("z") == 62


def test_kwm_ignores_symbol_order() -> None:
    assert kwm("axqPe96aiwZjQ") == kwm("".join(sorted("axqPe96aiwZjQ")))


def test_kwm_rejects_foreign_symbol() -> None:
    with pytest.raises(MalformedInputError) as info:
        kwm("ab-c")
    assert info.value.position == 2


def test_custom_dictionary() -> None:
    weights = dict.fromkeys(ALPHABET, 1)
    assert kwm("abc", KwmDictionary(weights)) == 3


def test_dictionary_must_be_total() -> None:
    weights = DEFAULT_DICTIONARY.as_dict()
    del weights["q"]
    with pytest.raises(ValueError, match="lacks"):
        KwmDictionary(weights)


def test_dictionary_rejects_negative_weights() -> None:
    weights = DEFAULT_DICTIONARY.as_dict()
    weights["q"] = -1
    with pytest.raises(ValueError, match="non-negative"):
        KwmDictionary(weights)
