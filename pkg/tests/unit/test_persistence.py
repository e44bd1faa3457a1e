from __future__ import annotations

from pathlib import Path

import pytest

from app.core.ranges import split_range
from app.crypto.certificates import CertifiedKeyRegistry
from app.crypto.signing import MacScheme
from app.ledger.forest import LedgerForest
from app.ledger.persistence import (
    ForestFormatError,
    IncompatibleFormatError,
    export_forest,
    import_forest,
    read_forest,
    write_forest,
)
from app.ledger.verify import authorize_spend
from tests.helpers import make_epoch, next_block, tx_in_range


@pytest.fixture
def forest(scheme: MacScheme, registry: CertifiedKeyRegistry) -> LedgerForest:
    """Two ledgers with blocks, a fork and one spent flag."""
    epoch = make_epoch(scheme, registry, 2)
    forest = LedgerForest()
    forest.open_epoch(epoch.genesis)
    first_range = epoch.table.entries[0].code_range
    second_range = epoch.table.entries[1].code_range
    owner = epoch.keypair(0)
    other = epoch.keypair(1)
    out = tx_in_range(scheme, owner, first_range, 2_000)
    forest.append_block(next_block(scheme, owner, forest, 1, first_range, [out], timestamp=2_050))
    spend = tx_in_range(scheme, other, second_range, 2_100, input=out.t_id)
    auth = authorize_spend(out.t_id, forest, owner, epoch.table, scheme, spend.t_id)
    forest.append_block(
        next_block(
            scheme, other, forest, 1, second_range, [spend], timestamp=2_150, authorizations=[auth]
        )
    )
    low, high = split_range(second_range)
    forest.fork(1, second_range, low, high)
    forest.append_block(next_block(scheme, other, forest, 1, low, [], timestamp=2_300))
    return forest


def test_round_trip_is_byte_identical(forest: LedgerForest) -> None:
    data = export_forest(forest)
    restored = import_forest(data)
    assert export_forest(restored) == data
    assert restored.block_count() == forest.block_count()
    assert restored.transaction_count() == 2
    assert set(restored.spent_sidecar) == set(forest.spent_sidecar)
    assert restored.check_integrity() == []


def test_file_helpers(forest: LedgerForest, tmp_path: Path) -> None:
    path = write_forest(forest, tmp_path / "nested" / "forest.tcf")
    assert path.read_bytes().startswith(b"tree-chain-forest v1\n")
    assert read_forest(path).block_count() == 3


def test_missing_end_marker(forest: LedgerForest) -> None:
    data = export_forest(forest)
    cut = data[: data.rindex(b"\nE ") + 1]
    with pytest.raises(ForestFormatError, match="truncated") as info:
        import_forest(cut)
    assert info.value.offset == len(cut)


def test_truncated_record_reports_offset(forest: LedgerForest) -> None:
    data = export_forest(forest)
    start = data.index(b"\nB ") + 1
    end = data.index(b"\n", start)
    cut = data[: end - 8] + data[end:]
    with pytest.raises(ForestFormatError) as info:
        import_forest(cut)
    assert start <= info.value.offset <= end


def test_version_mismatch(forest: LedgerForest) -> None:
    data = export_forest(forest).replace(b"tree-chain-forest v1", b"tree-chain-forest v9", 1)
    with pytest.raises(IncompatibleFormatError, match="v9"):
        import_forest(data)


def test_not_a_forest() -> None:
    with pytest.raises(ForestFormatError, match="Not a forest file"):
        import_forest(b"hello\n")
