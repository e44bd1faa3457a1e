"""Line-oriented export and import of a ledger forest.

File layout, one record per line::

    tree-chain-forest v1
    G <genesis hex>
    C <epoch> <range> <root hex> <height>  (ledger of a carried epoch)
    F <epoch> <parent> <first> <second>
    B <epoch> <range> <block hex>
    D <epoch> <range> <block hex>          (disputed block)
    S <authorization hex>
    E <record count>

Genesis and carry records are interleaved with the ledgers of their epoch,
fork records precede the first block of the halves they create and spent flags
come last, so a re-export of an imported forest is byte-identical.
"""

from __future__ import annotations

import logging
from pathlib import Path

from app.core.encoding import DecodeError, Reader
from app.core.types import Block, ConsensusCodeRange, GenesisBlock, SpendAuthorization
from app.crypto.hashing import HASH_WIDTH, Digest
from app.ledger.forest import (
    CarryRecord,
    ForkDetectedError,
    LedgerForest,
    SpentFlag,
    UnknownLedgerError,
)

logger = logging.getLogger(__name__)

FORMAT_NAME = "tree-chain-forest"
FORMAT_VERSION = "v1"


class ForestFormatError(ValueError):
    """Raised when a forest file cannot be parsed."""

    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class IncompatibleFormatError(ForestFormatError):
    """Raised for forest files written by another format version."""


def export_forest(forest: LedgerForest) -> bytes:
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}"]
    fork_of = {
        (record.epoch, half): record
        for record in forest.forks
        for half in (record.first, record.second)
    }
    carried: dict[int, list[CarryRecord]] = {}
    for carry in forest.carries:
        carried.setdefault(carry.epoch, []).append(carry)
    epochs = sorted({genesis.epoch for genesis in forest.genesis_chain} | set(carried))
    emitted_forks: set[int] = set()
    disputed = set(forest.disputed)
    for current in epochs:
        genesis = forest.genesis_of(current)
        if genesis is not None:
            lines.append(f"G {genesis.to_bytes().hex()}")
        for carry in carried.get(current, []):
            lines.append(
                f"C {current} {carry.code_range} {carry.root.hex()} {carry.base_height}"
            )
        for (epoch, code_range), ledger in forest.ledgers.items():
            if epoch != current:
                continue
            record = fork_of.get((epoch, code_range))
            if record is not None and id(record) not in emitted_forks:
                emitted_forks.add(id(record))
                lines.append(f"F {epoch} {record.parent} {record.first} {record.second}")
            for block, block_hash in zip(ledger.blocks, ledger.block_hashes, strict=True):
                kind = "D" if block_hash in disputed else "B"
                lines.append(f"{kind} {epoch} {code_range} {block.to_bytes().hex()}")
    for flag in forest.spent_sidecar.values():
        lines.append(f"S {flag.authorization.to_bytes().hex()}")
    lines.append(f"E {len(lines) - 1}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _payload(text: str, offset: int) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise ForestFormatError("Invalid hex payload", offset) from None


def _hex_offset(line: str, hex_text: str, line_offset: int, exc: DecodeError) -> int:
    """File offset of the hex digits holding the byte a decode error points at."""
    return line_offset + len(line) - len(hex_text) + 2 * exc.offset


def _parse_range(text: str, offset: int) -> ConsensusCodeRange:
    try:
        return ConsensusCodeRange.parse(text)
    except ValueError as exc:
        raise ForestFormatError(f"Invalid range {text!r}: {exc}", offset) from None


def _parse_int(text: str, offset: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ForestFormatError(f"Invalid number {text!r}", offset) from None


def _check_header(line: str) -> None:
    name, _, version = line.partition(" ")
    if name != FORMAT_NAME:
        raise ForestFormatError("Not a forest file", 0)
    if version != FORMAT_VERSION:
        msg = f"Forest format {version!r} is not supported (expected {FORMAT_VERSION})"
        raise IncompatibleFormatError(msg, 0)


def import_forest(data: bytes) -> LedgerForest:  # noqa: C901
    """Rebuild a forest from :func:`export_forest` output.

    Raises
    ------
    IncompatibleFormatError
        If the header names another format version.
    ForestFormatError
        For any malformed, truncated or inconsistent record.
    """
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ForestFormatError("Forest files are ASCII", exc.start) from None
    raw_lines = text.split("\n")
    _check_header(raw_lines[0])
    forest = LedgerForest()
    flags: list[SpentFlag] = []
    offset = len(raw_lines[0]) + 1
    records = 0
    for line in raw_lines[1:]:
        line_offset = offset
        offset += len(line) + 1
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        hex_text = ""
        try:
            if kind == "G":
                hex_text = rest
                forest.open_epoch(GenesisBlock.from_bytes(_payload(rest, line_offset)))
            elif kind in ("B", "D"):
                epoch_text, range_text, hex_text = rest.split(" ")
                block = Block.from_bytes(_payload(hex_text, line_offset))
                if (block.epoch, block.code_range) != (
                    _parse_int(epoch_text, line_offset),
                    _parse_range(range_text, line_offset),
                ):
                    raise ForestFormatError("Block does not match its ledger tag", line_offset)
                forest.append_block(block, disputed=kind == "D")
            elif kind == "C":
                epoch_text, range_text, hex_text, height_text = rest.split(" ")
                root = _payload(hex_text, line_offset)
                if len(root) != HASH_WIDTH:
                    raise ForestFormatError("Carried ledger root is not a digest", line_offset)
                forest.carry_ledger(
                    _parse_int(epoch_text, line_offset),
                    _parse_range(range_text, line_offset),
                    Digest(root),
                    _parse_int(height_text, line_offset),
                )
            elif kind == "F":
                epoch_text, parent, first, second = rest.split(" ")
                forest.fork(
                    _parse_int(epoch_text, line_offset),
                    _parse_range(parent, line_offset),
                    _parse_range(first, line_offset),
                    _parse_range(second, line_offset),
                )
            elif kind == "S":
                hex_text = rest
                reader = Reader(_payload(rest, line_offset))
                auth = SpendAuthorization.read(reader)
                reader.expect_end()
                flags.append(SpentFlag(auth.spender_id, auth))
            elif kind == "E":
                if _parse_int(rest, line_offset) != records:
                    raise ForestFormatError("Record count does not match", line_offset)
                forest.spent_sidecar = {flag.authorization.t_out_id: flag for flag in flags}
                logger.info("Imported forest with %d record(s)", records)
                return forest
            else:
                raise ForestFormatError(f"Unknown record kind {kind!r}", line_offset)
        except DecodeError as exc:
            offset_in_file = _hex_offset(line, hex_text, line_offset, exc)
            raise ForestFormatError(str(exc), offset_in_file) from None
        except (ForkDetectedError, UnknownLedgerError) as exc:
            raise ForestFormatError(str(exc), line_offset) from None
        except ValueError as exc:
            if isinstance(exc, ForestFormatError):
                raise
            raise ForestFormatError(f"Malformed record: {exc}", line_offset) from None
        records += 1
    raise ForestFormatError("Missing end marker, file is truncated", len(data))


def write_forest(forest: LedgerForest, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(export_forest(forest))
    return path


def read_forest(path: Path) -> LedgerForest:
    return import_forest(path.read_bytes())
