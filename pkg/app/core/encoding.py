"""Canonical byte layout used for hashing, signing and persistence.

Every record starts with a one-byte format tag followed by its fields in
declared order. Field encodings:

* bytes: 4-byte big-endian length, then the raw bytes;
* int: 8-byte big-endian two's complement;
* str: UTF-8 bytes encoded as a bytes field;
* optional: ``0x00`` for ``None`` or ``0x01`` followed by the value;
* sequence: 4-byte big-endian count, then the items.
"""

from __future__ import annotations

import struct

FORMAT_TAG = 1

_LENGTH = struct.Struct(">I")
_INT = struct.Struct(">q")


class DecodeError(ValueError):
    """Raised when a byte record cannot be parsed."""

    def __init__(self, message: str, offset: int) -> None:
        self.offset = offset
        super().__init__(f"{message} at offset {offset}")


class Writer:
    """Accumulates canonical fields."""

    def __init__(self, tag: int | None = FORMAT_TAG) -> None:
        self._parts: list[bytes] = []
        if tag is not None:
            self._parts.append(bytes([tag]))

    def raw(self, value: bytes) -> Writer:
        self._parts.append(value)
        return self

    def bytes_(self, value: bytes) -> Writer:
        self._parts.append(_LENGTH.pack(len(value)))
        self._parts.append(value)
        return self

    def int_(self, value: int) -> Writer:
        self._parts.append(_INT.pack(value))
        return self

    def str_(self, value: str) -> Writer:
        return self.bytes_(value.encode("utf-8"))

    def bool_(self, value: bool) -> Writer:
        self._parts.append(b"\x01" if value else b"\x00")
        return self

    def optional_bytes(self, value: bytes | None) -> Writer:
        if value is None:
            return self.bool_(False)
        return self.bool_(True).bytes_(value)

    def count(self, value: int) -> Writer:
        self._parts.append(_LENGTH.pack(value))
        return self

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Parses fields written by :class:`Writer`."""

    def __init__(self, data: bytes, *, tagged: bool = True, base_offset: int = 0) -> None:
        self._data = data
        self._pos = 0
        self._base = base_offset
        if tagged:
            tag = self._take(1)[0]
            if tag != FORMAT_TAG:
                raise DecodeError(f"Unsupported format tag {tag}", self._base)

    @property
    def offset(self) -> int:
        return self._base + self._pos

    def _take(self, size: int) -> bytes:
        end = self._pos + size
        if end > len(self._data):
            raise DecodeError(f"Truncated record, needed {size} byte(s)", self.offset)
        chunk = self._data[self._pos : end]
        self._pos = end
        return chunk

    def bytes_(self) -> bytes:
        (size,) = _LENGTH.unpack(self._take(_LENGTH.size))
        return self._take(size)

    def int_(self) -> int:
        (value,) = _INT.unpack(self._take(_INT.size))
        return int(value)

    def str_(self) -> str:
        start = self.offset
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError("Invalid UTF-8 text", start) from None

    def bool_(self) -> bool:
        flag = self._take(1)[0]
        if flag not in (0, 1):
            raise DecodeError(f"Invalid flag byte {flag}", self.offset - 1)
        return flag == 1

    def optional_bytes(self) -> bytes | None:
        return self.bytes_() if self.bool_() else None

    def count(self) -> int:
        (value,) = _LENGTH.unpack(self._take(_LENGTH.size))
        return int(value)

    def expect_end(self) -> None:
        if self._pos != len(self._data):
            raise DecodeError("Trailing bytes after record", self.offset)
