"""Canonical binary encoding helpers.

All protocol integers are fixed-width big-endian unless a layout explicitly
says otherwise (block headers and the transaction version field are
little-endian, matching the on-chain formats). Byte strings are length-prefixed
with a 2-byte big-endian length unless noted.
"""

from __future__ import annotations

import struct

from .errors import MalformedFrame


class Writer:
    def __init__(self):
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">B", v))
        return self

    def u16(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">H", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">Q", v))
        return self

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(bytes(b))
        return self

    def fixed(self, b: bytes, size: int) -> "Writer":
        if len(b) != size:
            raise ValueError(f"expected {size} bytes, got {len(b)}")
        self._parts.append(bytes(b))
        return self

    def lp_bytes(self, b: bytes) -> "Writer":
        """2-byte length prefix; payload must fit in 65535 bytes."""
        self.u16(len(b))
        self._parts.append(bytes(b))
        return self

    def lp_bytes32(self, b: bytes) -> "Writer":
        """4-byte length prefix for large payloads (blocks, snapshots)."""
        self.u32(len(b))
        self._parts.append(bytes(b))
        return self

    def opt_u64(self, v: int | None) -> "Writer":
        if v is None:
            return self.u8(0)
        return self.u8(1).u64(v)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    def __init__(self, data: bytes):
        self._data = memoryview(data)
        self._pos = 0

    def _take(self, n: int) -> memoryview:
        if self._pos + n > len(self._data):
            raise MalformedFrame(f"truncated: need {n} bytes at offset {self._pos}")
        v = self._data[self._pos:self._pos + n]
        self._pos += n
        return v

    def u8(self) -> int:
        return self._take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self._take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def fixed(self, size: int) -> bytes:
        return bytes(self._take(size))

    def lp_bytes(self) -> bytes:
        return bytes(self._take(self.u16()))

    def lp_bytes32(self) -> bytes:
        return bytes(self._take(self.u32()))

    def opt_u64(self) -> int | None:
        return self.u64() if self.u8() else None

    def remaining(self) -> int:
        return len(self._data) - self._pos

    def expect_end(self) -> None:
        if self.remaining():
            raise MalformedFrame(f"{self.remaining()} trailing bytes")
