"""Low-level helpers for the binary artifact formats (see docs/FORMATS.md).

All fixed-width integers are little-endian.  Variable-length integers are
unsigned LEB128 (7 data bits per byte, high bit = continuation).  Strings are
a varint byte length followed by UTF-8 bytes.
"""

from __future__ import annotations

import io
import struct

from .errors import FormatError


def write_varint(buf: io.BytesIO, value: int) -> None:
    if value < 0:
        raise ValueError("varints are unsigned")
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            buf.write(bytes((byte | 0x80,)))
        else:
            buf.write(bytes((byte,)))
            return


def write_str(buf: io.BytesIO, s: str) -> None:
    data = s.encode("utf-8")
    write_varint(buf, len(data))
    buf.write(data)


def write_u8(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<B", v))


def write_u16(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<H", v))


def write_u32(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<I", v))


def write_i64(buf: io.BytesIO, v: int) -> None:
    buf.write(struct.pack("<q", v))


def write_f32(buf: io.BytesIO, v: float) -> None:
    buf.write(struct.pack("<f", v))


def write_deltas(buf: io.BytesIO, values) -> None:
    """Strictly ascending non-negative ints: first raw, then gaps, as varints."""
    prev = None
    for v in values:
        if prev is None:
            write_varint(buf, v)
        else:
            gap = v - prev
            if gap <= 0:
                raise ValueError("delta sequence must be strictly ascending")
            write_varint(buf, gap)
        prev = v


class Reader:
    """Cursor over an in-memory buffer with the matching read_* primitives."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0

    def eof(self) -> bool:
        return self._pos >= len(self._data)

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if end > len(self._data):
            raise FormatError("unexpected end of data")
        out = self._data[self._pos:end]
        self._pos = end
        return out

    def read_varint(self) -> int:
        shift = 0
        value = 0
        while True:
            byte = self._take(1)[0]
            value |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return value
            shift += 7
            if shift > 63:
                raise FormatError("varint too long")

    def read_str(self) -> str:
        n = self.read_varint()
        return self._take(n).decode("utf-8")

    def read_u8(self) -> int:
        return self._take(1)[0]

    def read_u16(self) -> int:
        return struct.unpack("<H", self._take(2))[0]

    def read_u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def read_i64(self) -> int:
        return struct.unpack("<q", self._take(8))[0]

    def read_f32(self) -> float:
        return struct.unpack("<f", self._take(4))[0]

    def read_deltas(self, count: int) -> list[int]:
        out = []
        prev = None
        for _ in range(count):
            v = self.read_varint()
            prev = v if prev is None else prev + v
            out.append(prev)
        return out

    def expect_magic(self, magic: bytes) -> None:
        got = self._take(len(magic))
        if got != magic:
            raise FormatError(f"bad magic {got!r}, expected {magic!r}")
