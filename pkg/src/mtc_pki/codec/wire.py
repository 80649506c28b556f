"""Big-endian byte writer and reader used by every wire format.

All integers are unsigned and big-endian; variable-length fields carry a
length prefix of 1, 2, 3 or 4 bytes.
"""
from __future__ import annotations

from ..errors import CodecError


class Writer:
    """Accumulates encoded fields."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def uint(self, value: int, width: int) -> "Writer":
        if value < 0 or value >= 1 << (8 * width):
            raise CodecError(f"value {value} does not fit in {width} byte(s)")
        self._buf += value.to_bytes(width, "big")
        return self

    def u8(self, value: int) -> "Writer":
        return self.uint(value, 1)

    def u16(self, value: int) -> "Writer":
        return self.uint(value, 2)

    def u64(self, value: int) -> "Writer":
        return self.uint(value, 8)

    def raw(self, data: bytes) -> "Writer":
        self._buf += data
        return self

    def var_bytes(self, data: bytes, prefix: int) -> "Writer":
        self.uint(len(data), prefix)
        self._buf += data
        return self

    def text(self, value: str, prefix: int = 2) -> "Writer":
        return self.var_bytes(value.encode("utf-8"), prefix)

    @property
    def bytes(self) -> bytes:
        return bytes(self._buf)


class Reader:
    """Consumes fields from a byte string; every read is bounds checked."""

    def __init__(self, data: bytes) -> None:
        self._data = memoryview(bytes(data))
        self._pos = 0

    @property
    def remaining(self) -> int:
        return len(self._data) - self._pos

    def raw(self, length: int) -> bytes:
        if length < 0 or self._pos + length > len(self._data):
            raise CodecError(
                f"truncated input: need {length} byte(s) at offset {self._pos}, "
                f"have {self.remaining}"
            )
        out = self._data[self._pos:self._pos + length].tobytes()
        self._pos += length
        return out

    def uint(self, width: int) -> int:
        return int.from_bytes(self.raw(width), "big")

    def u8(self) -> int:
        return self.uint(1)

    def u16(self) -> int:
        return self.uint(2)

    def u64(self) -> int:
        return self.uint(8)

    def var_bytes(self, prefix: int) -> bytes:
        return self.raw(self.uint(prefix))

    def text(self, prefix: int = 2) -> str:
        data = self.var_bytes(prefix)
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CodecError(f"invalid UTF-8 text: {exc}") from None

    def finish(self) -> None:
        """Reject trailing bytes."""
        if self.remaining:
            raise CodecError(f"{self.remaining} trailing byte(s)")
