"""Trust anchor identifiers (dotted integers such as ``32473.1.42``)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from ..errors import CodecError
from .wire import Reader, Writer

_U64_MAX = (1 << 64) - 1
MAX_COMPONENTS = 16


@dataclass(frozen=True, order=True)
class TrustAnchorID:
    components: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.components or len(self.components) > MAX_COMPONENTS:
            raise CodecError("trust anchor ID needs 1 to 16 components")
        if any(not 0 <= c <= _U64_MAX for c in self.components):
            raise CodecError("trust anchor ID component out of range")

    def __str__(self) -> str:
        return ".".join(str(c) for c in self.components)

    def child(self, number: int) -> "TrustAnchorID":
        """Identifier extended by one component (e.g. a landmark number)."""
        return TrustAnchorID(self.components + (number,))

    @property
    def parent(self) -> "TrustAnchorID":
        if len(self.components) < 2:
            raise CodecError(f"{self} has no parent")
        return TrustAnchorID(self.components[:-1])

    @property
    def last(self) -> int:
        return self.components[-1]

    def encode(self, w: Writer) -> None:
        w.u8(len(self.components))
        for c in self.components:
            w.u64(c)

    @classmethod
    def decode(cls, r: Reader) -> "TrustAnchorID":
        count = r.u8()
        return cls(tuple(r.u64() for _ in range(count)))


def parse_taid(text: str) -> TrustAnchorID:
    """Parse dotted decimal text; rejects empty, non-numeric and overflowing parts."""
    if not text or not text.strip():
        raise CodecError("empty trust anchor ID")
    parts = text.strip().split(".")
    components = []
    for part in parts:
        if not part.isdigit() or not part.isascii():
            raise CodecError(f"non-numeric trust anchor ID component {part!r} in {text!r}")
        if len(part) > 1 and part[0] == "0":
            raise CodecError(f"non-canonical component {part!r} in {text!r}")
        value = int(part)
        if value > _U64_MAX:
            raise CodecError(f"component {part} overflows 64 bits")
        components.append(value)
    return TrustAnchorID(tuple(components))


def format_taid(taid: TrustAnchorID) -> str:
    return str(taid)


@dataclass(frozen=True)
class TrustAnchorRange:
    """A base identifier plus an inclusive window ``[min, max]`` of children.

    ``min == max == 0`` with ``base`` equal to a log ID is the bare log anchor
    a relying party advertises to signal standalone support.
    """

    base: TrustAnchorID
    min: int
    max: int

    def __post_init__(self) -> None:
        if self.min > self.max:
            raise CodecError(f"trust anchor range min {self.min} > max {self.max}")

    @property
    def is_bare(self) -> bool:
        return self.min == 0 and self.max == 0

    def covers(self, base: TrustAnchorID, number: int) -> bool:
        return self.base == base and self.min <= number <= self.max

    def encode(self, w: Writer) -> None:
        self.base.encode(w)
        w.u64(self.min)
        w.u64(self.max)

    @classmethod
    def decode(cls, r: Reader) -> "TrustAnchorRange":
        base = TrustAnchorID.decode(r)
        return cls(base, r.u64(), r.u64())

    def to_dict(self) -> dict:
        return {"base": str(self.base), "min": self.min, "max": self.max}

    @classmethod
    def from_dict(cls, data: dict) -> "TrustAnchorRange":
        return cls(parse_taid(data["base"]), int(data["min"]), int(data["max"]))

    def __str__(self) -> str:
        if self.is_bare:
            return str(self.base)
        return f"{self.base}.[{self.min}-{self.max}]"
