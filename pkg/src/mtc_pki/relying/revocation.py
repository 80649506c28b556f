"""Revocation by log index: sorted, merged half-open ranges."""
from __future__ import annotations

import bisect
from typing import Iterable, List, Sequence, Tuple

from ..errors import InvalidRequest

Range = Tuple[int, int]


class RevokedRanges:
    """Sorted, disjoint, merged ``[lo, hi)`` index ranges.

    Adjacent and overlapping ranges are merged on insert so membership is a
    single binary search.
    """

    __slots__ = ("_los", "_his")

    def __init__(self, ranges: Iterable[Sequence[int]] = ()) -> None:
        self._los: List[int] = []
        self._his: List[int] = []
        for lo, hi in ranges:
            self.add(int(lo), int(hi))

    def add(self, lo: int, hi: int) -> "RevokedRanges":
        if not 0 <= lo < hi:
            raise InvalidRequest(f"invalid revocation range [{lo}, {hi})")
        # first range whose end reaches lo, last range whose start is within hi
        i = bisect.bisect_left(self._his, lo)
        j = bisect.bisect_right(self._los, hi)
        if i < j:
            lo = min(lo, self._los[i])
            hi = max(hi, self._his[j - 1])
        self._los[i:j] = [lo]
        self._his[i:j] = [hi]
        return self

    def contains(self, index: int) -> bool:
        i = bisect.bisect_right(self._los, index) - 1
        return i >= 0 and index < self._his[i]

    __contains__ = contains

    @property
    def ranges(self) -> Tuple[Range, ...]:
        return tuple(zip(self._los, self._his))

    def __len__(self) -> int:
        return len(self._los)

    def __iter__(self):
        return iter(self.ranges)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RevokedRanges):
            return NotImplemented
        return self._los == other._los and self._his == other._his

    def __repr__(self) -> str:
        return f"RevokedRanges({list(self.ranges)!r})"

    def copy(self) -> "RevokedRanges":
        clone = RevokedRanges()
        clone._los = list(self._los)
        clone._his = list(self._his)
        return clone

    def merged(self, other: "RevokedRanges") -> "RevokedRanges":
        out = self.copy()
        for lo, hi in other.ranges:
            out.add(lo, hi)
        return out

    def to_list(self) -> List[List[int]]:
        return [[lo, hi] for lo, hi in self.ranges]

    @classmethod
    def from_list(cls, items: Iterable[Sequence[int]]) -> "RevokedRanges":
        return cls(items)


def check_revoked(index: int, revoked: RevokedRanges) -> bool:
    """True when *index* falls in a revoked range. No network access, O(log r)."""
    return revoked.contains(index)
