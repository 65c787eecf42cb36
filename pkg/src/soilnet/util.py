"""Shared utilities: deterministic seeding and half-open integer interval sets."""

from __future__ import annotations

import bisect
import hashlib
import random


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from structured parts.

    Independent of PYTHONHASHSEED so that (scenario, seed) runs are
    reproducible across processes.
    """
    text = "|".join(repr(p) for p in parts)
    digest = hashlib.blake2s(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(*parts) -> random.Random:
    return random.Random(derive_seed(*parts))


class IntervalSet:
    """Sorted, disjoint set of half-open integer intervals [a, b).

    Used for cookie-range bookkeeping: received ranges, coverage gaps,
    watermark arithmetic. Adjacent intervals are merged.
    """

    __slots__ = ("_starts", "_ends")

    def __init__(self, intervals=()):
        self._starts: list[int] = []
        self._ends: list[int] = []
        for a, b in intervals:
            self.add(a, b)

    def add(self, a: int, b: int) -> None:
        if b <= a:
            return
        # find all intervals overlapping or touching [a, b)
        i = bisect.bisect_left(self._ends, a)
        j = bisect.bisect_right(self._starts, b)
        if i < j:
            a = min(a, self._starts[i])
            b = max(b, self._ends[j - 1])
        del self._starts[i:j]
        del self._ends[i:j]
        self._starts.insert(i, a)
        self._ends.insert(i, b)

    def update(self, other: "IntervalSet") -> None:
        for a, b in other:
            self.add(a, b)

    def remove(self, a: int, b: int) -> None:
        if b <= a:
            return
        out_s: list[int] = []
        out_e: list[int] = []
        for s, e in self:
            if e <= a or s >= b:
                out_s.append(s)
                out_e.append(e)
                continue
            if s < a:
                out_s.append(s)
                out_e.append(a)
            if e > b:
                out_s.append(b)
                out_e.append(e)
        self._starts, self._ends = out_s, out_e

    def gaps_within(self, a: int, b: int) -> list[tuple[int, int]]:
        """Sub-ranges of [a, b) not covered by this set."""
        gaps = []
        cur = a
        for s, e in self:
            if e <= a:
                continue
            if s >= b:
                break
            if s > cur:
                gaps.append((cur, min(s, b)))
            cur = max(cur, e)
            if cur >= b:
                break
        if cur < b:
            gaps.append((cur, b))
        return gaps

    def covers(self, a: int, b: int) -> bool:
        return not self.gaps_within(a, b)

    def contains_point(self, x: int) -> bool:
        i = bisect.bisect_right(self._starts, x) - 1
        return i >= 0 and self._ends[i] > x

    def prefix_end(self, start: int) -> int:
        """End of the contiguous covered run beginning at `start`.

        Returns `start` itself when `start` is uncovered.
        """
        i = bisect.bisect_right(self._starts, start) - 1
        if i >= 0 and self._starts[i] <= start <= self._ends[i]:
            return max(self._ends[i], start)
        return start

    def total(self) -> int:
        return sum(e - s for s, e in self)

    def copy(self) -> "IntervalSet":
        c = IntervalSet()
        c._starts = list(self._starts)
        c._ends = list(self._ends)
        return c

    def intervals(self) -> list[tuple[int, int]]:
        return list(self)

    def __iter__(self):
        return iter(zip(self._starts, self._ends))

    def __len__(self) -> int:
        return len(self._starts)

    def __bool__(self) -> bool:
        return bool(self._starts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IntervalSet):
            return NotImplemented
        return self._starts == other._starts and self._ends == other._ends

    def __repr__(self) -> str:
        return f"IntervalSet({self.intervals()!r})"
