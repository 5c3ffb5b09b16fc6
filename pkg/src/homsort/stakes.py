"""Committee stake tables."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class StakeTable:
    """Stakes of processes p_1..p_n and the Byzantine stake bound ``s_f``.

    Process indices are 1-based throughout the package.
    """

    stakes: tuple[int, ...]
    s_f: int

    def __init__(self, stakes: Sequence[int], s_f: int):
        stakes = tuple(int(s) for s in stakes)
        if not stakes:
            raise ValueError("committee must have at least one process")
        if any(s < 1 for s in stakes):
            raise ValueError(f"stakes must be positive integers, got {list(stakes)}")
        s_f = int(s_f)
        if s_f < 0:
            raise ValueError("s_f must be non-negative")
        if 2 * s_f >= sum(stakes):
            raise ValueError(f"s_f={s_f} violates s_f < s_t/2 with s_t={sum(stakes)}")
        object.__setattr__(self, "stakes", stakes)
        object.__setattr__(self, "s_f", s_f)

    @classmethod
    def with_max_faults(cls, stakes: Sequence[int]) -> "StakeTable":
        """Table whose Byzantine bound is the largest allowed, ceil(s_t/2) - 1."""
        return cls(stakes, (sum(stakes) - 1) // 2)

    @property
    def n(self) -> int:
        return len(self.stakes)

    @property
    def s_t(self) -> int:
        return sum(self.stakes)

    @property
    def threshold(self) -> int:
        return self.s_f + 1

    @property
    def indices(self) -> range:
        return range(1, self.n + 1)

    def stake(self, i: int) -> int:
        if not 1 <= i <= self.n:
            raise IndexError(f"no process p_{i} in a committee of {self.n}")
        return self.stakes[i - 1]

    def stake_of(self, indices: Iterable[int]) -> int:
        return sum(self.stake(i) for i in set(indices))

    def prefix_sums(self) -> list[int]:
        out, acc = [], 0
        for s in self.stakes:
            acc += s
            out.append(acc)
        return out
