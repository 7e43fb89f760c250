"""Ring labelings of the processing elements."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RingPermutation:
    """Cycle visiting the PEs in ``order``; PE ``order[j]`` sends to ``order[j+1]``."""

    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))) or not order:
            raise ValueError(f"order must be a permutation of 0..m-1, got {order}")
        object.__setattr__(self, "order", order)
        pos = [0] * len(order)
        for j, pe in enumerate(order):
            pos[pe] = j
        object.__setattr__(self, "_pos", tuple(pos))

    @property
    def m(self) -> int:
        return len(self.order)

    def _check(self, pe: int):
        if not 0 <= pe < self.m:
            raise IndexError(f"PE {pe} not in ring of size {self.m}")

    def successor(self, pe: int) -> int:
        self._check(pe)
        return self.order[(self._pos[pe] + 1) % self.m]

    def predecessor(self, pe: int) -> int:
        self._check(pe)
        return self.order[(self._pos[pe] - 1) % self.m]


def identity_ring(m: int) -> RingPermutation:
    if m < 1:
        raise ValueError("a ring needs at least one PE")
    return RingPermutation(tuple(range(m)))


def fisher_yates(m: int, rng: np.random.Generator) -> list[int]:
    """Uniform random permutation of ``0..m-1`` (backward Durstenfeld variant)."""
    a = list(range(m))
    for i in range(m - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        a[i], a[j] = a[j], a[i]
    return a


def randomize_ring(m: int, rng: np.random.Generator) -> RingPermutation:
    if m < 1:
        raise ValueError("a ring needs at least one PE")
    return RingPermutation(tuple(fisher_yates(m, rng)))


def successor(t: RingPermutation, pe: int) -> int:
    return t.successor(pe)


def predecessor(t: RingPermutation, pe: int) -> int:
    return t.predecessor(pe)
