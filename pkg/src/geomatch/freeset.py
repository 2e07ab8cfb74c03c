"""Deletion-only ordered set of free offline vertices.

The offline coordinates are fixed and sorted, so the free set is a subset of
indices. Successor and predecessor queries are answered by two union-find
"next alive" forests with path halving; each removal is a single link.
"""
from __future__ import annotations

import numpy as np

from .instance import Topology


class FreeSet:
    def __init__(self, coords, topology: Topology | str = Topology.LINE):
        self.coords = np.asarray(coords, dtype=float)
        self._xs = self.coords.tolist()
        self.topology = Topology(topology)
        n = len(self._xs)
        self._n = n
        self._right = list(range(n + 1))  # find_right(i): first alive >= i, n if none
        self._left = list(range(n + 1))  # slot i+1 <-> index i; slot 0 is the sentinel
        self._alive = [True] * n
        self._count = n

    def __len__(self) -> int:
        return self._count

    def __contains__(self, i: int) -> bool:
        return 0 <= i < self._n and self._alive[i]

    def alive_indices(self) -> np.ndarray:
        return np.flatnonzero(np.array(self._alive, dtype=bool))

    def free_coords(self) -> np.ndarray:
        return self.coords[self.alive_indices()]

    def successor(self, i: int) -> int:
        """Smallest alive index ``>= i``, or ``len(coords)`` if there is none."""
        p = self._right
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def predecessor(self, i: int) -> int:
        """Largest alive index ``<= i``, or -1 if there is none."""
        p = self._left
        j = i + 1
        while p[j] != j:
            p[j] = p[p[j]]
            j = p[j]
        return j - 1

    def cyclic_successor(self, i: int) -> int:
        j = self.successor(i + 1)
        return self.successor(0) if j == self._n else j

    def cyclic_predecessor(self, i: int) -> int:
        j = self.predecessor(i - 1)
        return self.predecessor(self._n - 1) if j < 0 else j

    def remove(self, i: int) -> None:
        if not self._alive[i]:
            raise KeyError(i)
        self._alive[i] = False
        self._right[i] = i + 1
        self._left[i + 1] = i
        self._count -= 1

    def nearest(self, y: float, pos: int | None = None) -> tuple[int, float]:
        """Nearest free vertex to ``y`` and its distance; ``(-1, inf)`` when empty.

        ``pos`` is the insertion point of ``y`` among all offline coordinates
        when the caller already has it. Equidistant candidates resolve to the
        smaller coordinate.
        """
        if self._count == 0:
            return -1, float("inf")
        xs = self._xs
        if pos is None:
            pos = int(np.searchsorted(self.coords, y))
        hi = self.successor(pos)
        lo = self.predecessor(pos - 1) if pos > 0 else -1
        circle = self.topology is Topology.CIRCLE
        if circle:
            if hi == self._n:
                hi = self.successor(0)
            if lo < 0:
                lo = self.predecessor(self._n - 1)
        best, best_d = -1, float("inf")
        for i in (lo, hi):
            if i < 0 or i >= self._n:
                continue
            d = abs(xs[i] - y)
            if circle and d > 0.5:
                d = 1.0 - d
            if d < best_d or (d == best_d and xs[i] < xs[best]):
                best, best_d = i, d
        return best, best_d
