"""The CLOSEST online algorithm and the gap statistics of its free set."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import FreeSetExhausted
from .freeset import FreeSet
from .instance import GeomInstance, Topology, to_cells
from .offline import MatchingResult, TracePoint


@dataclass
class GapHistogram:
    """Counts ``F(l)`` of gaps of ``l`` grid cells between consecutive free vertices."""

    k: int
    n: int
    counts: dict[int, int] = field(default_factory=dict)
    free_count: int = 0

    @property
    def grid(self) -> int:
        return self.n * self.k

    def total_cells(self) -> int:
        return sum(l * f for l, f in self.counts.items())

    def as_array(self, l_max: int | None = None) -> np.ndarray:
        """Dense ``F`` indexed by gap length (index 0 unused)."""
        top = max(self.counts, default=0) if l_max is None else l_max
        out = np.zeros(top + 1)
        for l, f in self.counts.items():
            if l <= top:
                out[l] = f
        return out

    def _add(self, l: int, delta: int) -> None:
        v = self.counts.get(l, 0) + delta
        if v:
            self.counts[l] = v
        else:
            del self.counts[l]

    def merge(self, l_minus: int, l_plus: int) -> None:
        """Remove a free vertex sitting between gaps ``l_minus`` and ``l_plus``."""
        self._add(l_minus, -1)
        if self.free_count > 1:
            self._add(l_plus, -1)
            self._add(l_minus + l_plus, +1)
        self.free_count -= 1


@dataclass
class GapPairCounts:
    """``M(l_minus, l_plus)``: free vertices preceded by gap ``l_minus`` and followed by ``l_plus``."""

    counts: dict[tuple[int, int], int]

    def __getitem__(self, key: tuple[int, int]) -> int:
        return self.counts.get(key, 0)

    def marginal(self) -> dict[int, int]:
        out: Counter[int] = Counter()
        for (lm, _), m in self.counts.items():
            out[lm] += m
        return dict(out)


def _free_cells(free: FreeSet, n: int, k: int) -> tuple[np.ndarray, int]:
    if free.topology is not Topology.CIRCLE:
        raise ValueError("gap statistics are defined on the circle only")
    grid = n * k
    return to_cells(free.free_coords(), grid), grid


def _gaps(cells: np.ndarray, grid: int) -> np.ndarray:
    """Gap following each free vertex, wrapping around the circle."""
    if cells.size == 1:
        return np.array([grid], dtype=np.int64)
    return (np.roll(cells, -1) - cells) % grid


def gap_histogram(free: FreeSet, n: int, k: int) -> GapHistogram:
    cells, grid = _free_cells(free, n, k)
    hist = GapHistogram(k, n, {}, int(cells.size))
    if cells.size:
        ls, fs = np.unique(_gaps(cells, grid), return_counts=True)
        hist.counts = {int(l): int(f) for l, f in zip(ls, fs)}
    return hist


def gap_pair_counts(free: FreeSet, n: int, k: int) -> GapPairCounts:
    cells, grid = _free_cells(free, n, k)
    if cells.size == 0:
        return GapPairCounts({})
    after = _gaps(cells, grid)
    before = np.roll(after, 1)
    return GapPairCounts(dict(Counter(zip(before.tolist(), after.tolist()))))


def repartition_expectation(hist: GapHistogram, l_minus: int, l_plus: int) -> float:
    """Expected ``M(l_minus, l_plus)`` if gaps were in uniformly random cyclic order."""
    m = hist.free_count
    if m < 2:
        return 0.0
    fm = hist.counts.get(l_minus, 0)
    fp = hist.counts.get(l_plus, 0) - (1 if l_minus == l_plus else 0)
    return fm * fp / (m - 1)


class ClosestProcess:
    """Step-by-step CLOSEST run on one instance.

    In cardinality mode an arrival is matched only when its nearest free vertex
    is closer than ``c/N``; in metric mode (``c = inf``) every arrival is
    matched. With ``track_gaps`` the gap histogram is updated incrementally,
    which needs a rounded offline side on the circle.
    """

    def __init__(self, inst: GeomInstance, *, track_gaps: bool = False):
        self.inst = inst
        self.metric = inst.unbounded
        self.free = FreeSet(inst.offline.coords, inst.topology)
        self._pos = np.searchsorted(inst.offline.coords, inst.online).tolist()
        self._ys = inst.online.tolist()
        self._r = inst.radius
        self.t = 0
        self.kappa = 0
        self.rho = 0.0
        n_on = len(self._ys)
        self.partner = np.full(n_on, -1, dtype=np.int64)
        self.lengths = np.zeros(n_on)
        self.hist: GapHistogram | None = None
        if track_gaps:
            k = inst.k
            if not k or inst.topology is not Topology.CIRCLE:
                raise ValueError("gap tracking needs a rounded instance on the circle")
            self._cells = inst.offline.cells().tolist()
            self.hist = gap_histogram(self.free, inst.n, k)

    @property
    def done(self) -> bool:
        return self.t >= len(self._ys)

    def step(self) -> tuple[int, float]:
        """Process the next arrival; returns (offline partner or -1, edge length)."""
        t = self.t
        i, d = self.free.nearest(self._ys[t], self._pos[t])
        if i < 0 and self.metric:
            raise FreeSetExhausted(f"no free offline vertex at arrival {t}")
        self.t += 1
        if i < 0 or not (self.metric or d < self._r):
            return -1, 0.0
        if self.hist is not None:
            self._merge_gaps(i)
        self.free.remove(i)
        self.kappa += 1
        self.rho += d
        self.partner[t] = i
        self.lengths[t] = d
        return i, d

    def _merge_gaps(self, i: int) -> None:
        grid = self.hist.grid
        cells = self._cells
        p = self.free.cyclic_predecessor(i)
        s = self.free.cyclic_successor(i)
        if p == i:
            self.hist.merge(grid, grid)
            return
        self.hist.merge((cells[i] - cells[p]) % grid, (cells[s] - cells[i]) % grid)

    def run(self, until: int | None = None) -> None:
        stop = len(self._ys) if until is None else min(until, len(self._ys))
        while self.t < stop:
            self.step()

    def checkpoint(self) -> TracePoint:
        return TracePoint(self.t, self.kappa, self.rho, len(self.free))

    def result(self, trace: list[TracePoint] | None = None) -> MatchingResult:
        matched = np.flatnonzero(self.partner[: self.t] >= 0)
        edges = np.column_stack([self.partner[matched], matched]).astype(np.int64)
        return MatchingResult(
            edges.reshape(-1, 2),
            self.kappa,
            self.rho,
            partner=self.partner[: self.t].copy(),
            lengths=self.lengths[: self.t].copy(),
            trace=trace or [],
        )


def _run_traced(proc: ClosestProcess, stop: int, trace_every: int) -> MatchingResult:
    trace = []
    if trace_every:
        trace.append(proc.checkpoint())
        while proc.t < stop:
            proc.run(min(stop, proc.t + trace_every))
            trace.append(proc.checkpoint())
    else:
        proc.run(stop)
    return proc.result(trace)


def closest_cardinality(inst: GeomInstance, trace_every: int = 0) -> MatchingResult:
    """CLOSEST with the ``c/N`` compatibility threshold over the whole arrival sequence."""
    if inst.unbounded:
        raise ValueError("cardinality mode needs a finite c")
    proc = ClosestProcess(inst)
    return _run_traced(proc, len(inst.online), trace_every)


def closest_metric(
    inst: GeomInstance,
    t_max: float | None = None,
    trace_every: int = 0,
) -> MatchingResult:
    """CLOSEST without threshold: every arrival is matched to its nearest free vertex.

    Runs the first ``floor(t_max * N)`` arrivals (all of them when ``t_max`` is
    None). ``rho`` is the total, unnormalised matching length.
    """
    if not inst.unbounded:
        raise ValueError("metric mode needs c = inf")
    stop = len(inst.online)
    if t_max is not None:
        if not 0.0 <= t_max <= 1.0:
            raise ValueError("t_max must lie in [0, 1]")
        stop = min(stop, int(math.floor(t_max * inst.n + 1e-9)))
    proc = ClosestProcess(inst)
    return _run_traced(proc, stop, trace_every)
