"""Point ensembles, bipartite instances and the graph-rounding pipeline."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import EmptyEnsemble, GridTooFine, NotOnGrid
from .rng import RngSeed, as_seed

# Largest grid for which cell / grid round-trips exactly through a float64.
MAX_GRID = 1 << 53

# substream tags
_OFFLINE, _ONLINE, _POISSON, _EXTRA, _DROP = 1, 2, 3, 4, 5


class GenMode(str, Enum):
    UNIFORM_IID = "uniform_iid"
    POISSON_PROCESS = "poisson_process"
    ROUNDED_GRID = "rounded_grid"


class Topology(str, Enum):
    LINE = "line"
    CIRCLE = "circle"


def distance(x, y, topology: Topology | str = Topology.LINE):
    """Line distance, or arc distance on the unit-circumference circle."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if Topology(topology) is Topology.CIRCLE:
        d = np.minimum(d, 1.0 - d)
    return d


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointSet:
    """Sorted coordinates in [0, 1] plus how they were produced.

    ``arrival`` keeps the generation order for sets used as an online side.
    ``grid`` is ``N*k`` for rounded sets, whose coordinates are ``cell / grid``.
    """

    coords: np.ndarray
    gen_mode: GenMode
    n_nominal: int
    arrival: np.ndarray | None = None
    grid: int | None = None

    def __post_init__(self):
        coords = _frozen(self.coords)
        if coords.size and (coords[0] < 0.0 or coords[-1] > 1.0):
            raise ValueError("coordinates must lie in [0, 1]")
        if coords.size > 1 and np.any(np.diff(coords) < 0):
            raise ValueError("coordinates must be sorted")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "gen_mode", GenMode(self.gen_mode))
        if self.arrival is not None:
            object.__setattr__(self, "arrival", _frozen(self.arrival))
        if self.gen_mode is GenMode.ROUNDED_GRID:
            if not self.grid:
                raise ValueError("rounded point sets need a grid size")
            cells = self.cells()
            if cells.size > 1 and np.any(np.diff(cells) <= 0):
                raise ValueError("rounded coordinates must be pairwise distinct")

    def __len__(self) -> int:
        return int(self.coords.size)

    def cells(self) -> np.ndarray:
        """Integer grid indices of the coordinates (rounded sets only)."""
        if not self.grid:
            raise NotOnGrid("point set carries no grid")
        return to_cells(self.coords, self.grid)


def to_cells(coords, grid: int) -> np.ndarray:
    scaled = np.asarray(coords, dtype=float) * grid
    cells = np.rint(scaled)
    if np.any(np.abs(scaled - cells) > 1e-6):
        raise NotOnGrid(f"coordinate not on the 1/{grid} grid")
    return cells.astype(np.int64)


@dataclass(frozen=True)
class GeomInstance:
    """Offline side, online arrival sequence and compatibility radius ``c/N``.

    ``c = math.inf`` is the metric (unbounded) mode. ``k`` is the rounding grid
    factor, or 0 when the offline side is not rounded.
    """

    offline: PointSet
    online: np.ndarray
    c: float
    n: int
    topology: Topology = Topology.LINE
    k: int = 0

    def __post_init__(self):
        object.__setattr__(self, "online", _frozen(self.online))
        object.__setattr__(self, "topology", Topology(self.topology))
        object.__setattr__(self, "c", float(self.c))
        if self.c < 0:
            raise ValueError("c must be non-negative")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def radius(self) -> float:
        return self.c / self.n

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.c)


@dataclass(frozen=True)
class RoundingReport:
    n_input: int
    n_poisson: int
    added: int
    removed: int
    discarded: int
    glued_vertex_added: bool
    n_final: int


def gen_uniform(n: int, rng: RngSeed | int, substream: int = 0) -> PointSet:
    """``n`` i.i.d. uniform points; arrival order is kept in ``.arrival``."""
    if n < 1:
        raise EmptyEnsemble("need at least one point")
    raw = as_seed(rng).generator(substream).random(int(n))
    return PointSet(np.sort(raw), GenMode.UNIFORM_IID, int(n), arrival=raw)


def gen_ppp(intensity: float, rng: RngSeed | int, substream: int = 0) -> PointSet:
    """Homogeneous Poisson process on [0, 1) from Exp(intensity) renewals.

    Spacings are drawn by inverse CDF, ``-log(U) / intensity``, in blocks until
    the running sum passes 1.
    """
    if intensity <= 0:
        raise ValueError("intensity must be positive")
    gen = as_seed(rng).generator(substream)
    block = int(intensity + 6.0 * math.sqrt(intensity) + 16)
    pieces = []
    origin = 0.0
    while origin < 1.0:
        u = 1.0 - gen.random(block)  # in (0, 1]
        pos = origin + np.cumsum(-np.log(u) / intensity)
        pieces.append(pos)
        origin = pos[-1]
    pts = np.concatenate(pieces)
    pts = pts[pts < 1.0]
    return PointSet(pts, GenMode.POISSON_PROCESS, int(round(intensity)), arrival=pts)


def rounding_pipeline(
    x: PointSet,
    n: int,
    k: int,
    rng: RngSeed | int,
    *,
    poissonize: bool = True,
) -> tuple[PointSet, RoundingReport]:
    """Poissonize, round down to the ``1/(n k)`` grid, keep one point per cell, glue.

    The result lives on the circle and always contains the vertex at 0.
    """
    if x.gen_mode is not GenMode.UNIFORM_IID:
        raise ValueError("rounding expects a uniform i.i.d. ensemble")
    k = int(k)
    if k < 1:
        raise ValueError("grid factor k must be >= 1")
    grid = int(n) * k
    if grid > MAX_GRID:
        raise GridTooFine(f"n*k = {grid} exceeds {MAX_GRID}")
    seed = as_seed(rng)
    pts = np.asarray(x.coords)
    added = removed = 0
    n_poisson = len(pts)
    if poissonize:
        n_poisson = int(seed.generator(_POISSON).poisson(n))
        if n_poisson > len(pts):
            added = n_poisson - len(pts)
            pts = np.concatenate([pts, seed.generator(_EXTRA).random(added)])
        elif n_poisson < len(pts):
            removed = len(pts) - n_poisson
            keep = seed.generator(_DROP).choice(len(pts), size=n_poisson, replace=False)
            pts = pts[keep]
    cells = np.minimum(np.floor(pts * grid).astype(np.int64), grid - 1)
    occupied = np.unique(cells)
    discarded = len(cells) - len(occupied)
    glued = occupied.size == 0 or occupied[0] != 0
    if glued:
        occupied = np.concatenate([[0], occupied])
    out = PointSet(occupied / grid, GenMode.ROUNDED_GRID, int(n), grid=grid)
    report = RoundingReport(
        n_input=len(x),
        n_poisson=n_poisson,
        added=added,
        removed=removed,
        discarded=int(discarded),
        glued_vertex_added=bool(glued),
        n_final=len(out),
    )
    return out, report


def make_instance(
    n: int,
    c: float,
    rng: RngSeed | int,
    *,
    topology: Topology | str = Topology.LINE,
    k: int = 0,
    n_online: int | None = None,
    poissonize: bool = True,
) -> GeomInstance:
    """Random instance of Geom(c, N); with ``k > 0`` the offline side is rounded and glued."""
    seed = as_seed(rng)
    offline = gen_uniform(n, seed, _OFFLINE)
    online = gen_uniform(n if n_online is None else n_online, seed, _ONLINE).arrival
    if k:
        offline, _ = rounding_pipeline(offline, n, k, seed, poissonize=poissonize)
        topology = Topology.CIRCLE
    return GeomInstance(offline, online, c, n, Topology(topology), int(k))


def instance_from_coords(
    offline: Iterable[float],
    online: Iterable[float],
    c: float,
    n: int,
    topology: Topology | str = Topology.LINE,
) -> GeomInstance:
    """Instance from explicit coordinates; ``c/n`` is the radius."""
    off = np.sort(np.asarray(list(offline), dtype=float))
    pts = PointSet(off, GenMode.UNIFORM_IID, len(off), arrival=off)
    return GeomInstance(pts, np.asarray(list(online), dtype=float), c, n, Topology(topology))


# -- plain-text serialization ---------------------------------------------------

HEADER = "geomatch-instance v1"


def dumps_instance(inst: GeomInstance) -> str:
    c = "inf" if inst.unbounded else repr(inst.c)
    lines = [f"{HEADER} N={inst.n} c={c} k={inst.k} topology={inst.topology.value}"]
    lines += [f"{v:.17g}" for v in inst.offline.coords]
    lines.append("")
    lines += [f"{v:.17g}" for v in inst.online]
    return "\n".join(lines) + "\n"


def loads_instance(text: str) -> GeomInstance:
    head, _, body = text.partition("\n")
    if not head.startswith(HEADER):
        raise ValueError("not a geomatch-instance v1 file")
    fields = dict(tok.split("=", 1) for tok in head[len(HEADER):].split())
    n = int(fields["N"])
    c = math.inf if fields["c"] == "inf" else float(fields["c"])
    k = int(fields["k"])
    topology = Topology(fields["topology"])
    off_block, _, on_block = body.partition("\n\n")
    off = np.array([float(s) for s in off_block.split()], dtype=float)
    on = np.array([float(s) for s in on_block.split()], dtype=float)
    if k:
        offline = PointSet(off, GenMode.ROUNDED_GRID, n, grid=n * k)
    else:
        offline = PointSet(off, GenMode.UNIFORM_IID, n, arrival=off)
    return GeomInstance(offline, on, c, n, topology, k)


def save_instance(inst: GeomInstance, path: str | Path | IO[str]) -> None:
    if hasattr(path, "write"):
        path.write(dumps_instance(inst))
    else:
        Path(path).write_text(dumps_instance(inst))


def load_instance(path: str | Path | IO[str]) -> GeomInstance:
    text = path.read() if hasattr(path, "read") else Path(path).read_text()
    return loads_instance(text)
