"""Monte Carlo sweeps, fluid-vs-simulation comparisons and robustness probes.

Replicates are independent jobs keyed by their index. Each job derives its
randomness from ``RngSeed(seed, replicate)``, so results do not depend on
which worker ran it. Aggregation always folds in replicate order.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError
from .fluid import (
    DEFAULT_DT,
    Mode,
    init_fluid,
    matched_fraction,
    metric_total_length,
    solve,
)
from .instance import (
    GenMode,
    GeomInstance,
    PointSet,
    Topology,
    gen_uniform,
    make_instance,
    rounding_pipeline,
)
from .offline import TracePoint, run_generative_walk, small_first, theoretical_offline_fraction
from .online import (
    ClosestProcess,
    closest_cardinality,
    gap_histogram,
    gap_pair_counts,
    repartition_expectation,
)
from .rng import RngSeed

MODES = ("offline", "cardinality", "metric")


# -- parallel map -----------------------------------------------------------------


def replicate_map(fn: Callable, args: Sequence, workers: int = 1) -> list:
    """``[fn(*a) for a in args]``, optionally across processes, in input order."""
    if workers <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        cols = list(zip(*args))
        return list(pool.map(fn, *cols, chunksize=max(1, len(args) // (4 * workers))))


def mean_std(values) -> tuple[float, float]:
    """Sample mean and unbiased standard deviation (0 for a single value)."""
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        raise ValueError("no values to aggregate")
    std = float(a.std(ddof=1)) if a.size > 1 else 0.0
    return float(a.mean()), std


# -- configuration ----------------------------------------------------------------


@dataclass
class ExperimentConfig:
    mode: str = "cardinality"
    n: int = 10_000
    c: float = 1.0
    k: int = 16
    eps: float = 0.1
    reps: int = 8
    seed: int = 0
    dt: float = DEFAULT_DT
    t_grid: tuple[float, ...] = ()
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
        if self.reps < 1:
            raise ConfigError("reps", "must be >= 1")
        if self.n < 10:
            raise ConfigError("n", "must be >= 10")
        if self.dt <= 0:
            raise ConfigError("dt", "must be positive")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        if self.mode == "metric":
            self.c = math.inf
            if not self.eps > 0:
                raise ConfigError("eps", "must be positive in metric mode")
        elif not (self.c > 0 and math.isfinite(self.c)):
            raise ConfigError("c", "must be positive and finite outside metric mode")
        if self.mode != "offline" and self.k < 1:
            raise ConfigError("k", "fluid comparisons need a grid factor k >= 1")
        if not self.t_grid:
            if self.mode == "metric":
                top = 1.0 - self.eps
                self.t_grid = tuple(t for t in np.round(np.arange(1, 10) / 10, 10) if t <= top + 1e-12)
            else:
                self.t_grid = tuple(float(t) for t in np.round(np.arange(1, 11) / 10, 10))
        grid = tuple(sorted(float(t) for t in self.t_grid))
        if any(t < 0 or t > 1 for t in grid):
            raise ConfigError("t_grid", "checkpoints must lie in [0, 1]")
        if self.mode == "metric" and grid[-1] > 1.0 - self.eps + 1e-12:
            raise ConfigError("t_grid", "metric checkpoints must not exceed 1 - eps")
        self.t_grid = grid

    def to_dict(self) -> dict:
        d = asdict(self)
        d["c"] = "inf" if math.isinf(self.c) else self.c
        d["t_grid"] = list(self.t_grid)
        return d


@dataclass
class ComparisonRow:
    t: float
    c: float
    empirical_mean: float
    empirical_std: float
    fluid_value: float
    theory_value: float | None
    abs_gap: float = field(init=False)

    def __post_init__(self):
        for name in ("t", "c", "empirical_mean", "empirical_std", "fluid_value"):
            setattr(self, name, float(getattr(self, name)))
        if self.theory_value is not None:
            self.theory_value = float(self.theory_value)
        self.abs_gap = abs(self.empirical_mean - self.fluid_value)


COMPARISON_COLUMNS = ["t", "c", "empirical_mean", "empirical_std", "fluid_value", "theory_value", "abs_gap"]


# -- replicate jobs ---------------------------------------------------------------


def _stops(t_grid, n: int) -> list[int]:
    return [int(math.floor(t * n + 1e-9)) for t in t_grid]


def offline_replicate(n: int, c: float, seed: int, r: int) -> int:
    inst = make_instance(n, c, RngSeed(seed).replicate(r), topology=Topology.LINE)
    return small_first(inst).kappa


def metric_instance(n: int, eps: float, rng: RngSeed) -> GeomInstance:
    """Unrounded circle instance with ``floor((1-eps) n)`` arrivals."""
    n_online = int(math.floor((1.0 - eps) * n + 1e-9))
    return make_instance(n, math.inf, rng, topology=Topology.CIRCLE, n_online=n_online)


def _trajectory(proc: ClosestProcess, stops: list[int], value: Callable) -> list[float]:
    out = []
    for s in stops:
        proc.run(s)
        out.append(value(proc))
    return out


def sweep_replicate(cfg: ExperimentConfig, r: int) -> list[float]:
    """Per-checkpoint simulated value for one replicate of ``run_sweep``."""
    rng = RngSeed(cfg.seed).replicate(r)
    if cfg.mode == "metric":
        proc = ClosestProcess(metric_instance(cfg.n, cfg.eps, rng))
        return _trajectory(proc, _stops(cfg.t_grid, cfg.n), lambda p: p.rho)
    inst = make_instance(cfg.n, cfg.c, rng, k=cfg.k)
    proc = ClosestProcess(inst)
    return _trajectory(proc, _stops(cfg.t_grid, cfg.n), lambda p: p.kappa / cfg.n)


def fluid_curve(cfg: ExperimentConfig) -> list[float]:
    """Fluid prediction at each checkpoint: matched fraction or cumulative length."""
    if cfg.mode == "metric":
        states = solve(init_fluid(cfg.k, math.inf, mode=Mode.METRIC), cfg.t_grid, cfg.dt)
        return [s.cum_length for s in states]
    states = solve(init_fluid(cfg.k, cfg.c, mode=Mode.CARDINALITY), cfg.t_grid, cfg.dt)
    return [matched_fraction(s) for s in states]


def run_sweep(cfg: ExperimentConfig) -> list[ComparisonRow]:
    """Replicated simulation aggregated at each checkpoint, beside fluid and closed form."""
    cfg.validate()
    if cfg.mode == "offline":
        kappas = replicate_map(
            offline_replicate, [(cfg.n, cfg.c, cfg.seed, r) for r in range(cfg.reps)], cfg.workers
        )
        m, s = mean_std(np.asarray(kappas) / cfg.n)
        theory = theoretical_offline_fraction(cfg.c)
        return [ComparisonRow(1.0, cfg.c, m, s, theory, theory)]
    per_rep = replicate_map(sweep_replicate, [(cfg, r) for r in range(cfg.reps)], cfg.workers)
    fluid = fluid_curve(cfg)
    rows = []
    for j, t in enumerate(cfg.t_grid):
        m, s = mean_std([vals[j] for vals in per_rep])
        theory = metric_total_length(t) if cfg.mode == "metric" else None
        rows.append(ComparisonRow(t, cfg.c, m, s, fluid[j], theory))
    return rows


def offline_sweep(n: int, c: float, reps: int, seed: int, workers: int = 1) -> list[int]:
    """Maximum matching size of ``reps`` independent line instances."""
    args = [(n, c, seed, r) for r in range(reps)]
    return replicate_map(offline_replicate, args, workers)


def online_replicate(
    n: int, c: float, mode: str, eps: float, k: int, topology: str, trace_every: int, seed: int, r: int
) -> list[TracePoint]:
    rng = RngSeed(seed).replicate(r)
    if mode == "metric":
        n_online = int(math.floor((1.0 - eps) * n + 1e-9))
        inst = make_instance(n, math.inf, rng, topology=topology, k=k, n_online=n_online)
    else:
        inst = make_instance(n, c, rng, topology=topology, k=k)
    proc = ClosestProcess(inst)
    every = trace_every if trace_every > 0 else len(inst.online)
    trace = [proc.checkpoint()]
    while not proc.done:
        proc.run(proc.t + every)
        trace.append(proc.checkpoint())
    return trace


def online_traces(
    n: int,
    c: float,
    mode: str,
    *,
    eps: float = 0.1,
    k: int = 0,
    topology: str = "circle",
    trace_every: int = 0,
    reps: int = 1,
    seed: int = 0,
    workers: int = 1,
) -> list[list[TracePoint]]:
    args = [(n, c, mode, eps, k, topology, trace_every, seed, r) for r in range(reps)]
    return replicate_map(online_replicate, args, workers)


# -- robustness probes ------------------------------------------------------------


@dataclass
class RoundingProbe:
    n: int
    k: int
    deltas: list[int]
    bound: float

    @property
    def within_fraction(self) -> float:
        return float(np.mean([d <= self.bound for d in self.deltas]))

    @property
    def mean_delta(self) -> float:
        return float(np.mean(self.deltas))


def rounding_bound(n: int, k: int) -> float:
    return 25.0 * n / k + 10.0 * math.sqrt(n * math.log(n))


def gluing_bound(n: int) -> float:
    return 2.0 * math.sqrt(n) + 1.0


def rounding_replicate(n: int, c: float, k: int, poissonize: bool, seed: int, r: int) -> int:
    """``|kappa - kappa_rounded|`` on shared offline draws and a shared arrival sequence."""
    rng = RngSeed(seed).replicate(r)
    offline = gen_uniform(n, rng, 1)
    online = gen_uniform(n, rng, 2).arrival
    original = GeomInstance(offline, online, c, n, Topology.LINE)
    rounded, _ = rounding_pipeline(offline, n, k, rng, poissonize=poissonize)
    glued = GeomInstance(rounded, online, c, n, Topology.CIRCLE, k)
    return abs(closest_cardinality(original).kappa - closest_cardinality(glued).kappa)


def rounding_error_probe(
    n: int, c: float, k: int, reps: int, seed: int, *, workers: int = 1
) -> RoundingProbe:
    """Distribution of the CLOSEST size change caused by the rounding pipeline."""
    args = [(n, c, k, True, seed, r) for r in range(reps)]
    return RoundingProbe(n, k, replicate_map(rounding_replicate, args, workers), rounding_bound(n, k))


def gluing_probe(n: int, c: float, reps: int, seed: int, *, workers: int = 1) -> RoundingProbe:
    """Rounding on a ``1/n^2`` grid without Poissonization: only the gluing remains."""
    args = [(n, c, n, False, seed, r) for r in range(reps)]
    return RoundingProbe(n, n, replicate_map(rounding_replicate, args, workers), gluing_bound(n))


def add_vertex_replicate(n: int, c: float, seed: int, r: int) -> int:
    """Change in CLOSEST size after inserting one uniform offline vertex."""
    rng = RngSeed(seed).replicate(r)
    offline = gen_uniform(n, rng, 1)
    online = gen_uniform(n, rng, 2).arrival
    extra = rng.generator(7).random()
    coords = np.sort(np.append(offline.coords, extra))
    plus = PointSet(coords, GenMode.UNIFORM_IID, n + 1, arrival=coords)
    k0 = closest_cardinality(GeomInstance(offline, online, c, n, Topology.LINE)).kappa
    k1 = closest_cardinality(GeomInstance(plus, online, c, n, Topology.LINE)).kappa
    return k1 - k0


def add_vertex_probe(n: int, c: float, trials: int, seed: int, *, workers: int = 1) -> list[int]:
    return replicate_map(add_vertex_replicate, [(n, c, seed, r) for r in range(trials)], workers)


@dataclass
class RepartitionCell:
    l_minus: int
    l_plus: int
    mean_count: float
    mean_expected: float
    z: float


def repartition_replicate(n: int, c: float, k: int, t_frac: float, seed: int, r: int):
    """Observed pair counts and their uniform-order expectation after ``t_frac * n`` arrivals."""
    inst = make_instance(n, c, RngSeed(seed).replicate(r), k=k)
    proc = ClosestProcess(inst)
    proc.run(int(math.floor(t_frac * n + 1e-9)))
    hist = gap_histogram(proc.free, n, k)
    pairs = gap_pair_counts(proc.free, n, k)
    keys = set(pairs.counts)
    for lm in hist.counts:
        for lp in hist.counts:
            keys.add((lm, lp))
    return {key: (pairs[key], repartition_expectation(hist, *key)) for key in keys}


def gap_repartition_probe(
    n: int = 2000,
    k: int = 8,
    reps: int = 200,
    seed: int = 0,
    *,
    c: float = 1.0,
    t_frac: float = 0.3,
    top: int = 20,
    workers: int = 1,
) -> list[RepartitionCell]:
    """Most-populated ``(l_minus, l_plus)`` cells with the standardised mean deviation.

    ``z`` is the replicate mean of ``M - E`` over its standard error.
    """
    per_rep = replicate_map(
        repartition_replicate, [(n, c, k, t_frac, seed, r) for r in range(reps)], workers
    )
    totals: dict[tuple[int, int], float] = {}
    for rep in per_rep:
        for key, (m, _) in rep.items():
            totals[key] = totals.get(key, 0.0) + m
    ranked = sorted(totals, key=lambda key: (-totals[key], key))[:top]
    cells = []
    for key in ranked:
        obs = np.array([rep.get(key, (0, 0.0))[0] for rep in per_rep], dtype=float)
        exp = np.array([rep.get(key, (0, 0.0))[1] for rep in per_rep], dtype=float)
        d_mean, d_std = mean_std(obs - exp)
        se = d_std / math.sqrt(len(per_rep))
        z = d_mean / se if se > 0 else (0.0 if d_mean == 0 else math.inf)
        cells.append(RepartitionCell(key[0], key[1], float(obs.mean()), float(exp.mean()), z))
    return cells


def walk_replicate(n: int, c: float, seed: int, r: int):
    w = run_generative_walk(n, c, RngSeed(seed).replicate(r))
    return w.p_hat, w.matched_fraction


def walk_runs(n: int, c: float, reps: int, seed: int, *, workers: int = 1) -> list[tuple[float, float]]:
    """``(p_hat, matched_fraction)`` of independent generative walks."""
    return replicate_map(walk_replicate, [(n, c, seed, r) for r in range(reps)], workers)


# -- output -----------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[Sequence], meta: dict) -> Path:
    """Write ``rows`` and a ``<path>.meta.json`` sidecar describing how they were made."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    sidecar = path.with_name(path.name + ".meta.json")
    record = {"tool": "geomatch", "version": __version__, "columns": list(columns), **meta}
    sidecar.write_text(json.dumps(record, sort_keys=True, indent=2) + "\n")
    return sidecar


def comparison_rows(rows: Sequence[ComparisonRow]) -> list[list]:
    return [[getattr(r, col) for col in COMPARISON_COLUMNS] for r in rows]
