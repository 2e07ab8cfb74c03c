"""Offline maximum matching on 1D geometric graphs.

``small_first`` is the optimal two-pointer sweep; ``brute_force_max_matching``
is an independent augmenting-path oracle for it. ``run_generative_walk``
simulates the frontier-difference random walk that generates the graph and
its maximum matching at the same time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InstanceTooLarge
from .instance import GeomInstance, Topology, distance
from .rng import RngSeed, as_seed

BRUTE_FORCE_CAP = 2000


@dataclass
class TracePoint:
    t_arrivals: int
    kappa: int
    rho: float
    free_count: int


@dataclass
class MatchingResult:
    """Edges are ``(offline index, online index)``.

    Offline indices refer to ``inst.offline.coords`` (sorted); online indices
    are arrival positions. ``partner[j]`` is the offline partner of arrival
    ``j`` or -1, and ``lengths[j]`` the corresponding edge length (0 when
    unmatched). ``trace`` holds checkpoint rows for online runs.
    """

    edges: np.ndarray
    kappa: int
    rho: float
    partner: np.ndarray | None = None
    lengths: np.ndarray | None = None
    trace: list[TracePoint] = field(default_factory=list)


def small_first(inst: GeomInstance) -> MatchingResult:
    """Maximum matching of a line instance by the SMALL-FIRST sweep.

    Both sides are scanned in increasing coordinate. A compatible front pair
    (distance strictly below ``c/N``) is matched; otherwise the point with the
    smaller coordinate can never be matched later and is skipped.
    """
    if inst.topology is not Topology.LINE:
        raise ValueError("small_first is defined on the line")
    if inst.unbounded:
        raise ValueError("small_first needs a finite c")
    r = inst.radius
    xs = inst.offline.coords.tolist()
    order = np.argsort(inst.online, kind="stable")
    ys = inst.online[order].tolist()
    edges = []
    rho = 0.0
    i = j = 0
    nx, ny = len(xs), len(ys)
    while i < nx and j < ny:
        d = xs[i] - ys[j]
        if abs(d) < r:
            edges.append((i, int(order[j])))
            rho += abs(d)
            i += 1
            j += 1
        elif d < 0:
            i += 1
        else:
            j += 1
    arr = np.array(edges, dtype=np.int64).reshape(-1, 2)
    return MatchingResult(arr, len(edges), rho)


def compatibility_lists(inst: GeomInstance) -> list[list[int]]:
    """For every online point, the offline indices within distance ``< c/N``."""
    xs = inst.offline.coords
    r = inst.radius
    adj = []
    for y in inst.online:
        if inst.topology is Topology.LINE and not inst.unbounded:
            lo = np.searchsorted(xs, y - r, side="right")
            hi = np.searchsorted(xs, y + r, side="left")
            cand = np.arange(lo, hi)
            cand = cand[np.abs(xs[cand] - y) < r]
        else:
            cand = np.flatnonzero(distance(xs, y, inst.topology) < r)
        adj.append(cand.tolist())
    return adj


def brute_force_max_matching(inst: GeomInstance) -> int:
    """Maximum-cardinality matching size via Kuhn's augmenting paths."""
    if len(inst.offline) > BRUTE_FORCE_CAP or len(inst.online) > BRUTE_FORCE_CAP:
        raise InstanceTooLarge(f"at most {BRUTE_FORCE_CAP} points per side")
    adj = compatibility_lists(inst)
    match_x = [-1] * len(inst.offline)
    size = 0
    for root in range(len(adj)):
        if not adj[root]:
            continue
        seen = [False] * len(inst.offline)
        # iterative DFS; each frame is (online vertex, next neighbour position)
        stack = [[root, 0]]
        via: list[int] = []  # offline vertex chosen at each depth
        found = False
        while stack:
            frame = stack[-1]
            y, pos = frame
            nbrs = adj[y]
            if pos == len(nbrs):
                stack.pop()
                if via:
                    via.pop()
                continue
            frame[1] += 1
            x = nbrs[pos]
            if seen[x]:
                continue
            seen[x] = True
            via.append(x)
            if match_x[x] == -1:
                found = True
                break
            stack.append([match_x[x], 0])
        if found:
            for (y, _), x in zip(stack, via):
                match_x[x] = y
            size += 1
    return size


def theoretical_offline_fraction(c: float) -> float:
    """Limit of the normalised maximum matching size, ``c / (c + 1/2)``."""
    if c < 0:
        raise ValueError("c must be non-negative")
    if math.isinf(c):
        return 1.0
    return c / (c + 0.5)


@dataclass
class WalkSummary:
    tau: int
    p_hat: float
    matched_fraction: float
    matched: int = 0
    psi_samples: np.ndarray | None = None


def run_generative_walk(
    n: float,
    c: float,
    rng: RngSeed | int,
    *,
    sample_every: int = 0,
) -> WalkSummary:
    """Simulate SMALL-FIRST-GENERATIVE and summarise its potential walk.

    Positions are kept in units of ``1/N``: spacings are Exp(1), the matching
    window is ``|psi| < c`` and the sweep stops once either frontier reaches
    ``N``. This is the same chain as drawing Exp(N) spacings and comparing
    against ``c/N``, without cancellation at the ``1/N`` scale.
    """
    if n < 10:
        raise ValueError("n must be at least 10")
    if c < 0:
        raise ValueError("c must be non-negative")
    gen = as_seed(rng).generator()
    block = int(n) + 64

    def spacings():
        while True:
            for s in (-np.log1p(-gen.random(block))).tolist():
                yield s

    du = spacings()
    dv = spacings()
    u, v = next(du), next(dv)
    end = float(n)
    tau = matched = 0
    samples = []
    while u < end and v < end:
        psi = u - v
        if sample_every and tau % sample_every == 0:
            samples.append(psi)
        tau += 1
        if -c < psi < c:
            matched += 1
            u += next(du)
            v += next(dv)
        elif psi > 0:
            v += next(dv)
        else:
            u += next(du)
    p_hat = matched / tau if tau else 0.0
    frac = 2.0 * p_hat / (p_hat + 1.0)
    psi_samples = np.array(samples) if sample_every else None
    return WalkSummary(tau, p_hat, frac, matched, psi_samples)


def stationary_density(x, c: float):
    """Stationary density of the potential walk: flat on ``[-c, c]``, exponential tails."""
    if c <= 0:
        raise ValueError("c must be positive")
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.where(ax <= c, 1.0, np.exp(-(ax - c))) / (2.0 * c + 2.0)
    return out if out.ndim else float(out)


def stationary_window_mass(c: float) -> float:
    """Stationary probability of the matching window, ``2c / (2c + 2)``."""
    return 2.0 * c / (2.0 * c + 2.0)
