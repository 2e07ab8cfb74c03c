"""Fluid limits of CLOSEST: the gap-size ODE systems and their functionals.

``f[l]`` is the rescaled number of gaps of ``l`` grid cells (cell width
``1/(N k)``) between consecutive free offline vertices, per unit ``N``.
Index 0 is kept and is identically zero, so ``f[l]`` reads as in the
formulas. Under CLOSEST a free vertex is consumed at a rate set by its two
neighbouring gaps and those gaps merge, which gives a coagulation-type
system with a convolution gain term.

Cardinality mode: a gap of ``x = l/k`` (in units of ``1/N``) is hit by an
arrival that ends up matched with rate ``min(x, 2c)``::

    df/dt = -min(x,2c) f - [sum min(x',2c) f / sum f] f
            + [1 / sum f] * sum_{l'} min(l'/k, 2c) f[l'] f[l-l']

Metric mode (every arrival matched, ``N_t = (1-t) N``)::

    dg/dt = -(x + 1/(1-t)) g + 1/(1-t) * sum_{l'} (l'/k) g[l'] g[l-l']
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
import scipy.fft

from .errors import DegenerateState, IntegrationDiverged, SingularTime
from .offline import theoretical_offline_fraction

DEFAULT_DT = 1e-3
DIRECT_CONV_MAX = 256
DEGENERATE_MASS = 1e-12
SINGULAR_MARGIN = 1e-9
RK4_STABLE = 2.5  # keep h * (fastest linear rate) inside the RK4 stability region


class Mode(str, Enum):
    CARDINALITY = "cardinality"
    METRIC = "metric"


class Law(str, Enum):
    """Initial gap law ``f(l, 0)``.

    ``rounded``: ``k p_k^2 exp(-(l-1)/k)``, the expected gap histogram of the
    rounded, glued instance (``p_k = 1 - exp(-1/k)``); unit total length,
    free mass ``k p_k``.
    ``shifted``: ``k p_k^2 exp(-l/k)``, the same law shifted by one cell.
    ``unit``: ``(1/k) (1 - 1/k)^(l-1)``; unit free mass and unit length, the
    normalisation the metric system assumes.
    """

    ROUNDED = "rounded"
    SHIFTED = "shifted"
    UNIT = "unit"


def p_k(k: int) -> float:
    """Occupancy probability of one grid cell after Poissonization and rounding."""
    return -math.expm1(-1.0 / k)


def default_x_max(mode: Mode | str, c: float) -> float:
    """Truncation point in units of ``1/N``; larger c and metric runs have heavier tails."""
    if Mode(mode) is Mode.METRIC:
        return 2000.0
    if math.isinf(c):
        return 2500.0
    return min(2500.0, 100.0 + 100.0 * c)


@dataclass(frozen=True)
class FluidState:
    k: int
    c: float
    mode: Mode
    f: np.ndarray
    law: Law
    initial_mass: float
    initial_length: float
    t: float = 0.0
    tail_mass: float = 0.0
    clamp_total: float = 0.0
    cum_length: float = 0.0
    max_length_drift: float = 0.0
    max_mass_dev: float = 0.0
    exhausted_at: float | None = None

    @property
    def l_max(self) -> int:
        return len(self.f) - 1

    @property
    def x(self) -> np.ndarray:
        return np.arange(len(self.f)) / self.k

    def mass(self) -> float:
        return float(self.f.sum())

    def length(self) -> float:
        return float(self.x @ self.f)

    def second_moment(self) -> float:
        x = self.x
        return float((x * x) @ self.f) / 4.0


def init_fluid(
    k: int,
    c: float = 1.0,
    l_max: int | None = None,
    *,
    mode: Mode | str | None = None,
    law: Law | str | None = None,
) -> FluidState:
    """Initial gap law on ``l = 0..l_max`` (``f[0] = 0``).

    ``mode`` defaults to metric for ``c = inf`` and cardinality otherwise;
    ``law`` defaults to ``rounded`` (cardinality) or ``unit`` (metric).
    """
    k = int(k)
    if k < 1:
        raise ValueError("k must be >= 1")
    mode = Mode(mode) if mode is not None else (Mode.METRIC if math.isinf(c) else Mode.CARDINALITY)
    if mode is Mode.METRIC:
        c = math.inf
    law = Law(law) if law is not None else (Law.UNIT if mode is Mode.METRIC else Law.ROUNDED)
    if l_max is None:
        l_max = int(math.ceil(k * default_x_max(mode, c)))
    if l_max < 10 * k:
        raise ValueError("l_max must be at least 10 k")
    ell = np.arange(l_max + 1, dtype=float)
    if law is Law.UNIT:
        f = np.zeros_like(ell)
        f[1:] = (1.0 / k) * (1.0 - 1.0 / k) ** (ell[1:] - 1.0)
    else:
        p = p_k(k)
        shift = 1.0 if law is Law.ROUNDED else 0.0
        f = k * p * p * np.exp(-(ell - shift) / k)
    f[0] = 0.0
    state = FluidState(k, float(c), mode, f, law, 0.0, 0.0)
    return replace(state, initial_mass=state.mass(), initial_length=state.length())


# -- convolution -----------------------------------------------------------------


def _conv(a: np.ndarray, b: np.ndarray, method: str = "auto") -> tuple[np.ndarray, float]:
    """Leading ``len(a)`` terms of the linear convolution and the sum of the rest."""
    n = len(a)
    if method == "auto":
        method = "direct" if n <= DIRECT_CONV_MAX else "fft"
    if method == "direct":
        full = np.convolve(a, b)
    elif method == "fft":
        size = scipy.fft.next_fast_len(2 * n - 1, real=True)
        full = scipy.fft.irfft(scipy.fft.rfft(a, size) * scipy.fft.rfft(b, size), size)[: 2 * n - 1]
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    return full[:n], float(full[n:].sum())


def convolve(a, b, method: str = "auto") -> np.ndarray:
    """``out[l] = sum_{l'=0}^{l} a[l'] b[l-l']`` for ``l < len(a)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return _conv(a, b, method)[0]


# -- right-hand sides ------------------------------------------------------------


def _rates(k: int, c: float, n: int) -> np.ndarray:
    x = np.arange(n) / k
    return x if math.isinf(c) else np.minimum(x, 2.0 * c)


def _drift_cardinality(f, rates, method="auto"):
    s = f.sum()
    if s <= DEGENERATE_MASS:
        raise DegenerateState(f"free mass {s:.3g} is too small")
    mf = rates * f
    drain = mf.sum()
    gain, over = _conv(mf, f, method)
    return -mf - (drain / s) * f + gain / s, over / s


def _drift_metric(f, t, x, method="auto"):
    if t >= 1.0 - SINGULAR_MARGIN:
        raise SingularTime(f"metric system is singular at t={t}")
    inv = 1.0 / (1.0 - t)
    gain, over = _conv(x * f, f, method)
    return -(x + inv) * f + inv * gain, over * inv


def rhs_cardinality(state: FluidState, method: str = "auto") -> np.ndarray:
    rates = _rates(state.k, state.c, len(state.f))
    return _drift_cardinality(state.f, rates, method)[0]


def rhs_metric(state: FluidState, method: str = "auto") -> np.ndarray:
    return _drift_metric(state.f, state.t, state.x, method)[0]


# -- integration -----------------------------------------------------------------


def integrate(
    state: FluidState,
    t_end: float,
    dt: float = DEFAULT_DT,
    *,
    drift_tol: float | None = None,
    tail_tol: float = 1e-6,
    neg_tol: float = 1e-12,
    method: str = "auto",
) -> FluidState:
    """Classical RK4 from ``state.t`` to ``t_end`` with step at most ``dt``.

    The span is cut into equal steps no longer than ``dt`` and short enough for
    RK4 stability on the fastest linear rate. In cardinality mode the step is
    also capped at half the free-mass depletion time; once the free mass is
    exhausted the state stays at zero.

    Monitored each step: relative drift of the total length (raises
    ``IntegrationDiverged`` above ``drift_tol``; default 1e-6, or 1e-2 in metric
    mode where the truncated tail leaks length), escaped tail mass (``tail_tol``)
    and negative entries (clamped and totalled; below ``-neg_tol`` it raises).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    metric = state.mode is Mode.METRIC
    if metric and t_end >= 1.0 - SINGULAR_MARGIN:
        raise SingularTime("metric runs must stop before t = 1")
    if not metric and t_end > 1.0 + 1e-12:
        raise ValueError("cardinality runs end at t = 1")
    if t_end < state.t - 1e-15:
        raise ValueError("cannot integrate backwards")
    if drift_tol is None:
        drift_tol = 1e-2 if metric else 1e-6

    f = state.f.copy()
    k = state.k
    x = state.x
    rates = x if metric else _rates(k, state.c, len(f))
    w2 = x * x / 4.0
    t = state.t
    tail = state.tail_mass
    clamp = state.clamp_total
    cum = state.cum_length
    max_drift = state.max_length_drift
    max_dev = state.max_mass_dev
    exhausted = state.exhausted_at
    l0 = state.initial_length
    exhaust_mass = DEGENERATE_MASS * max(state.initial_mass, 1.0)

    if metric:
        fastest = float(x[-1]) + 2.0 / (1.0 - t_end)

        def drift(g, s):
            return _drift_metric(g, s, x, method)
    else:
        fastest = 2.0 * float(rates[-1])

        def drift(g, s):
            return _drift_cardinality(g, rates, method)

    span = t_end - t
    h_max = min(dt, RK4_STABLE / fastest) if fastest > 0 else dt
    n_steps = max(1, int(math.ceil(span / h_max - 1e-9))) if span > 0 else 0
    h_nominal = span / n_steps if n_steps else 0.0

    while exhausted is None and t_end - t > 1e-14:
        h = min(h_nominal, t_end - t)
        if t_end - t - h < 1e-12:
            h = t_end - t
        if not metric:
            s = f.sum()
            if s <= exhaust_mass:
                exhausted = t
                f[:] = 0.0
                break
            drain = float(rates @ f)
            if drain > 0 and h > 0.5 * s / drain:
                h = 0.5 * s / drain
        try:
            k1, o1 = drift(f, t)
            y2 = f + 0.5 * h * k1
            k2, o2 = drift(y2, t + 0.5 * h)
            y3 = f + 0.5 * h * k2
            k3, o3 = drift(y3, t + 0.5 * h)
            y4 = f + h * k3
            k4, o4 = drift(y4, t + h)
        except DegenerateState:
            if metric:
                raise
            exhausted = t
            f[:] = 0.0
            break
        cum += float(h / 6.0 * (w2 @ f + 2.0 * (w2 @ y2) + 2.0 * (w2 @ y3) + w2 @ y4))
        tail += float(h / 6.0 * (o1 + 2.0 * o2 + 2.0 * o3 + o4))
        f = f + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        f[0] = 0.0
        low = float(f.min())
        if low < 0.0:
            if low < -neg_tol:
                raise IntegrationDiverged(f"negative density {low:.3g} at t={t:.6f}")
            neg = f < 0.0
            clamp += float(-f[neg].sum())
            f[neg] = 0.0
        if l0 > 0:
            max_drift = max(max_drift, abs(float(x @ f) - l0) / l0)
            if max_drift > drift_tol:
                raise IntegrationDiverged(f"length drift {max_drift:.3g} at t={t:.6f}")
        if metric:
            max_dev = max(max_dev, abs(float(f.sum()) - (state.initial_mass - t)))
        if tail > tail_tol:
            raise IntegrationDiverged(f"tail mass {tail:.3g} escaped past l_max at t={t:.6f}")

    return replace(
        state,
        f=f,
        t=float(t_end),
        tail_mass=tail,
        clamp_total=clamp,
        cum_length=cum,
        max_length_drift=max_drift,
        max_mass_dev=max_dev,
        exhausted_at=exhausted,
    )


def solve(state: FluidState, times, dt: float = DEFAULT_DT, **kwargs) -> list[FluidState]:
    """States at each of the (increasing) ``times``."""
    out = []
    for t in times:
        state = integrate(state, float(t), dt, **kwargs)
        out.append(state)
    return out


# -- functionals -----------------------------------------------------------------


def matched_fraction(state: FluidState) -> float:
    """Fluid matched count per N: free mass consumed since t = 0.

    Equals ``1 - sum f`` whenever the initial free mass is 1, as in the
    continuum limit ``f(x, 0) = exp(-x)``.
    """
    if state.mode is not Mode.CARDINALITY:
        raise ValueError("matched_fraction needs a cardinality state")
    return state.initial_mass - state.mass()


def metric_second_moment(state: FluidState) -> float:
    """``z(t) = sum (l/k)^2 g(l, t) / 4``: expected cost of the next arrival, times N."""
    return state.second_moment()


def metric_total_length(t: float) -> float:
    """Closed-form limit of the total CLOSEST length after ``tN`` arrivals."""
    if not 0.0 <= t < 1.0:
        raise ValueError("t must lie in [0, 1)")
    return 0.5 * (1.0 / (1.0 - t) - 1.0)


def metric_second_moment_exact(t: float, z0: float = 0.5) -> float:
    return z0 / (1.0 - t) ** 2


def expected_step_cost(hist, n: int) -> float:
    """Expected edge length of a uniform arrival given the free-gap histogram.

    A uniform arrival lands in a gap of width ``w`` with probability ``w`` and is
    then ``w/4`` away from its nearest endpoint on average.
    """
    scale = float(hist.k) * float(n)
    return 0.25 * sum((l / scale) ** 2 * f for l, f in hist.counts.items())


def competitive_ratio(
    c: float,
    k: int = 16,
    dt: float = DEFAULT_DT,
    *,
    law: Law | str | None = None,
    l_max: int | None = None,
) -> float:
    """Fluid matched fraction at t = 1 over the offline optimum ``c/(c+1/2)``."""
    if c <= 0:
        raise ValueError("c must be positive")
    state = init_fluid(k, c, l_max, mode=Mode.CARDINALITY, law=law)
    final = integrate(state, 1.0, dt)
    return matched_fraction(final) / theoretical_offline_fraction(c)


@dataclass
class KConvergence:
    ks: list[int]
    values: list[float]
    limit: float
    slope: float  # fitted C in value(k) = limit + C / k


def k_convergence(
    c: float,
    ks=(8, 16, 32),
    dt: float = DEFAULT_DT,
    t_end: float = 1.0,
    law: Law | str | None = None,
) -> KConvergence:
    """Matched fraction for several grid factors and its ``a + C/k`` extrapolation."""
    vals = []
    for k in ks:
        st = integrate(init_fluid(k, c, mode=Mode.CARDINALITY, law=law), t_end, dt)
        vals.append(matched_fraction(st))
    inv = 1.0 / np.asarray(ks, dtype=float)
    slope, limit = np.polyfit(inv, np.asarray(vals), 1)
    return KConvergence(list(ks), vals, float(limit), float(slope))
