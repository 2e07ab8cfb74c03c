"""Acceptance criteria, each at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (visible without ``-s``) before
asserting, so ``pytest tests/test_acceptance.py`` doubles as a report.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from geomatch.experiments import (
    ExperimentConfig,
    add_vertex_probe,
    gap_repartition_probe,
    offline_sweep,
    rounding_error_probe,
    run_sweep,
    walk_runs,
)
from geomatch.fluid import Mode, init_fluid, integrate, matched_fraction, solve
from geomatch.instance import instance_from_coords
from geomatch.offline import brute_force_max_matching, small_first, theoretical_offline_fraction
from geomatch.rng import RngSeed


@pytest.fixture
def report(capsys):
    def emit(name: str, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, detail

    return emit


@pytest.fixture(scope="module")
def metric_k32():
    times = sorted({*np.round(np.arange(0, 19) * 0.05, 10), 0.25, 0.75})
    return solve(init_fluid(32, math.inf, mode=Mode.METRIC), times, 1e-3)


def test_c1_offline_fraction(report):
    start = time.perf_counter()
    errs = {}
    for c in (0.5, 1.0, 2.0):
        kappas = offline_sweep(10_000, c, 32, seed=101)
        errs[c] = abs(np.mean(kappas) / 10_000 - theoretical_offline_fraction(c))
    elapsed = time.perf_counter() - start
    ok = max(errs.values()) <= 0.02 and elapsed <= 10.0
    detail = ", ".join(f"c={c}: |err|={e:.4f}" for c, e in errs.items()) + f"; {elapsed:.2f}s"
    report("1 offline fraction", ok, detail)


def test_c2_small_first_optimal(report):
    g = RngSeed(202).generator()
    start = time.perf_counter()
    failures = 0
    for _ in range(1000):
        n_off, n_on = int(g.integers(1, 13)), int(g.integers(0, 13))
        n = int(g.integers(1, 13))
        inst = instance_from_coords(g.random(n_off), g.random(n_on), float(g.uniform(0.1, 3.0)), n)
        failures += small_first(inst).kappa != brute_force_max_matching(inst)
    elapsed = time.perf_counter() - start
    report("2 SMALL-FIRST = brute force", failures == 0 and elapsed <= 5.0,
           f"{failures} failures / 1000; {elapsed:.2f}s")


def test_c3_walk_ergodics(report):
    res = np.array(walk_runs(100_000, 1.0, 16, seed=303))
    p, frac = res.mean(axis=0)
    ok = abs(p - 0.5) <= 0.01 and abs(frac - 2 / 3) <= 0.02
    report("3 walk ergodics", ok, f"mean p={p:.5f}, mean fraction={frac:.5f}")


def test_c4_ode_invariants(report, metric_k32):
    card = solve(init_fluid(16, 1.0, mode=Mode.CARDINALITY), np.linspace(0, 1, 101), 1e-3)
    drift = card[-1].max_length_drift
    masses = [s.mass() for s in card]
    l1_ok = min(masses) >= math.exp(-4) and max(masses) <= 1 + 1e-6
    dev = max(abs(s.mass() - (1 - s.t)) for s in metric_k32)
    ok = drift <= 1e-6 and l1_ok and dev <= 1e-4
    report("4 ODE invariants", ok,
           f"length drift={drift:.2e}, sum f in [{min(masses):.4f}, {max(masses):.6f}], "
           f"metric max|sum g-(1-t)|={dev:.2e}")


def test_c5_metric_closed_form(report, metric_k32):
    lo, hi = 0.49 * 0.98, 0.51 * 1.02
    vals = {}
    for s in metric_k32:
        if any(abs(s.t - t) < 1e-9 for t in (0.0, 0.25, 0.5, 0.75, 0.9)):
            vals[round(s.t, 2)] = s.second_moment() * (1 - s.t) ** 2
    ok = len(vals) == 5 and all(lo <= v <= hi for v in vals.values())
    report("5 metric z(t)(1-t)^2", ok, ", ".join(f"t={t}: {v:.5f}" for t, v in vals.items()))


def test_c6_metric_simulation(report):
    cfg = ExperimentConfig(mode="metric", n=10_000, eps=0.1, k=2, reps=16, seed=606, t_grid=(0.5, 0.9))
    rows = {round(r.t, 2): r for r in run_sweep(cfg)}
    rel = {t: abs(r.empirical_mean - r.theory_value) / r.theory_value for t, r in rows.items()}
    ok = rel[0.5] <= 0.10 and rel[0.9] <= 0.10
    report("6 metric simulation vs theory", ok,
           ", ".join(f"t={t}: mean={rows[t].empirical_mean:.4f} (rel {rel[t]:.3f})" for t in rows))


def test_c7_cardinality_vs_fluid(report):
    cfg = ExperimentConfig(mode="cardinality", n=10_000, c=1.0, k=16, reps=32, seed=707, t_grid=(1.0,))
    (row,) = run_sweep(cfg)
    fluid = matched_fraction(integrate(init_fluid(16, 1.0), 1.0, 1e-3))
    ok = abs(row.empirical_mean - fluid) <= 0.02 and row.fluid_value == fluid
    report("7 cardinality simulation vs fluid", ok,
           f"mean kappa/N={row.empirical_mean:.5f}, fluid={fluid:.5f}, gap={row.abs_gap:.5f}")


def test_c8_gaps_repartition(report):
    cells = gap_repartition_probe(n=2000, k=8, reps=200, seed=808, c=1.0, t_frac=0.3, top=20)
    worst = max(cells, key=lambda c: abs(c.z))
    ok = len(cells) == 20 and abs(worst.z) <= 4.0
    report("8 gaps repartition", ok,
           f"max |z|={abs(worst.z):.2f} at ({worst.l_minus},{worst.l_plus}) over 20 cells")


def test_c9_rounding_robustness(report):
    adds = add_vertex_probe(200, 1.0, 1000, seed=909)
    probe = rounding_error_probe(10_000, 1.0, 16, 100, seed=910)
    ok = max(abs(d) for d in adds) <= 1 and probe.within_fraction >= 0.95
    report("9 rounding robustness", ok,
           f"max |insertion change|={max(abs(d) for d in adds)} over {len(adds)} trials; "
           f"{probe.within_fraction:.0%} within bound {probe.bound:.0f} (max delta {max(probe.deltas)})")
