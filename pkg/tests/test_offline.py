from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from geomatch.errors import InstanceTooLarge
from geomatch.instance import instance_from_coords, make_instance
from geomatch.offline import (
    brute_force_max_matching,
    compatibility_lists,
    run_generative_walk,
    small_first,
    stationary_density,
    stationary_window_mass,
    theoretical_offline_fraction,
)
from geomatch.rng import RngSeed


def _exhaustive(adj, n_off):
    """Maximum matching by trying every option for every online vertex."""

    @lru_cache(maxsize=None)
    def best(j, used):
        if j == len(adj):
            return 0
        out = best(j + 1, used)
        for x in adj[j]:
            if not used >> x & 1:
                out = max(out, 1 + best(j + 1, used | 1 << x))
        return out

    return best(0, 0)


def _scipy_size(inst):
    adj = compatibility_lists(inst)
    rows = [j for j, nb in enumerate(adj) for _ in nb]
    cols = [x for nb in adj for x in nb]
    m = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(adj), len(inst.offline)))
    return int((maximum_bipartite_matching(m, perm_type="column") >= 0).sum())


instances = st.builds(
    lambda off, on, c, n: instance_from_coords(off, on, c, n),
    st.lists(st.floats(0, 1), min_size=1, max_size=7),
    st.lists(st.floats(0, 1), min_size=0, max_size=7),
    st.floats(0.05, 3.0),
    st.integers(1, 8),
)


@given(instances)
@settings(max_examples=200, deadline=None)
def test_small_first_matches_exhaustive_oracle(inst):
    expected = _exhaustive(tuple(tuple(a) for a in compatibility_lists(inst)), len(inst.offline))
    assert brute_force_max_matching(inst) == expected
    assert small_first(inst).kappa == expected


def test_augmenting_paths_agree_with_scipy():
    for r in range(200):
        g = RngSeed(17).replicate(r).generator()
        n = int(g.integers(1, 40))
        inst = make_instance(n, float(g.uniform(0.2, 3.0)), RngSeed(17).replicate(r))
        assert brute_force_max_matching(inst) == _scipy_size(inst)


@given(instances)
@settings(max_examples=100, deadline=None)
def test_small_first_edges_are_a_valid_matching(inst):
    res = small_first(inst)
    off, on = res.edges[:, 0], res.edges[:, 1]
    assert len(set(off.tolist())) == len(off) == res.kappa
    assert len(set(on.tolist())) == len(on)
    d = np.abs(inst.offline.coords[off] - inst.online[on])
    assert np.all(d < inst.radius)
    assert res.rho == pytest.approx(d.sum())


def test_brute_force_cap():
    inst = make_instance(2001, 1.0, 0)
    with pytest.raises(InstanceTooLarge):
        brute_force_max_matching(inst)


def test_small_first_rejects_circle_and_metric():
    with pytest.raises(ValueError):
        small_first(make_instance(10, 1.0, 0, k=2))
    with pytest.raises(ValueError):
        small_first(make_instance(10, math.inf, 0))


def test_strict_compatibility_threshold():
    inst = instance_from_coords([0.0], [0.25], 1.0, 4)  # distance equals c/N exactly
    assert small_first(inst).kappa == 0
    assert brute_force_max_matching(inst) == 0


def test_theoretical_fraction():
    assert theoretical_offline_fraction(1.0) == pytest.approx(2 / 3)
    assert theoretical_offline_fraction(0.5) == 0.5
    assert theoretical_offline_fraction(math.inf) == 1.0
    with pytest.raises(ValueError):
        theoretical_offline_fraction(-1)


@pytest.mark.parametrize("c", [0.25, 1.0, 3.0])
def test_stationary_density_normalised(c):
    inner = integrate.quad(lambda x: stationary_density(x, c), -c, c)[0]
    outer = 2 * integrate.quad(lambda x: stationary_density(x, c), c, np.inf)[0]
    assert inner + outer == pytest.approx(1.0, abs=1e-10)
    assert inner == pytest.approx(stationary_window_mass(c), abs=1e-10)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_window_mass_reproduces_offline_fraction(c):
    p = stationary_window_mass(c)
    assert 2 * p / (p + 1) == pytest.approx(theoretical_offline_fraction(c))


def test_walk_samples_follow_stationary_density():
    c = 1.0
    w = run_generative_walk(200_000, c, RngSeed(6), sample_every=7)
    edges = np.linspace(-4, 4, 17)
    counts, _ = np.histogram(w.psi_samples, bins=edges)
    frac = counts / len(w.psi_samples)
    expected = [integrate.quad(lambda x: stationary_density(x, c), a, b)[0] for a, b in zip(edges[:-1], edges[1:])]
    np.testing.assert_allclose(frac, expected, atol=0.01)


def test_walk_matched_count_is_consistent():
    w = run_generative_walk(5000, 1.0, RngSeed(2))
    assert w.matched <= 5000
    assert w.p_hat == pytest.approx(w.matched / w.tau)
    with pytest.raises(ValueError):
        run_generative_walk(5, 1.0, 0)
