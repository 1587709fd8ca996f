import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from cligdt.uncertainty import (BoundCurves, CdfBand, GeneralizedSet, UncertaintyError, build_bound_curves,
                                hit_and_run, instantiate, load_or_build_curves, shortest_interval, support,
                                support_greedy, vertices)

from oracles import brute_vertices, same_point_sets, shortest_interval_pairs, support_lp

st_samples = hnp.arrays(np.float64, st.integers(30, 60), elements=st.integers(0, 40).map(float))


def random_set(rng, n, T, gamma):
    nominal = rng.uniform(5, 10, n)
    lb = nominal - rng.uniform(0, 3, n) * (rng.random(n) < 0.85)
    ub = nominal + rng.uniform(0, 3, n) * (rng.random(n) < 0.85)
    return GeneralizedSet(0.5, gamma, nominal, lb, ub, T)


@settings(max_examples=40, deadline=None)
@given(s=st_samples, alpha=st.floats(0.0, 0.8))
def test_shortest_interval_matches_pair_search(s, alpha):
    band = CdfBand.build(s[None, :])
    ref = shortest_interval_pairs(s, alpha, band.band_width[0])
    lo, hi = shortest_interval(band, 0, alpha)
    if ref is None:
        assert (lo, hi) == (s.min(), s.max())
    else:
        assert hi - lo == pytest.approx(ref[1] - ref[0])
        assert band.coverage(0, lo, hi) >= alpha - 1e-12


def test_band_rejects_few_samples():
    with pytest.raises(UncertaintyError):
        CdfBand.build(np.arange(10.0)[None, :])


def test_curves_monotone_and_nested(small_case):
    c = small_case.curves
    assert np.all(np.diff(c.lb, axis=0) <= 1e-12)
    assert np.all(np.diff(c.ub, axis=0) >= -1e-12)
    rng = np.random.default_rng(0)
    for a1, a2 in [(0.1, 0.4), (0.4, 0.7), (0.7, 1.0)]:
        U1, U2 = instantiate(c, a1, 0.8), instantiate(c, a2, 0.8)
        for _ in range(30):
            g = rng.standard_normal(c.n_u)
            assert support(U1, g)[0] <= support(U2, g)[0] + 1e-7


@pytest.mark.parametrize("n,T,gamma", [(2, 1, 0.5), (2, 2, 0.7), (3, 1, 1.5), (3, 3, 0.4), (4, 2, 1.3),
                                       (5, 5, 0.6), (6, 3, 1.0), (6, 2, 2.25)])
def test_vertices_match_halfspace_enumeration(n, T, gamma):
    rng = np.random.default_rng(n * 100 + T)
    U = random_set(rng, n, T, gamma)
    V = vertices(U)
    W = brute_vertices(U.nominal, U.lb, U.ub, U.budget)
    assert same_point_sets(V, W)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6), gamma=st.floats(0.0, 2.0))
def test_support_value_matches_lp(seed, n, gamma):
    rng = np.random.default_rng(seed)
    U = random_set(rng, n, max(1, n // 2), gamma)
    g = rng.standard_normal(n)
    ref = support_lp(U.nominal, U.lb, U.ub, U.budget, g)
    v, u = support(U, g)
    vg, ug = support_greedy(U, g)
    assert v == pytest.approx(ref, rel=1e-7, abs=1e-7)
    assert vg == pytest.approx(ref, rel=1e-7, abs=1e-7)
    assert U.contains(u) and U.contains(ug)


def test_support_attained_at_vertex():
    rng = np.random.default_rng(5)
    U = random_set(rng, 4, 2, 0.9)
    V = vertices(U)
    for _ in range(20):
        g = rng.standard_normal(4)
        assert support(U, g)[0] == pytest.approx(np.max(V @ g), rel=1e-7, abs=1e-7)


def test_gamma_zero_is_singleton(small_case):
    U = instantiate(small_case.curves, 0.9, 0.0)
    V = vertices(U)
    assert V.shape[0] == 1
    np.testing.assert_allclose(V[0], small_case.nominal)


def test_large_gamma_gives_box():
    rng = np.random.default_rng(1)
    nominal = np.array([4.0, 6.0])
    U = GeneralizedSet(0.5, 2.0, nominal, nominal - [1.0, 2.0], nominal + [3.0, 0.5], 1)
    V = vertices(U)
    corners = np.array(list(itertools.product(*zip(U.lb, U.ub))))
    assert same_point_sets(V, corners)
    for _ in range(10):
        assert U.contains(rng.uniform(U.lb, U.ub))


def test_hit_and_run_stays_inside():
    rng = np.random.default_rng(2)
    U = random_set(rng, 5, 5, 0.7)
    pts = hit_and_run(U, 200, np.random.default_rng(0))
    assert all(U.contains(p, tol=1e-6) for p in pts)
    assert np.std(pts, axis=0).max() > 0


def test_hit_and_run_burn_in_guard():
    U = random_set(np.random.default_rng(0), 3, 1, 1.0)
    with pytest.raises(UncertaintyError):
        hit_and_run(U, 5, np.random.default_rng(0), burn_in=10)


def test_box_family():
    nom = np.array([10.0, 20.0])
    c = BoundCurves.box_family(nom, 1, step=0.01)
    U = instantiate(c, 0.3, 2.0)
    np.testing.assert_allclose(U.lb, nom * 0.7)
    np.testing.assert_allclose(U.ub, nom * 1.3)


def test_curve_cache_roundtrip(tmp_path, small_case):
    a = load_or_build_curves(small_case.samples, small_case.nominal, small_case.net.horizon,
                             cache_dir=tmp_path)
    files = list(tmp_path.glob("curves-*.json"))
    assert len(files) == 1
    b = load_or_build_curves(small_case.samples, small_case.nominal, small_case.net.horizon,
                             cache_dir=tmp_path)
    np.testing.assert_array_equal(a.lb, b.lb)
    np.testing.assert_array_equal(a.ub, b.ub)


def test_curves_from_band_cover_in_sample(small_case):
    c = build_bound_curves(CdfBand.build(small_case.samples), small_case.nominal, small_case.net.horizon)
    lb, ub = c.at(0.5)
    inside = (small_case.samples >= lb[:, None]) & (small_case.samples <= ub[:, None])
    assert inside.mean(axis=1).min() >= 0.5
