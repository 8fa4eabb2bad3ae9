import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crackle.cech import SimplicialComplex, build_cech
from crackle.homology import (
    CombinatorialCapError,
    UnionFind,
    betti_numbers,
    connected_subsets,
    crackle_statistics,
    euler_characteristic,
    gf2_rank,
    minimal_cycle_batch,
    minimal_cycle_indicator,
)
from crackle.sampler import DistributionSpec, PointCloud, sample_cloud

from oracles import brute_cech, dense_betti, gf2_rank_dense


def ring(m, radius):
    t = 2 * np.pi * np.arange(m) / m
    return np.c_[radius * np.cos(t), radius * np.sin(t)]


def equilateral(s):
    return np.array([[0, 0], [s, 0], [s / 2, s * math.sqrt(3) / 2]])


def tetrahedron(s):
    return np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) * s / (2 * math.sqrt(2))


# -- complexes ----------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 9), d=st.integers(2, 3))
def test_build_cech_matches_brute_force(seed, n, d):
    pts = np.random.default_rng(seed).uniform(0, 2.5, size=(n, d))
    cx = build_cech(pts, 1.0, kmax=n - 1)
    assert cx.simplices == brute_cech(pts, 1.0, n - 1)


def test_complex_is_downward_closed():
    pts = np.random.default_rng(4).uniform(0, 3, size=(25, 2))
    cx = build_cech(pts, 1.0, 4)
    for k in range(1, 5):
        lower = set(cx.simplices[k - 1])
        for s in cx.simplices[k]:
            assert all(s[:i] + s[i + 1:] in lower for i in range(len(s)))


def test_cech_differs_from_rips_on_triangle():
    # side 1.9: pairwise within 2 but the circumradius 1.097 > 1
    cx = build_cech(equilateral(1.9), 1.0, 2)
    assert cx.counts() == [3, 3, 0]


def test_complex_dict_roundtrip():
    cx = build_cech(ring(8, 1.2), 1.0, 2)
    back = SimplicialComplex.from_dict(cx.to_dict())
    assert back == cx


def test_build_cech_validates():
    with pytest.raises(ValueError):
        build_cech(ring(4, 1), 0.0)
    with pytest.raises(ValueError):
        build_cech(ring(4, 1), 1.0, -1)


# -- homology -------------------------------------------------------------------------

def test_gf2_rank_small():
    cols = [0b011, 0b110, 0b101]
    assert gf2_rank(cols) == 2
    assert gf2_rank([]) == 0


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 10**6), rows=st.integers(1, 20), cols=st.integers(1, 20))
def test_gf2_rank_matches_dense(seed, rows, cols):
    mat = np.random.default_rng(seed).integers(0, 2, size=(rows, cols))
    bits = [int("".join(str(b) for b in mat[::-1, j]), 2) for j in range(cols)]
    assert gf2_rank(bits) == gf2_rank_dense(mat)


def test_circle_and_disk():
    assert betti_numbers(build_cech(ring(12, 1.8), 1.0, 2)).beta == [1, 1]
    assert betti_numbers(build_cech(ring(12, 0.5), 1.0, 2)).beta == [1, 0]
    assert betti_numbers(build_cech(ring(12, 5.0), 1.0, 2)).beta == [12, 0]


def test_hollow_tetrahedron_void():
    # side 1.7: all triangles present (circumradius 0.98), full simplex absent (1.04)
    cx = build_cech(tetrahedron(1.7), 1.0, 3)
    assert cx.counts() == [4, 6, 4, 0]
    assert betti_numbers(cx).beta == [1, 0, 1]


def test_betti_refuses_truncated_degree():
    cx = build_cech(ring(6, 0.4), 1.0, 1)
    with pytest.raises(ValueError):
        betti_numbers(cx, 2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 10), d=st.integers(2, 3))
def test_betti_matches_dense_and_euler(seed, n, d):
    pts = np.random.default_rng(seed).uniform(0, 2.5, size=(n, d))
    cx = build_cech(pts, 1.0, kmax=n - 1)
    bv = betti_numbers(cx, n)
    assert bv.beta == dense_betti(cx.simplices, n)
    assert euler_characteristic(bv.beta) == euler_characteristic(cx.counts())


def test_union_find():
    uf = UnionFind(5)
    uf.union(0, 1)
    uf.union(3, 4)
    uf.union(1, 0)
    assert uf.components == 3
    assert uf.find(1) == uf.find(0)


# -- minimal cycles ---------------------------------------------------------------------

@pytest.mark.parametrize("side,expect", [(1.9, 1), (1.5, 0), (2.1, 0), (1.8, 1), (1.72, 0)])
def test_triangle_indicator(side, expect):
    # threshold is circumradius 1: side sqrt(3) = 1.732...
    assert minimal_cycle_indicator(equilateral(side), 1) == expect


def test_tetrahedron_indicator():
    assert minimal_cycle_indicator(tetrahedron(1.7), 2) == 1
    assert minimal_cycle_indicator(tetrahedron(1.5), 2) == 0
    # faces of side 1.8 have circumradius 1.039 > 1
    assert minimal_cycle_indicator(tetrahedron(1.8), 2) == 0


def test_indicator_validates():
    with pytest.raises(ValueError):
        minimal_cycle_indicator(equilateral(1.9), 0)
    with pytest.raises(ValueError):
        minimal_cycle_indicator(equilateral(1.9), 2)


@pytest.mark.parametrize("k,d", [(1, 2), (1, 3), (2, 3)])
def test_batch_indicator_matches_scalar(k, d):
    rng = np.random.default_rng(k * 10 + d)
    configs = rng.uniform(-1.2, 1.2, size=(300, k + 2, d))
    # jittered regular simplices near the cycle threshold exercise both outcomes
    base = tetrahedron(1.7) if k == 2 else np.c_[equilateral(1.85), np.zeros((3, d - 2))]
    near = base + rng.normal(scale=0.08, size=(200,) + base.shape)
    configs = np.concatenate([configs, near])
    batch = minimal_cycle_batch(configs)
    scalar = [minimal_cycle_indicator(c, k) for c in configs]
    assert batch.tolist() == scalar
    assert 0 < batch.sum() < len(batch)


def test_indicator_rotation_invariant():
    rng = np.random.default_rng(3)
    configs = rng.uniform(-1.2, 1.2, size=(200, 4, 3))
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    assert np.array_equal(minimal_cycle_batch(configs), minimal_cycle_batch(configs @ q.T + 0.3))


# -- crackle statistics ---------------------------------------------------------------

def test_connected_subsets_path_and_triangle():
    path = {0: {1}, 1: {0, 2}, 2: {1, 3}, 3: {2}}
    assert sorted(connected_subsets(path, 2)) == [(0, 1), (1, 2), (2, 3)]
    assert sorted(connected_subsets(path, 3)) == [(0, 1, 2), (1, 2, 3)]
    tri = {0: {1, 2}, 1: {0, 2}, 2: {0, 1}}
    assert list(connected_subsets(tri, 3)) == [(0, 1, 2)]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(1, 8), size=st.integers(1, 5))
def test_connected_subsets_match_brute_force(seed, n, size):
    rng = np.random.default_rng(seed)
    adj = {i: set() for i in range(n)}
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < 0.4:
            adj[i].add(j)
            adj[j].add(i)

    def connected(sub):
        seen, stack = {sub[0]}, [sub[0]]
        while stack:
            for w in adj[stack.pop()] & set(sub):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(sub)

    expect = [s for s in itertools.combinations(range(n), size) if connected(s)]
    got = list(connected_subsets(adj, size))
    assert sorted(got) == expect and len(got) == len(set(got))


def test_crackle_statistics_isolated_triangle():
    far = equilateral(1.9) + np.array([50.0, 0.0])
    core = np.random.default_rng(0).uniform(-1, 1, size=(30, 2))
    cloud = PointCloud(np.vstack([core, far, [[0.0, 40.0]]]))
    st_ = crackle_statistics(cloud, 10.0, 2)
    assert st_.S0 == 4
    assert st_.S0_hat == 1
    assert st_.S == {1: 1} and st_.S_hat == {1: 1} and st_.L == {1: 0}
    beta = betti_numbers(build_cech(cloud.points[30:], 1.0, 2)).beta
    assert beta == [2, 1]
    assert st_.sandwich_holds(beta)


def test_upper_sandwich_fails_for_cycle_touching_core():
    # an exterior minimal 1-cycle with one vertex 1.5 from a core point:
    # beta_1 = 1 but it is not a component of the whole complex and has no 4-subsets
    tri = equilateral(1.9) + np.array([20.0, 0.0])
    cloud = PointCloud(np.vstack([tri, [[18.6, 0.0]]]))
    stats = crackle_statistics(cloud, 19.0, 2)
    beta = betti_numbers(build_cech(tri, 1.0, 2)).beta
    assert beta == [1, 1]
    assert stats.S == {1: 1} and stats.S_hat == {1: 0} and stats.L == {1: 0}
    assert not stats.sandwich_holds(beta)


def test_crackle_cap():
    cloud = PointCloud(ring(20, 30.0))
    with pytest.raises(CombinatorialCapError):
        crackle_statistics(cloud, 10.0, 2, cap=5)
    # beta_0 statistics need no enumeration
    assert crackle_statistics(cloud, 10.0, 1, cap=5).S0 == 20


def test_sandwich_on_random_exteriors():
    spec = DistributionSpec("powerlaw", 2, 2.6)
    for seed in range(6):
        cloud = sample_cloud(spec, 300, seed=seed)
        R = 8.0
        stats = crackle_statistics(cloud, R, 2, cap=200)
        ext = cloud.points[cloud.norms() >= R]
        beta = betti_numbers(build_cech(ext, 1.0, 2)).beta
        assert stats.S0_hat <= beta[0] <= stats.S0
        assert beta[0] <= len(ext)
