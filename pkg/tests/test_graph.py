import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from socoswarm.acord import lambda1_of_mu
from socoswarm.graph import (
    FullCoupling,
    GraphSnapshot,
    ScaledIdentity,
    build_d_regular,
    complete_graph,
    diameter,
    r_hop_neighborhood,
    read_edge_list,
    sigma_dregular,
    sigma_exact,
    sigma_lower_bound,
    write_edge_list,
)

from conftest import random_graph

LAM1 = 2 / (1 + math.sqrt(5))


def test_ring_is_cycle():
    g = build_d_regular(5, 2)
    assert g.edges == ((0, 1), (0, 4), (1, 2), (2, 3), (3, 4))


def test_complete_from_circulant():
    g = build_d_regular(40, 39)
    assert g.num_edges == 40 * 39 // 2
    assert diameter(g).value == 1


def test_circulant_odd_degree():
    g = build_d_regular(6, 3)
    assert np.all(g.degrees == 3)
    assert r_hop_neighborhood(g, 0, 1) == {0, 1, 5, 3}


@pytest.mark.parametrize("N,D", [(5, 3), (3, 3), (4, 1)])
def test_d_regular_rejects(N, D):
    with pytest.raises(ValueError):
        build_d_regular(N, D)


def test_neighborhoods():
    g = build_d_regular(5, 2)
    assert r_hop_neighborhood(g, 0, 1) == {4, 0, 1}
    assert r_hop_neighborhood(g, 0, 10) == set(range(5))
    assert r_hop_neighborhood(g, 0, 0) == {0}


def test_diameters():
    assert diameter(build_d_regular(20, 2)).value == 10
    assert diameter(complete_graph(7)).value == 1
    two = GraphSnapshot(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    info = diameter(two)
    assert math.isinf(info.value) and not info.connected
    assert info.max_component == 1


def test_snapshot_canonical_and_validation():
    a = GraphSnapshot(3, [(1, 0), (2, 1)])
    b = GraphSnapshot(3, [(0, 1), (1, 2)])
    assert a == b and a.edges == ((0, 1), (1, 2))
    with pytest.raises(ValueError):
        GraphSnapshot(3, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        GraphSnapshot(3, [(0, 3)])
    with pytest.raises(ValueError):
        GraphSnapshot(3, [(0, 1)], couplings={(1, 2): ScaledIdentity(1.0)})


def test_channels_cover_both_directions():
    g = build_d_regular(6, 3)
    src, dst, eid = g.channels
    assert src.size == 2 * g.num_edges
    got = sorted(zip(src.tolist(), dst.tolist()))
    want = sorted([(i, j) for i, j in g.edges] + [(j, i) for i, j in g.edges])
    assert got == want
    for s, d, e in zip(src, dst, eid):
        assert set(g.edges[e]) == {s, d}


def test_coupling_window_check():
    g = GraphSnapshot(2, {(0, 1): ScaledIdentity(2.0)})
    g.check_coupling_window(4.0, 4.0, 2)
    with pytest.raises(ValueError):
        g.check_coupling_window(1.0, 1.0, 2)


def test_sigma_two_node_matches_3x3_eigensolve():
    g = GraphSnapshot(2, [(0, 1)])
    rep = sigma_exact(g, [1.0, 1.0], [LAM1, LAM1], 1.0, 1.0)
    s = 1 + LAM1 + 2
    M = np.array([[s, 0, -2], [0, s, -2], [-2, -2, 4]])
    assert rep.sigma == pytest.approx(scipy.linalg.eigvalsh(M)[0], rel=1e-12)


def test_sigma_dregular_check_value():
    rep = sigma_dregular(2, 1.0, LAM1, 1.0, 1.0)
    kappa = (1 + LAM1) / 2
    assert kappa == pytest.approx(0.8090, abs=1e-4)
    assert rep.sigma == pytest.approx(0.7281, abs=1e-4)
    assert rep.lower <= rep.sigma <= rep.upper
    ring = sigma_exact(build_d_regular(12, 2), [1.0] * 12, [LAM1] * 12, 1.0, 1.0)
    assert ring.sigma == pytest.approx(rep.sigma, rel=1e-10)


def test_sigma_dregular_decreases_in_D():
    vals = [sigma_dregular(D, 1.0, LAM1, 1.0, 1.0).sigma for D in (2, 4, 8, 16, 64, 256)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.02


def test_sigma_d_independent_for_full_couplings(rng):
    g1 = random_graph(rng, 6)
    g3 = GraphSnapshot(6, {e: FullCoupling(np.eye(3)) for e in g1.edges})
    mus, lam = np.full(6, 2.0), np.full(6, 0.7)
    assert sigma_exact(g1, mus, lam, 1.5, 1.0).sigma == pytest.approx(sigma_exact(g3, mus, lam, 1.5, 1.0).sigma)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    N=st.integers(2, 12),
    beta=st.floats(0.05, 20),
    c=st.floats(0.1, 10),
)
def test_sigma_properties(seed, N, beta, c):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, N, connected=bool(seed % 2))
    mus = rng.uniform(0.2, 5, N)
    lam = np.array([lambda1_of_mu(mu) for mu in mus])
    base = sigma_exact(g, mus, lam, beta, 1.0).sigma
    if g.num_edges:
        assert 0 < base <= 4 * beta * 1.0 + 1e-12
    # homogeneity: scaling mu+lambda and beta*m together scales sigma
    scaled = sigma_exact(g, c * mus, c * lam, c * beta, 1.0).sigma
    assert scaled == pytest.approx(c * base, rel=1e-9)
    lb = sigma_lower_bound(g, mus, lam, beta, 1.0).sigma
    assert lb <= base * (1 + 1e-9)


def test_edge_list_round_trip(tmp_path, rng):
    A = rng.normal(size=(2, 2))
    g = GraphSnapshot(5, {(0, 1): ScaledIdentity(0.5), (1, 4): FullCoupling(A), (2, 3): ScaledIdentity(1.0)})
    p = tmp_path / "g.edges"
    write_edge_list(g, p)
    back = read_edge_list(p)
    assert back == g
    assert np.array_equal(back.coupling(4, 1).A, A)


def test_edge_list_parse(tmp_path):
    p = tmp_path / "ring.edges"
    p.write_text("# ring\n0 1\n1 2 2.0\n2 0\n")
    g = read_edge_list(p)
    assert g.n == 3 and g.num_edges == 3
    assert g.coupling(1, 2) == ScaledIdentity(2.0)
    p.write_text("0 1 2 3\n")
    with pytest.raises(ValueError):
        read_edge_list(p)
