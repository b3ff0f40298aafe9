import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socoswarm.costs import (
    CostReport,
    Trajectory,
    coupled_objective,
    dissimilarity,
    midpoints,
    read_cost_csv,
    surrogate_F,
    total_cost,
    write_cost_csv,
)
from socoswarm.graph import FullCoupling, GraphSnapshot, ScaledIdentity, build_d_regular
from socoswarm.instance import Instance, quadratic, random_quadratic_instance

from conftest import random_coupling_matrix


def test_dissimilarity_values(rng):
    assert dissimilarity(ScaledIdentity(1.0), np.array([2.0]), np.array([2.0]), 50.0) == 0.0
    assert dissimilarity(ScaledIdentity(1.0), np.array([1.0]), np.array([3.0]), 50.0) == pytest.approx(100.0)
    A = random_coupling_matrix(rng, 3, 0.5, 2.0)
    xi, xj = rng.normal(size=3), rng.normal(size=3)
    val = dissimilarity(FullCoupling(A), xi, xj, 4.0)
    sq = float(np.sum((xi - xj) ** 2))
    assert 4.0 * 0.5 / 2 * sq - 1e-12 <= val <= 4.0 * 2.0 / 2 * sq + 1e-12


def test_single_agent_hand_value():
    inst = Instance(1, 1, 1, 0.0, 1.0, 1.0, [[quadratic(0.5, [1.0])]], [GraphSnapshot(1)], np.zeros((1, 1)))
    rep = total_cost(inst, Trajectory(np.ones((1, 1, 1)), np.zeros((1, 1))))
    assert (rep.hitting, rep.switching, rep.total) == (0.0, 0.5, 0.5)


def _loop_cost(inst, X):
    """Term-by-term evaluation used as an independent reference."""
    h = s = diss = 0.0
    prev = inst.x0
    for t in range(1, inst.T + 1):
        x = X[t - 1]
        for i in range(inst.N):
            h += inst.cost(t, i).value(x[i])
            s += 0.5 * float(np.sum((x[i] - prev[i]) ** 2))
        for (i, j), c in inst.graph(t).couplings.items():
            r = c.apply(x[i] - x[j])
            diss += inst.beta / 2 * float(r @ r)
        prev = x
    return h, s, diss


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 3), full=st.booleans())
def test_total_cost_matches_loop(seed, d, full):
    rng = np.random.default_rng(seed)
    N, T = 5, 4
    if full:
        g = GraphSnapshot(N, {(i, (i + 1) % N): FullCoupling(random_coupling_matrix(rng, d, 0.5, 2.0)) for i in range(N)})
        m, l = 0.5, 2.0
    else:
        g, m, l = build_d_regular(N, 2), 1.0, 1.0
    inst = random_quadratic_instance(rng, N, T, [g], d=d, beta=1.7, m=m, l=l)
    X = rng.normal(size=(T, N, d))
    rep = total_cost(inst, Trajectory(X, inst.x0))
    h, s, diss = _loop_cost(inst, X)
    assert rep.hitting == pytest.approx(h, rel=1e-12)
    assert rep.switching == pytest.approx(s, rel=1e-12)
    assert rep.dissimilarity == pytest.approx(diss, rel=1e-12, abs=1e-12)
    assert rep.per_round.sum(axis=0) == pytest.approx([h, s, diss], rel=1e-12, abs=1e-12)


def test_automorphism_invariance(rng):
    N, T = 6, 3
    g = build_d_regular(N, 2)
    inst = random_quadratic_instance(rng, N, T, [g], d=1, beta=2.0)
    X = rng.normal(size=(T, N, 1))
    perm = np.roll(np.arange(N), 2)  # rotation is a ring automorphism
    alpha, v = inst.quadratic_arrays
    rows = [[quadratic(alpha[t, perm[i]], v[t, perm[i]], inst.mus[perm[i]]) for i in range(N)] for t in range(T)]
    inst2 = Instance(T, N, 1, 2.0, 1.0, 1.0, rows, [g] * T, inst.x0[perm])
    a = total_cost(inst, Trajectory(X, inst.x0)).total
    b = total_cost(inst2, Trajectory(X[:, perm], inst.x0[perm])).total
    assert a == pytest.approx(b, rel=1e-12)


def test_surrogate_cases(rng):
    g = GraphSnapshot(2, [(0, 1)])
    inst = Instance(1, 2, 1, 3.0, 1.0, 1.0, [[quadratic(1.0, [1.0]), quadratic(2.0, [-1.0])]], [g], np.array([[0.5], [0.0]]))
    lam = np.array([0.6, 0.7])
    x = np.array([[0.2], [0.4]])
    z = {(0, 1): np.array([0.1])}
    # symbolic expansion
    want = 1.0 * (0.2 - 1) ** 2 + 2.0 * (0.4 + 1) ** 2 + 0.3 * (0.2 - 0.5) ** 2 + 0.35 * 0.4**2
    want += 3.0 * ((0.2 - 0.1) ** 2 + (0.4 - 0.1) ** 2)
    assert surrogate_F(inst, 1, x, z, inst.x0, lam) == pytest.approx(want, abs=1e-12)
    same = np.array([[0.3], [0.3]])
    F = surrogate_F(inst, 1, same, {(0, 1): np.array([0.3])}, inst.x0, lam)
    assert F == pytest.approx(coupled_objective(inst, 1, same, inst.x0, lam))
    assert surrogate_F(inst, 1, x, midpoints(g, x), inst.x0, lam) == pytest.approx(coupled_objective(inst, 1, x, inst.x0, lam))
    with pytest.raises(KeyError):
        surrogate_F(inst, 1, x, {}, inst.x0, lam)


def test_surrogate_beta_zero_ignores_z():
    g = GraphSnapshot(2, [(0, 1)])
    inst = Instance(1, 2, 1, 0.0, 1.0, 1.0, [[quadratic(1.0, [1.0]), quadratic(1.0, [0.0])]], [g])
    lam = np.ones(2)
    x = np.array([[0.5], [0.2]])
    assert surrogate_F(inst, 1, x, {(0, 1): np.array([9.0])}, inst.x0, lam) == surrogate_F(
        inst, 1, x, {(0, 1): np.array([-4.0])}, inst.x0, lam
    )


def test_cost_csv_round_trip(tmp_path, rng):
    rep = CostReport.from_rounds(rng.uniform(size=(5, 3)))
    p = tmp_path / "c.csv"
    write_cost_csv(rep, p)
    back = read_cost_csv(p)
    assert np.array_equal(back.per_round, rep.per_round)
    assert back.total == rep.total
