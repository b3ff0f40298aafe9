import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socoswarm.acord import (
    KtPolicy,
    acord_round,
    compute_Kt,
    cr_acord,
    cr_star,
    init_states,
    kt_log_argument,
    lambda1_of_mu,
    network_crawl,
    run_acord,
    competitive_bound,
)
from socoswarm.graph import GraphSnapshot, build_d_regular, complete_graph
from socoswarm.instance import CustomCost, HittingCostSpec, Instance, generate_lower_bound_instance, quadratic, random_quadratic_instance
from socoswarm.oracles import am_reference, lambdas_of, offline_opt, robd_round_exact
from socoswarm.simnet import Harness

from conftest import random_graph


def test_lambda1_values():
    assert lambda1_of_mu(1.0) == pytest.approx(0.618034, abs=1e-6)
    assert lambda1_of_mu(4.0) == pytest.approx(0.828427, abs=1e-6)
    assert 0.999 < lambda1_of_mu(1e6) < 1.0


def test_cr_star_values():
    assert cr_star([1.0]) == pytest.approx(1.618034, abs=1e-6)
    assert cr_star([1.0, 100.0, 7.0]) == cr_star([1.0])
    assert cr_star([1e9]) == pytest.approx(1.0, abs=1e-4)
    # optimal lambda balances both terms of the competitive ratio
    for mu in (0.3, 1.0, 7.0):
        lam = lambda1_of_mu(mu)
        assert 1 / lam == pytest.approx(1 + lam / mu, rel=1e-12)
        assert 1 / lam == pytest.approx(cr_star([mu]), rel=1e-12)


def test_cr_acord_and_bound():
    T = 10
    c = cr_star([1.0])
    assert cr_acord([1.0], T) == pytest.approx((c + 1 / (2 * T**2)) / (1 - 1 / (2 * T**2)))
    assert cr_acord([1.0], 1) <= 2 * c + 1 + 1e-12
    assert competitive_bound(2.0, [1.0], T, 3.0, 0.5, 2.0) == pytest.approx(cr_acord([1.0], T) * 2.0 + (1 + 3.0 * 0.25 / 2.0) / (4 * T))


def test_kt_formula_pieces():
    L = 4.0
    # quoted to four digits as 0.2010; the exact value is 0.20089
    assert math.log(L / (L - 0.728)) == pytest.approx(0.2010, abs=2e-4)
    lam, mus = np.full(3, lambda1_of_mu(1.0)), np.ones(3)
    pol = KtPolicy.bounded(2.0, 1.0)
    a1 = kt_log_argument(pol, 0.728, 1.0, 1.0, lam, mus, 10)
    a2 = kt_log_argument(pol, 0.728, 1.0, 1.0, lam, mus, 20)
    assert a2 / a1 == pytest.approx(16.0)
    want = 10**4 * 128 * 3 * (2.0 + 0.5) * (1 + lam[0]) / (0.728 * lam[0]) ** 2
    assert a1 == pytest.approx(want)
    K = compute_Kt(pol, 0.728, 1.0, 1.0, lam, mus, 10)
    assert K == math.ceil(math.log(a1) / math.log(L / (L - 0.728)))
    # near the fastest contraction the count collapses to its floor
    assert compute_Kt(KtPolicy.crawl(), 3.9999999, 1.0, 1.0, lam, mus, 1, F0=1e-30) == 1
    with pytest.raises(ValueError):
        compute_Kt(pol, 4.0, 1.0, 1.0, lam, mus, 10)
    assert compute_Kt(KtPolicy.fixed(7), 0.1, 1.0, 1.0, lam, mus, 10) == 7


def test_policy_parse():
    assert KtPolicy.parse("fixed:12") == KtPolicy.fixed(12)
    assert KtPolicy.parse("bounded:2:3") == KtPolicy.bounded(2.0, 3.0)
    assert KtPolicy.parse("crawl") == KtPolicy.crawl()
    assert KtPolicy.parse("eps:1e-3") == KtPolicy.epsilon(1e-3)
    for bad in ("fixed:0", "nope", "eps:-1"):
        with pytest.raises(ValueError):
            KtPolicy.parse(bad)


def _harness(inst):
    return Harness(inst, "acord")


def test_uncoupled_round_is_robd_step(rng):
    inst = random_quadratic_instance(rng, 4, 1, [build_d_regular(4, 2)], d=2, beta=0.0)
    states = init_states(inst)
    _, x = acord_round(_harness(inst), inst, 1, states, 1)
    lam = lambdas_of(inst)
    alpha, v = inst.quadratic_arrays
    want = (2 * alpha[0][:, None] * v[0] + lam[:, None] * inst.x0) / (2 * alpha[0] + lam)[:, None]
    assert np.allclose(x, want, atol=1e-14)


def test_symmetric_agents_stay_equal():
    g = GraphSnapshot(2, [(0, 1)])
    inst = Instance(1, 2, 1, 3.0, 1.0, 1.0, [[quadratic(1.0, [2.0]), quadratic(1.0, [2.0])]], [g], np.ones((2, 1)))
    for warm in (True, False):
        states = init_states(inst)
        _, x = acord_round(_harness(inst), inst, 1, states, 5, warm_start=warm)
        assert x[0, 0] == x[1, 0]
        assert states[0].z_local[(0, 1)][0] == states[1].z_local[(0, 1)][0]
    # the cold start ends with an exchange, so z sits on the shared action
    assert states[0].z_local[(0, 1)][0] == x[0, 0]


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 3), full=st.booleans(), warm=st.booleans())
def test_iterates_match_reference_alternating_minimization(seed, d, full, warm):
    rng = np.random.default_rng(seed)
    N = int(rng.integers(2, 7))
    g = random_graph(rng, N, full=(d, 0.5, 2.0) if full else None)
    m, l = (0.5, 2.0) if full else (1.0, 1.0)
    inst = random_quadratic_instance(rng, N, 1, [g], d=d, beta=float(rng.uniform(0.1, 3)), m=m, l=l)
    K = int(rng.integers(1, 8))
    states = init_states(inst)
    _, x = acord_round(_harness(inst), inst, 1, states, K, warm_start=warm)
    start = None if warm else (np.zeros((N, d)), {e: np.zeros(d) for e in g.edges})
    ref = am_reference(inst, 1, inst.x0, K, start=start)[-1][0]
    assert np.abs(x - ref).max() < 1e-10


def test_custom_cost_path_matches_quadratic(rng):
    g = build_d_regular(6, 3)
    inst = random_quadratic_instance(rng, 6, 3, [g], d=2, beta=0.8)
    rows = [[HittingCostSpec(CustomCost(c.kind.value, c.kind.gradient, c.kind.prox, c.kind.minimizer), c.mu) for c in row] for row in inst.costs]
    custom = Instance(3, 6, 2, 0.8, 1.0, 1.0, rows, inst.graphs, inst.x0)
    a = run_acord(inst, KtPolicy.fixed(9))[0].x
    b = run_acord(custom, KtPolicy.fixed(9))[0].x
    assert np.abs(a - b).max() < 1e-10


def test_converges_to_exact_round(rng):
    g = build_d_regular(4, 2)
    inst = random_quadratic_instance(rng, 4, 3, [g], d=2, beta=1.0)
    traj, _, _ = run_acord(inst, KtPolicy.fixed(500))
    for t in range(1, 4):
        x, _, _ = robd_round_exact(inst, t, traj.previous(t))
        assert np.abs(traj.x[t - 1] - x).max() < 1e-6


def test_single_agent_reproduces_robd():
    inst = generate_lower_bound_instance(1, 30, 1.0, 1e6, "symmetric")
    traj, _, log = run_acord(inst, KtPolicy.crawl())
    lam = lambda1_of_mu(1.0)
    prev = 0.0
    for t in range(1, inst.T + 1):
        c = inst.cost(t, 0).kind
        want = (2 * c.alpha * c.v[0] + lam * prev) / (2 * c.alpha + lam)
        assert traj.x[t - 1, 0, 0] == pytest.approx(want, rel=1e-12, abs=1e-15)
        prev = traj.x[t - 1, 0, 0]
    assert len(log) == 0


def test_crawl_ring_and_components():
    ring = build_d_regular(5, 2)
    inst = random_quadratic_instance(np.random.default_rng(0), 5, 1, [ring], beta=1.0)
    h = _harness(inst)
    states = init_states(inst)
    F0, K = network_crawl(h, 1, states, KtPolicy.crawl(), sigma=0.5)
    total = float(inst.hitting_at_zero(1).sum() + sum(0.5 * s.lambda1 * float(s.x_prev @ s.x_prev) for s in states))
    assert np.allclose(F0, total, rtol=1e-12)
    assert len(set(K.tolist())) == 1
    assert h.log.count(kind="crawl") == 2 * 5 * 2
    two = GraphSnapshot(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
    inst2 = random_quadratic_instance(np.random.default_rng(1), 6, 1, [two], beta=1.0)
    h2 = _harness(inst2)
    F0, K = network_crawl(h2, 1, init_states(inst2), KtPolicy.crawl(), sigma=0.5)
    assert len(set(F0[:3].tolist())) == 1 and len(set(F0[3:].tolist())) == 1
    assert len(set(K[:3].tolist())) == 1 and len(set(K[3:].tolist())) == 1


def test_crawl_single_agent_no_messages():
    inst = generate_lower_bound_instance(1, 2, 1.0, 10.0, "symmetric")
    h = _harness(inst)
    F0, K = network_crawl(h, 1, init_states(inst), KtPolicy.crawl(), None)
    assert len(h.log) == 0 and K.tolist() == [1]


def test_derived_policies_respect_guarantee(rng):
    g = complete_graph(4)
    inst = random_quadratic_instance(rng, 4, 5, [g], d=1, beta=0.5, alpha_range=(1.0, 2.0))
    _, opt = offline_opt(inst)
    bound = competitive_bound(opt.total, inst.mus, inst.T, inst.beta, inst.m, inst.l)
    for pol in (KtPolicy.crawl(), KtPolicy.epsilon(1e-2), KtPolicy.bounded(1e4, 30.0)):
        _, rep, log = run_acord(inst, pol)
        assert rep.total <= bound
        assert all(info["K"].min() >= 1 for info in log.round_info.values())


def test_time_varying_graph(rng):
    graphs = [build_d_regular(6, 2), complete_graph(6), GraphSnapshot(6, [(0, 1)])]
    inst = random_quadratic_instance(rng, 6, 3, graphs, d=1, beta=1.0)
    traj, _, log = run_acord(inst, KtPolicy.fixed(400))
    for t in range(1, 4):
        x, _, _ = robd_round_exact(inst, t, traj.previous(t))
        assert np.abs(traj.x[t - 1] - x).max() < 1e-6
    assert log.round_info[3]["disconnected"]
