"""Comparison policies.

``run_lpc``            neighbourhood model-predictive control with radius ``r`` and window ``k``
``run_ftm``            follow the minimizer
``run_local``          greedy per-agent step with unit switching weight
``run_local_robd``     per-agent regularized step that ignores the graph
``run_consensus``      one shared action for all agents
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .costs import CostReport, Trajectory, total_cost
from .graph import GraphSnapshot, r_hop_neighborhood
from .instance import Instance
from .oracles import DENSE_LIMIT, assemble_horizon_qp, lambdas_of, solve_spd
from .simnet import CommLog, Harness

__all__ = [
    "LpcConfig",
    "run_lpc",
    "run_ftm",
    "run_local",
    "run_local_robd",
    "run_consensus",
    "lpc_flops_estimate",
    "acord_flops_estimate",
]


@dataclass(frozen=True)
class LpcConfig:
    """Communication radius ``r`` and prediction window ``k`` (``k = 1``: no predictions)."""

    r: int
    k: int = 1

    def __post_init__(self):
        if self.r < 1 or self.k < 1:
            raise ValueError(f"need r >= 1 and k >= 1, got r={self.r}, k={self.k}")


@dataclass(frozen=True)
class _Ball:
    nodes: np.ndarray  # sorted global ids
    own: int  # local index of the centre
    hit: np.ndarray  # bool mask, nodes within r-1 hops
    graph: GraphSnapshot  # induced subgraph, relabeled to 0..len(nodes)-1
    lap: np.ndarray  # dense beta * sum_e L_e (x) A_e^T A_e of the induced subgraph


def _laplacian_dense(g: GraphSnapshot, d: int, beta: float) -> np.ndarray:
    n = g.n * d
    L = np.zeros((n, n))
    if beta == 0 or not g.edges:
        return L
    G = beta * g.grams(d)
    for (a, b), Ge in zip(g.edges, G):
        ia, ib = slice(a * d, (a + 1) * d), slice(b * d, (b + 1) * d)
        L[ia, ia] += Ge
        L[ib, ib] += Ge
        L[ia, ib] -= Ge
        L[ib, ia] -= Ge
    return L


def _ball(g: GraphSnapshot, i: int, r: int, d: int, beta: float) -> _Ball:
    nodes = np.array(sorted(r_hop_neighborhood(g, i, r)), dtype=np.int64)
    inner = r_hop_neighborhood(g, i, r - 1)
    pos = {int(u): k for k, u in enumerate(nodes)}
    sub = {(pos[a], pos[b]): c for (a, b), c in g.couplings.items() if a in pos and b in pos}
    sg = GraphSnapshot(len(nodes), sub)
    return _Ball(nodes, pos[i], np.array([int(u) in inner for u in nodes]), sg, _laplacian_dense(sg, d, beta))


def _solve_window_dense(b: _Ball, a_w, v_w, anchor, d: int) -> np.ndarray:
    """Dense counterpart of :func:`assemble_horizon_qp` plus a Cholesky solve."""
    Hh, n = a_w.shape
    nd = n * d
    w = 2 * a_w * b.hit
    sw = np.full((Hh, n), 2.0)
    sw[-1] = 1.0
    H = np.zeros((Hh * nd, Hh * nd))
    for t in range(Hh):
        blk = slice(t * nd, (t + 1) * nd)
        H[blk, blk] = b.lap
    k = np.arange(Hh * nd)
    H[k, k] += np.repeat((w + sw).ravel(), d)
    if Hh > 1:
        up = np.arange(nd, Hh * nd)
        H[up, up - nd] = -1.0
        H[up - nd, up] = -1.0
    rhs = (w[:, :, None] * v_w).reshape(Hh, nd)
    rhs[0] += anchor.reshape(nd)
    c = scipy.linalg.cho_factor(H, lower=False, check_finite=False)
    return scipy.linalg.cho_solve(c, rhs.ravel(), check_finite=False)


def run_lpc(inst: Instance, cfg: LpcConfig, harness: Harness | None = None):
    """Neighbourhood MPC: each agent plans over its ``r``-hop ball and ``k`` rounds.

    At round ``t`` agent ``i`` minimizes, over actions of every node in its
    ``r``-hop ball for rounds ``t .. t+k'-1`` (``k' = min(k, T-t+1)``), the
    hitting costs of nodes within ``r-1`` hops plus unit-weight switching
    costs and dissimilarity costs of the ball's induced subgraph, anchored at
    the committed round ``t-1`` actions.  Only its own round-``t`` action is
    kept.  The cost descriptors it needs are shipped to it over the graph and
    charged per hop.

    Returns
    -------
    (Trajectory, CostReport, CommLog)
    """
    if not inst.is_static:
        raise ValueError("LPC assumes a static graph; got a time-varying schedule")
    if not inst.is_quadratic:
        raise ValueError("LPC is implemented for quadratic hitting costs")
    harness = harness or Harness(inst, f"lpc({cfg.r},{cfg.k})")
    g = inst.graph(1)
    N, d, T = inst.N, inst.d, inst.T
    alpha, v = inst.quadratic_arrays
    balls = [_ball(g, i, cfg.r, d, inst.beta) for i in range(N)]
    X = np.empty((T, N, d))
    prev = inst.x0.copy()
    log = harness.log
    for t in range(1, T + 1):
        kk = min(cfg.k, T - t + 1)
        window = slice(t - 1, t - 1 + kk)
        cur = np.empty((N, d))
        for i, b in enumerate(balls):
            harness.ship_functions(t, i, b.nodes, payload_dim=(d + 2) * kk + d, r=cfg.r)
            with harness.timed(i):
                a_w = alpha[window][:, b.nodes]
                v_w = v[window][:, b.nodes]
                if kk * b.nodes.size * d <= DENSE_LIMIT:
                    sol = _solve_window_dense(b, a_w, v_w, prev[b.nodes], d)
                else:
                    H, rhs, bw = assemble_horizon_qp(a_w, v_w, [b.graph] * kk, inst.beta, prev[b.nodes], b.hit)
                    sol = solve_spd(H, rhs, bandwidth=bw)
            n_b = b.nodes.size
            cur[i] = sol[b.own * d : (b.own + 1) * d]
            log.per_agent_ops[i] += float((n_b * kk * d) ** 3)
        X[t - 1] = cur
        prev = cur
    traj = Trajectory(X, inst.x0.copy())
    return traj, total_cost(inst, traj), log


def _per_agent(inst: Instance, step) -> tuple[Trajectory, CostReport]:
    X = np.empty((inst.T, inst.N, inst.d))
    prev = inst.x0.copy()
    for t in range(1, inst.T + 1):
        for i in range(inst.N):
            X[t - 1, i] = step(t, i, prev[i])
        prev = X[t - 1]
    traj = Trajectory(X, inst.x0.copy())
    return traj, total_cost(inst, traj)


def run_ftm(inst: Instance):
    """``x_t^i = argmin f_t^i``."""
    return _per_agent(inst, lambda t, i, xp: inst.cost(t, i).minimizer())


def run_local(inst: Instance):
    """``x_t^i = argmin f_t^i(x) + 1/2 ||x - x_{t-1}^i||^2``."""
    eye = np.eye(inst.d)
    return _per_agent(inst, lambda t, i, xp: inst.cost(t, i).prox(eye, xp))


def run_local_robd(inst: Instance):
    """``x_t^i = argmin f_t^i(x) + (lambda_i/2) ||x - x_{t-1}^i||^2``; blind to the graph."""
    lam = lambdas_of(inst)
    eye = np.eye(inst.d)
    return _per_agent(inst, lambda t, i, xp: inst.cost(t, i).prox(lam[i] * eye, lam[i] * xp))


def run_consensus(inst: Instance):
    """One shared action per round: ``argmin_x sum_i f_t^i(x) + 1/2 ||x - x_{t-1}^i||^2``."""
    N, d = inst.N, inst.d
    X = np.empty((inst.T, N, d))
    prev = inst.x0.copy()
    if inst.is_quadratic:
        alpha, v = inst.quadratic_arrays
    for t in range(1, inst.T + 1):
        if inst.is_quadratic:
            a2 = 2 * alpha[t - 1]
            x = (a2 @ v[t - 1] + prev.sum(axis=0)) / (a2.sum() + N)
        else:
            row = inst.costs[t - 1]

            def obj(x, prev=prev, row=row):
                diff = x - prev
                val = sum(c.value(x) for c in row) + 0.5 * float(np.sum(diff * diff))
                grad = sum(c.gradient(x) for c in row) + diff.sum(axis=0)
                return val, grad

            res = scipy.optimize.minimize(obj, prev.mean(axis=0), jac=True, method="BFGS", options={"gtol": 1e-10})
            x = res.x
        X[t - 1] = x
        prev = np.broadcast_to(x, (N, d)).copy()
    traj = Trajectory(X, inst.x0.copy())
    return traj, total_cost(inst, traj)


# --------------------------------------------------------------------------
# Compute models
# --------------------------------------------------------------------------


def lpc_flops_estimate(cfg: LpcConfig, g: GraphSnapshot, d: int) -> float:
    """Per-agent, per-round cubic solve model ``(|ball| k d)^3`` averaged over agents."""
    sizes = np.array([len(r_hop_neighborhood(g, i, cfg.r)) for i in range(g.n)], dtype=float)
    return float(np.mean((sizes * cfg.k * d) ** 3))


def acord_flops_estimate(Kt: float, D: float, d: int) -> float:
    """Per-agent, per-round model ``K_t * D * d^3``."""
    return float(Kt) * float(D) * float(d) ** 3
