"""Centralized reference solvers.

* :func:`robd_round_exact` -- exact minimizer of one regularized round given the
  previous actions (the target the decentralized iteration converges to).
* :func:`offline_opt` -- hindsight optimal trajectory of the whole horizon.
* :func:`am_reference` -- plain alternating minimization over ``(x, z)``,
  recorded iterate by iterate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .costs import CostReport, Trajectory, midpoints, surrogate_F, total_cost
from .graph import GraphSnapshot
from .instance import Instance

__all__ = [
    "SolveConfig",
    "ConvergenceError",
    "lambdas_of",
    "round_system",
    "stationarity_residual",
    "robd_round_exact",
    "offline_opt",
    "am_reference",
    "assemble_horizon_qp",
    "solve_spd",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
BANDED_LIMIT = 1_000_000


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    """Tolerance (relative residual) and iteration cap for iterative paths."""

    tol: float = 1e-10
    max_iter: int = 100_000

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


def lambdas_of(inst: Instance) -> np.ndarray:
    from .acord import lambda1_of_mu

    return np.array([lambda1_of_mu(mu) for mu in inst.mus])


# --------------------------------------------------------------------------
# Linear algebra helpers
# --------------------------------------------------------------------------


def _laplacian_entries(g: GraphSnapshot, d: int, beta: float, offset: int = 0, nodes_map=None):
    """COO triplets of ``beta * sum_e L_e (x) A_e^T A_e`` for the edges of ``g``."""
    if not g.edges or beta == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0)
    e = g.edge_array
    if nodes_map is not None:
        e = nodes_map[e]
    G = beta * g.grams(d)  # (E, d, d)
    a = np.arange(d)
    ii = (offset + e[:, 0, None] * d + a)[:, :, None]  # (E, d, 1)
    jj = (offset + e[:, 1, None] * d + a)[:, None, :]  # (E, 1, d)
    ii_c = (offset + e[:, 0, None] * d + a)[:, None, :]
    jj_r = (offset + e[:, 1, None] * d + a)[:, :, None]
    shape = G.shape
    rows = np.concatenate([np.broadcast_to(ii, shape), np.broadcast_to(jj_r, shape), np.broadcast_to(ii, shape), np.broadcast_to(jj_r, shape)], axis=None)
    cols = np.concatenate([np.broadcast_to(ii_c, shape), np.broadcast_to(jj, shape), np.broadcast_to(jj, shape), np.broadcast_to(ii_c, shape)], axis=None)
    vals = np.concatenate([G, G, -G, -G], axis=None)
    return rows, cols, vals


def round_system(inst: Instance, t: int, x_prev: np.ndarray, lambdas) -> tuple[scipy.sparse.csr_matrix, np.ndarray]:
    """Normal equations ``H x = b`` of one regularized round (quadratic costs).

    ``H = diag(2 alpha_i + lambda_i) (x) I_d + beta * L``, where ``L`` is the graph
    Laplacian with matrix weights ``A_e^T A_e``, and
    ``b = 2 alpha v + lambda x_prev``.
    """
    N, d = inst.N, inst.d
    alpha, v = inst.quadratic_arrays
    a = alpha[t - 1]
    lam = np.asarray(lambdas, float)
    diag = np.repeat(2 * a + lam, d)
    r, c, val = _laplacian_entries(inst.graph(t), d, inst.beta)
    idx = np.arange(N * d)
    H = scipy.sparse.csr_matrix(
        (np.concatenate([diag, val]), (np.concatenate([idx, r]), np.concatenate([idx, c]))), shape=(N * d, N * d)
    )
    b = (2 * a[:, None] * v[t - 1] + lam[:, None] * np.asarray(x_prev, float).reshape(N, d)).ravel()
    return H, b


def solve_spd(H: scipy.sparse.spmatrix, b: np.ndarray, tol: float = 1e-10, bandwidth: int | None = None, max_iter: int = 100_000) -> np.ndarray:
    """Solve a symmetric positive-definite sparse system.

    Dense Cholesky up to ``DENSE_LIMIT`` unknowns, banded Cholesky when a
    bandwidth is supplied and the size is below ``BANDED_LIMIT``, otherwise
    Jacobi-preconditioned conjugate gradients.
    """
    n = H.shape[0]
    if n <= DENSE_LIMIT:
        c = scipy.linalg.cho_factor(H.toarray(), lower=False, check_finite=False)
        return scipy.linalg.cho_solve(c, b, check_finite=False)
    if bandwidth is not None and n <= BANDED_LIMIT:
        coo = scipy.sparse.triu(H, format="coo")
        ab = np.zeros((bandwidth + 1, n))
        ab[bandwidth + coo.row - coo.col, coo.col] = coo.data
        return scipy.linalg.solveh_banded(ab, b, lower=False, check_finite=False)
    diag = H.diagonal()
    M = scipy.sparse.linalg.LinearOperator(H.shape, matvec=lambda r: r / diag)
    x, info = scipy.sparse.linalg.cg(H, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M)
    if info != 0:
        raise ConvergenceError(f"conjugate gradient did not converge (info={info})")
    return x


def _check_residual(H, x, b, tol, what):
    res = H @ x - b
    scale = scipy.sparse.linalg.norm(H, np.inf) * np.max(np.abs(x), initial=0.0) + np.max(np.abs(b), initial=0.0)
    rel = np.max(np.abs(res), initial=0.0) / max(scale, 1e-300)
    if rel > max(tol, 1e-13):
        raise ConvergenceError(f"{what}: relative residual {rel:.3e} exceeds {tol:.1e}")


# --------------------------------------------------------------------------
# Per-round exact solve
# --------------------------------------------------------------------------


def stationarity_residual(inst: Instance, t: int, x: np.ndarray, x_prev: np.ndarray, lambdas) -> np.ndarray:
    """Per-agent gradient of the coupled round objective, shape ``(N, d)``.

    ``grad f_i(x_i) + lambda_i (x_i - x_prev_i) + beta sum_j A^T A (x_i - x_j)``
    """
    x = np.asarray(x, float).reshape(inst.N, inst.d)
    x_prev = np.asarray(x_prev, float).reshape(inst.N, inst.d)
    lam = np.asarray(lambdas, float)[:, None]
    res = np.array([inst.cost(t, i).gradient(x[i]) for i in range(inst.N)]) + lam * (x - x_prev)
    g = inst.graph(t)
    if g.edges and inst.beta:
        e = g.edge_array
        flow = np.einsum("edf,ef->ed", g.grams(inst.d), x[e[:, 0]] - x[e[:, 1]])
        np.add.at(res, e[:, 0], inst.beta * flow)
        np.add.at(res, e[:, 1], -inst.beta * flow)
    return res


def _gauss_seidel_round(inst, t, x_prev, lambdas, cfg):
    """Block coordinate descent on the coupled objective using each cost's prox."""
    N, d = inst.N, inst.d
    g = inst.graph(t)
    lam = np.asarray(lambdas, float)
    x = np.asarray(x_prev, float).reshape(N, d).copy()
    nbrs = g.adjacency
    grams = {e: g.couplings[e].gram(d) for e in g.edges}
    eye = np.eye(d)
    scale = 1.0 + np.max(np.abs(x), initial=0.0)
    for sweep in range(cfg.max_iter):
        for i in range(N):
            H = lam[i] * eye
            b = lam[i] * x_prev[i]
            for j in nbrs[i]:
                G = inst.beta * grams[(i, j) if i < j else (j, i)]
                H = H + G
                b = b + G @ x[j]
            x[i] = inst.cost(t, i).prox(H, b)
        res = np.max(np.abs(stationarity_residual(inst, t, x, x_prev, lam)))
        scale = 1.0 + np.max(np.abs(x))
        if res <= cfg.tol * scale:
            return x
    raise ConvergenceError(f"round {t}: block solve did not reach tol {cfg.tol} in {cfg.max_iter} sweeps")


def robd_round_exact(inst: Instance, t: int, x_prev: np.ndarray, cfg: SolveConfig | None = None, lambdas=None):
    """Exact minimizer of the regularized round-``t`` problem.

    Parameters
    ----------
    inst : Instance
    t : int
        Round (1-indexed).
    x_prev : ndarray, shape (N, d)
        Actions at round ``t - 1``.
    cfg : SolveConfig, optional
    lambdas : array_like, optional
        Regularizer weights; default ``lambda1(mu_i)`` per agent.

    Returns
    -------
    x : ndarray, shape (N, d)
    z : dict
        Edge midpoints of ``x``.
    F_value : float
        Value of the edge-augmented objective at ``(x, z)``.
    """
    cfg = cfg or SolveConfig()
    lam = lambdas_of(inst) if lambdas is None else np.asarray(lambdas, float)
    x_prev = np.asarray(x_prev, float).reshape(inst.N, inst.d)
    if inst.is_quadratic:
        H, b = round_system(inst, t, x_prev, lam)
        if H.shape[0] <= DENSE_LIMIT:
            x = solve_spd(H, b)
        else:
            x = solve_spd(H, b, tol=cfg.tol * 1e-2, max_iter=cfg.max_iter)
        _check_residual(H, x, b, cfg.tol, f"round {t}")
        x = x.reshape(inst.N, inst.d)
    else:
        x = _gauss_seidel_round(inst, t, x_prev, lam, cfg)
    z = midpoints(inst.graph(t), x)
    return x, z, surrogate_F(inst, t, x, z, x_prev, lam)


# --------------------------------------------------------------------------
# Offline optimum
# --------------------------------------------------------------------------


def assemble_horizon_qp(
    alpha: np.ndarray,
    v: np.ndarray,
    graphs,
    beta: float,
    anchor: np.ndarray,
    hit_mask: np.ndarray | None = None,
    nodes_map=None,
):
    """Normal equations of a multi-round quadratic problem.

    Minimizes ``sum_t sum_i mask_i alpha_ti ||x_ti - v_ti||^2 + 1/2 ||x_ti - x_(t-1)i||^2
    + (beta/2) sum_e ||A_e (x_ti - x_tj)||^2`` with ``x_0 = anchor``.

    Parameters
    ----------
    alpha : (H, n)
    v : (H, n, d)
    graphs : sequence of GraphSnapshot, length H
        Per-round graphs; with ``nodes_map`` their node labels are mapped to
        local indices ``0..n-1`` (edges must already be restricted).
    anchor : (n, d)
    hit_mask : (n,) bool, optional
        Agents whose hitting costs are included (all by default).

    Returns
    -------
    H : csr_matrix, b : ndarray, bandwidth : int
        Unknowns are ordered time-major: ``index = (t * n + i) * d + k``.
    """
    Hh, n = alpha.shape
    d = v.shape[2]
    nd = n * d
    mask = np.ones(n) if hit_mask is None else np.asarray(hit_mask, float)
    w = 2 * alpha * mask  # (H, n)
    sw = np.full((Hh, n), 2.0)
    sw[-1] = 1.0
    diag = np.repeat((w + sw).ravel(), d)
    idx = np.arange(Hh * nd)
    rows = [idx]
    cols = [idx]
    vals = [diag]
    # time coupling between (t, i) and (t-1, i)
    if Hh > 1:
        upper = np.arange(nd, Hh * nd)
        rows += [upper, upper - nd]
        cols += [upper - nd, upper]
        vals += [-np.ones(upper.size), -np.ones(upper.size)]
    if beta:
        for t, g in enumerate(graphs):
            r, c, val = _laplacian_entries(g, d, beta, offset=t * nd, nodes_map=nodes_map)
            rows.append(r)
            cols.append(c)
            vals.append(val)
    H = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(Hh * nd, Hh * nd)
    )
    b = (w[:, :, None] * v).reshape(Hh, nd)
    b[0] += np.asarray(anchor, float).reshape(nd)
    return H, b.ravel(), nd


def offline_opt(inst: Instance, cfg: SolveConfig | None = None) -> tuple[Trajectory, CostReport]:
    """Hindsight optimal trajectory of the whole horizon (quadratic costs).

    The normal equations are block tridiagonal in time; they are solved by a
    banded Cholesky factorization (dense below 2000 unknowns), and by
    preconditioned conjugate gradients above ``10**6`` unknowns.
    """
    cfg = cfg or SolveConfig()
    if not inst.is_quadratic:
        raise ValueError("offline optimum requires quadratic hitting costs")
    alpha, v = inst.quadratic_arrays
    H, b, bw = assemble_horizon_qp(alpha, v, inst.graphs, inst.beta, inst.x0)
    x = solve_spd(H, b, tol=cfg.tol * 1e-2, bandwidth=bw, max_iter=cfg.max_iter)
    _check_residual(H, x, b, cfg.tol, "offline optimum")
    traj = Trajectory(x.reshape(inst.T, inst.N, inst.d), inst.x0.copy())
    return traj, total_cost(inst, traj)


# --------------------------------------------------------------------------
# Alternating minimization reference
# --------------------------------------------------------------------------


def am_reference(inst: Instance, t: int, x_prev: np.ndarray, K: int, lambdas=None, start=None):
    """Run ``K`` rounds of exact alternating minimization over ``(x, z)``.

    Starts from ``x_0 = x_prev`` and ``z_0`` at the edge midpoints of
    ``x_prev`` (or from ``start = (x0, z0)``).  The x-step minimizes the
    augmented objective over all agents for fixed ``z``; the z-step sets every
    ``z_e`` to its endpoint average.

    Returns
    -------
    list of (x_k, z_k, F_k) for ``k = 0..K``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    N, d = inst.N, inst.d
    lam = lambdas_of(inst) if lambdas is None else np.asarray(lambdas, float)
    x_prev = np.asarray(x_prev, float).reshape(N, d)
    g = inst.graph(t)
    grams = {e: g.couplings[e].gram(d) for e in g.edges}
    incident = [[e for e in g.edges if i in e] for i in range(N)]
    if start is None:
        x = x_prev.copy()
        z = midpoints(g, x)
    else:
        x = np.asarray(start[0], float).reshape(N, d).copy()
        z = {e: np.asarray(start[1][e], float).copy() for e in g.edges}
    hist = [(x.copy(), {e: ze.copy() for e, ze in z.items()}, surrogate_F(inst, t, x, z, x_prev, lam))]
    eye = np.eye(d)
    for _ in range(K):
        new = np.empty_like(x)
        for i in range(N):
            H = lam[i] * eye
            b = lam[i] * x_prev[i]
            for e in incident[i]:
                G = 2 * inst.beta * grams[e]
                H = H + G
                b = b + G @ z[e]
            new[i] = inst.cost(t, i).prox(H, b)
        x = new
        z = midpoints(g, x)
        hist.append((x.copy(), {e: ze.copy() for e, ze in z.items()}, surrogate_F(inst, t, x, z, x_prev, lam)))
    return hist
