"""Objective evaluation: hitting, switching and dissimilarity costs, and the
edge-augmented round objective used by the decentralized solver."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .graph import EdgeCoupling, GraphSnapshot, ScaledIdentity
from .instance import Instance

__all__ = [
    "CostReport",
    "Trajectory",
    "dissimilarity",
    "round_dissimilarity",
    "total_cost",
    "surrogate_F",
    "coupled_objective",
    "midpoints",
    "write_cost_csv",
    "read_cost_csv",
]


@dataclass(frozen=True)
class Trajectory:
    """Actions ``x[t-1, i]`` for rounds ``t = 1..T`` and the round-0 anchor."""

    x: np.ndarray  # (T, N, d)
    x_prev0: np.ndarray  # (N, d)

    def __post_init__(self):
        x = np.asarray(self.x, float)
        if x.ndim != 3:
            raise ValueError("trajectory must have shape (T, N, d)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x_prev0", np.asarray(self.x_prev0, float).reshape(x.shape[1], x.shape[2]))

    @property
    def T(self) -> int:
        return self.x.shape[0]

    def previous(self, t: int) -> np.ndarray:
        """Actions at round ``t - 1`` (the anchor for ``t = 1``)."""
        return self.x_prev0 if t == 1 else self.x[t - 2]


@dataclass(frozen=True)
class CostReport:
    """Cumulative cost split into its three terms, with a per-round breakdown.

    ``per_round`` has shape ``(T, 3)`` with columns hitting, switching,
    dissimilarity.
    """

    hitting: float
    switching: float
    dissimilarity: float
    total: float
    per_round: np.ndarray

    @classmethod
    def from_rounds(cls, per_round: np.ndarray) -> "CostReport":
        per_round = np.asarray(per_round, float).reshape(-1, 3)
        h, s, q = (float(v) for v in per_round.sum(axis=0))
        return cls(h, s, q, h + s + q, per_round)


def dissimilarity(edge: EdgeCoupling, xi, xj, beta: float) -> float:
    """``(beta/2) ||A xi - A xj||^2`` for one edge."""
    xi = np.atleast_1d(np.asarray(xi, float))
    xj = np.atleast_1d(np.asarray(xj, float))
    if xi.shape != xj.shape:
        raise ValueError(f"dimension mismatch {xi.shape} vs {xj.shape}")
    if isinstance(edge, ScaledIdentity):
        diff = xi - xj
        return float(0.5 * beta * edge.w * edge.w * (diff @ diff))
    if edge.A.shape[1] != xi.shape[0]:
        raise ValueError(f"coupling expects dimension {edge.A.shape[1]}, got {xi.shape[0]}")
    diff = edge.A @ (xi - xj)
    return float(0.5 * beta * (diff @ diff))


def _edge_quadform(g: GraphSnapshot, x: np.ndarray, d: int) -> float:
    """``sum_e ||A_e (x_i - x_j)||^2`` over the edges of ``g``."""
    if not g.edges:
        return 0.0
    e = g.edge_array
    diff = x[e[:, 0]] - x[e[:, 1]]
    if g.all_scaled_identity:
        return float(np.sum(g.edge_weights_sq * np.einsum("ed,ed->e", diff, diff)))
    G = g.grams(d)
    return float(np.einsum("ed,edf,ef->", diff, G, diff))


def round_dissimilarity(g: GraphSnapshot, x: np.ndarray, beta: float) -> float:
    """Total dissimilarity cost of actions ``x`` (shape ``(N, d)``) on graph ``g``."""
    x = np.asarray(x, float)
    return 0.5 * beta * _edge_quadform(g, x, x.shape[1])


def total_cost(inst: Instance, traj: Trajectory) -> CostReport:
    """Cumulative hitting + switching + dissimilarity cost of a trajectory."""
    if traj.x.shape != (inst.T, inst.N, inst.d):
        raise ValueError(f"trajectory shape {traj.x.shape} does not match instance {(inst.T, inst.N, inst.d)}")
    x = traj.x
    prev = np.concatenate([traj.x_prev0[None], x[:-1]], axis=0)
    step = x - prev
    switching = 0.5 * np.einsum("tnd,tnd->t", step, step)
    if inst.is_quadratic:
        alpha, v = inst.quadratic_arrays
        r = x - v
        hitting = np.einsum("tn,tnd,tnd->t", alpha, r, r)
    else:
        hitting = np.array([sum(inst.costs[t][i].value(x[t, i]) for i in range(inst.N)) for t in range(inst.T)])
    diss = np.zeros(inst.T)
    if inst.beta > 0:
        diss = np.array([round_dissimilarity(inst.graphs[t], x[t], inst.beta) for t in range(inst.T)])
    return CostReport.from_rounds(np.column_stack([hitting, switching, diss]))


def midpoints(g: GraphSnapshot, x: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """Edge-averaged auxiliary variables ``z_e = (x_i + x_j) / 2``."""
    return {(i, j): 0.5 * (x[i] + x[j]) for i, j in g.edges}


def surrogate_F(
    inst: Instance,
    t: int,
    x: np.ndarray,
    z: Mapping[tuple[int, int], np.ndarray],
    x_prev: np.ndarray,
    lambdas,
) -> float:
    """Edge-augmented round objective.

    ``sum_i f_t^i(x_i) + (lambda_i/2)||x_i - x_prev_i||^2
    + beta * sum_i sum_{e incident to i} ||A_e x_i - A_e z_e||^2``

    With ``z_e`` at the edge midpoints this equals :func:`coupled_objective`.
    """
    g = inst.graph(t)
    x = np.asarray(x, float).reshape(inst.N, inst.d)
    x_prev = np.asarray(x_prev, float).reshape(inst.N, inst.d)
    lambdas = np.asarray(lambdas, float)
    step = x - x_prev
    val = sum(inst.cost(t, i).value(x[i]) for i in range(inst.N))
    val += 0.5 * float(np.sum(lambdas * np.einsum("nd,nd->n", step, step)))
    aug = 0.0
    for e in g.edges:
        if e not in z:
            raise KeyError(f"missing auxiliary variable for edge {e}")
        c = g.couplings[e]
        ze = np.asarray(z[e], float)
        for node in e:
            r = c.apply(x[node] - ze)
            aug += float(r @ r)
    return float(val + inst.beta * aug)


def coupled_objective(inst: Instance, t: int, x: np.ndarray, x_prev: np.ndarray, lambdas) -> float:
    """Per-round regularized objective with the graph coupling written on node pairs."""
    g = inst.graph(t)
    x = np.asarray(x, float).reshape(inst.N, inst.d)
    step = x - np.asarray(x_prev, float).reshape(inst.N, inst.d)
    val = sum(inst.cost(t, i).value(x[i]) for i in range(inst.N))
    val += 0.5 * float(np.sum(np.asarray(lambdas, float) * np.einsum("nd,nd->n", step, step)))
    return float(val + round_dissimilarity(g, x, inst.beta))


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

_COLUMNS = ["t", "hitting", "switching", "dissimilarity", "total"]


def write_cost_csv(report: CostReport, path) -> None:
    """One row per round plus a ``total`` row; floats use round-trip repr."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_COLUMNS)
        for t, (h, s, q) in enumerate(report.per_round, 1):
            w.writerow([t, repr(float(h)), repr(float(s)), repr(float(q)), repr(float(h + s + q))])
        w.writerow(["total", repr(report.hitting), repr(report.switching), repr(report.dissimilarity), repr(report.total)])


def read_cost_csv(path) -> CostReport:
    rows = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            if row["t"] == "total":
                continue
            rows.append([float(row["hitting"]), float(row["switching"]), float(row["dissimilarity"])])
    return CostReport.from_rounds(np.array(rows))
