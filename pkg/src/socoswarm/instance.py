"""Problem instances: per-round hitting costs, graph schedule and generators."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .graph import (
    EdgeCoupling,
    FullCoupling,
    GraphSnapshot,
    ScaledIdentity,
    build_d_regular,
    complete_graph,
)

__all__ = [
    "QuadraticCost",
    "CustomCost",
    "HittingCostSpec",
    "EdgeCoupling",
    "ScaledIdentity",
    "FullCoupling",
    "Instance",
    "generate_experiment_instance",
    "generate_lower_bound_instance",
    "generate_naive_failure_instance",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
    "CUSTOM_REGISTRY",
    "MAX_GENERATOR_HORIZON",
]

MAX_GENERATOR_HORIZON = 1000


@dataclass(frozen=True, eq=False)
class QuadraticCost:
    """``f(x) = alpha * ||x - v||^2`` (curvature ``2 alpha``)."""

    alpha: float
    v: np.ndarray

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))

    @property
    def dim(self) -> int:
        return self.v.shape[0]

    def value(self, x) -> float:
        r = np.asarray(x, float) - self.v
        return float(self.alpha * (r @ r))

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self.alpha * (np.asarray(x, float) - self.v)

    def prox(self, H, b) -> np.ndarray:
        """``argmin_x f(x) + x^T H x / 2 - b^T x``."""
        H = np.atleast_2d(H)
        return np.linalg.solve(H + 2.0 * self.alpha * np.eye(self.dim), b + 2.0 * self.alpha * self.v)

    def minimizer(self) -> np.ndarray:
        return self.v.copy()

    def __eq__(self, other):
        return isinstance(other, QuadraticCost) and self.alpha == other.alpha and np.array_equal(self.v, other.v)


@dataclass(frozen=True, eq=False)
class CustomCost:
    """User-supplied strongly convex hitting cost.

    Parameters
    ----------
    value, gradient : callable
        ``f(x)`` and ``grad f(x)`` for ``x`` of shape ``(d,)``.
    prox : callable
        ``prox(H, b)`` must return ``argmin_x f(x) + x^T H x / 2 - b^T x`` exactly
        for symmetric positive definite ``H``.  Every local step of the
        algorithms and oracles goes through this one contract.
    minimizer : callable, optional
        Returns ``argmin f``; needed only by follow-the-minimizer.
    name : str, optional
        Registry key used when the instance is serialized.
    """

    value: Callable
    gradient: Callable
    prox: Callable
    minimizer: Callable | None = None
    name: str | None = None


@dataclass(frozen=True, eq=False)
class HittingCostSpec:
    """A hitting cost together with its declared strong-convexity parameter ``mu``."""

    kind: QuadraticCost | CustomCost
    mu: float

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be positive, got {self.mu}")
        if isinstance(self.kind, QuadraticCost) and self.mu > 2 * self.kind.alpha * (1 + 1e-12):
            raise ValueError(f"declared mu={self.mu} exceeds the curvature 2*alpha={2 * self.kind.alpha}")

    @property
    def is_quadratic(self) -> bool:
        return isinstance(self.kind, QuadraticCost)

    def value(self, x) -> float:
        return float(self.kind.value(x))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.kind.gradient(x), float)

    def prox(self, H, b) -> np.ndarray:
        return np.asarray(self.kind.prox(H, b), float)

    def minimizer(self) -> np.ndarray:
        if isinstance(self.kind, QuadraticCost):
            return self.kind.minimizer()
        if self.kind.minimizer is None:
            raise ValueError("custom cost has no declared minimizer")
        return np.asarray(self.kind.minimizer(), float)

    def __eq__(self, other):
        return isinstance(other, HittingCostSpec) and self.mu == other.mu and self.kind == other.kind


def quadratic(alpha: float, v, mu: float | None = None) -> HittingCostSpec:
    """Shorthand for a quadratic hitting cost; ``mu`` defaults to the curvature ``2 alpha``."""
    return HittingCostSpec(QuadraticCost(alpha, v), 2.0 * alpha if mu is None else mu)


@dataclass(eq=False)
class Instance:
    """A networked smoothed online optimization problem.

    Rounds are 1-indexed in the API (``t = 1..T``); ``costs[t-1][i]`` and
    ``graphs[t-1]`` hold round ``t``.  ``x0`` is the round-0 action of every
    agent (zeros by default).
    """

    T: int
    N: int
    d: int
    beta: float
    m: float
    l: float
    costs: list[list[HittingCostSpec]]
    graphs: list[GraphSnapshot]
    x0: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.T, self.N, self.d = int(self.T), int(self.N), int(self.d)
        if self.T < 1 or self.N < 1 or self.d < 1:
            raise ValueError("T, N and d must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not (0 < self.m <= self.l):
            raise ValueError(f"need 0 < m <= l, got m={self.m}, l={self.l}")
        if len(self.costs) != self.T or any(len(row) != self.N for row in self.costs):
            raise ValueError("costs must be a T x N grid")
        if len(self.graphs) != self.T:
            raise ValueError("graph schedule must have length T")
        self.x0 = np.zeros((self.N, self.d)) if self.x0 is None else np.asarray(self.x0, float).reshape(self.N, self.d)
        mu0 = [c.mu for c in self.costs[0]]
        for t, row in enumerate(self.costs):
            for i, c in enumerate(row):
                if c.mu != mu0[i]:
                    raise ValueError(f"mu of agent {i} changes at round {t + 1}; it must be round-independent")
                if c.is_quadratic and c.kind.dim != self.d:
                    raise ValueError(f"cost ({t + 1},{i}) has dimension {c.kind.dim}, expected {self.d}")
        checked = set()
        for g in self.graphs:
            if g.n != self.N:
                raise ValueError("graph node count must equal N")
            if id(g) not in checked:
                g.check_coupling_window(self.m, self.l, self.d)
                checked.add(id(g))

    # convenience --------------------------------------------------------
    def cost(self, t: int, i: int) -> HittingCostSpec:
        return self.costs[t - 1][i]

    def graph(self, t: int) -> GraphSnapshot:
        return self.graphs[t - 1]

    @cached_property
    def mus(self) -> np.ndarray:
        return np.array([c.mu for c in self.costs[0]], dtype=float)

    @cached_property
    def is_quadratic(self) -> bool:
        return all(c.is_quadratic for row in self.costs for c in row)

    @cached_property
    def is_static(self) -> bool:
        g0 = self.graphs[0]
        return all(g is g0 or g == g0 for g in self.graphs)

    @cached_property
    def quadratic_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(alpha, v)`` with shapes ``(T, N)`` and ``(T, N, d)``; quadratic instances only."""
        if not self.is_quadratic:
            raise ValueError("instance has non-quadratic hitting costs")
        alpha = np.array([[c.kind.alpha for c in row] for row in self.costs], dtype=float)
        v = np.array([[c.kind.v for c in row] for row in self.costs], dtype=float).reshape(self.T, self.N, self.d)
        return alpha, v

    def hitting_at_zero(self, t: int) -> np.ndarray:
        zero = np.zeros(self.d)
        return np.array([c.value(zero) for c in self.costs[t - 1]])


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------


def generate_experiment_instance(
    N: int, T: int, D: int, beta: float, seed: int, alpha_floor: float = 0.1
) -> Instance:
    """Random spiky quadratic instance on a circulant D-regular ring family.

    For every agent and round, ``alpha ~ U[alpha_floor, 1]`` and with probability
    0.3 it is raised by ``2**t``; ``v ~ U[-10, 10]`` and with probability 0.1 it is
    shifted by ``eps * 1.1**t`` with a random sign ``eps``.  Actions are scalar,
    every edge carries ``ScaledIdentity(1)`` and ``mu_i = 2 * alpha_floor``.
    """
    if alpha_floor <= 0 or alpha_floor > 1:
        raise ValueError(f"alpha_floor must lie in (0, 1], got {alpha_floor}")
    if not (N > D >= 2):
        raise ValueError(f"need N > D >= 2, got N={N}, D={D}")
    if (N * D) % 2:
        raise ValueError(f"no D-regular graph with N={N}, D={D}")
    if not 1 <= T <= MAX_GENERATOR_HORIZON:
        raise ValueError(f"T must lie in 1..{MAX_GENERATOR_HORIZON} (2**t overflows beyond)")
    rng = np.random.default_rng(seed)
    tt = np.arange(1, T + 1, dtype=float)[:, None]
    base_alpha = rng.uniform(alpha_floor, 1.0, size=(T, N))
    spike = rng.random((T, N)) >= 0.7
    alpha = base_alpha + np.where(spike, 2.0**tt, 0.0)
    base_v = rng.uniform(-10.0, 10.0, size=(T, N))
    jump = rng.random((T, N)) >= 0.9
    sign = rng.choice([-1.0, 1.0], size=(T, N))
    v = base_v + np.where(jump, sign * 1.1**tt, 0.0)
    mu = 2.0 * alpha_floor
    costs = [[HittingCostSpec(QuadraticCost(alpha[t, i], v[t, i : i + 1]), mu) for i in range(N)] for t in range(T)]
    g = build_d_regular(N, D)
    meta = {"generator": "experiment", "N": N, "T": T, "D": D, "beta": beta, "seed": seed, "alpha_floor": alpha_floor}
    return Instance(T, N, 1, float(beta), 1.0, 1.0, costs, [g] * T, meta=meta)


def generate_lower_bound_instance(
    N: int, T: int, mu: float = 1.0, mu_prime: float = 1e6, variant: str = "symmetric", beta: float = 1.0
) -> Instance:
    """Adversarial instance forcing any online policy to pay ``CR_*`` times OPT.

    Costs are ``(mu/2) x^2`` for ``t <= T`` and a steep ``(mu'/2)(x-1)^2`` at
    round ``T+1`` (horizon ``T+1``).  ``symmetric``: every agent sees the same
    costs on a complete graph with weight ``beta``.  ``heterogeneous``:
    ``beta = 0``, agent ``i`` has ``mu_i = (i+1) mu`` and only agent 0 (the one
    with the smallest ``mu``) receives the jump; the others keep ``(mu_i/2) x^2``.
    """
    if not (mu > 0 and mu_prime > mu):
        raise ValueError("need mu_prime > mu > 0")
    if N < 1 or T < 1:
        raise ValueError("N and T must be positive")
    H = T + 1
    if variant == "symmetric":
        mus = [mu] * N
        jumpers = set(range(N))
        g = complete_graph(N) if N > 1 else GraphSnapshot(1)
        b = float(beta)
    elif variant == "heterogeneous":
        mus = [mu * (i + 1) for i in range(N)]
        jumpers = {0}
        g = GraphSnapshot(N)
        b = 0.0
    else:
        raise ValueError(f"unknown variant {variant!r}")
    costs = []
    for t in range(1, H + 1):
        row = []
        for i in range(N):
            if t == H and i in jumpers:
                row.append(HittingCostSpec(QuadraticCost(mu_prime / 2, [1.0]), mus[i]))
            else:
                row.append(HittingCostSpec(QuadraticCost(mus[i] / 2, [0.0]), mus[i]))
        costs.append(row)
    meta = {"generator": "lower_bound", "N": N, "T": T, "mu": mu, "mu_prime": mu_prime, "variant": variant, "beta": b}
    return Instance(H, N, 1, b, 1.0, 1.0, costs, [g] * H, meta=meta)


def generate_naive_failure_instance(
    variant: str, beta: float, T: int, curvature: float = 1e6, separation: float = 20.0, N: int = 2
) -> Instance:
    """Instances on which coupling-blind or consensus-forced policies fail.

    ``local_robd``: two agents on one edge with ``f = (x - v)^2 / 2`` and
    minimizers ``v = t`` and ``v = -t`` drifting apart.  ``consensus``: ``N``
    agents (complete graph) with hitting costs ``curvature * (x - v_i)^2`` whose
    minimizers alternate between ``+separation/2`` and ``-separation/2``.
    """
    if T < 1 or beta < 0:
        raise ValueError("need T >= 1 and beta >= 0")
    if variant == "local_robd":
        costs = [
            [HittingCostSpec(QuadraticCost(0.5, [float(t)]), 1.0), HittingCostSpec(QuadraticCost(0.5, [-float(t)]), 1.0)]
            for t in range(1, T + 1)
        ]
        g = GraphSnapshot(2, [(0, 1)])
        return Instance(T, 2, 1, float(beta), 1.0, 1.0, costs, [g] * T, meta={"generator": "naive", "variant": variant})
    if variant == "consensus":
        if N < 2:
            raise ValueError("consensus instance needs N >= 2")
        half = separation / 2
        vs = [half if i % 2 == 0 else -half for i in range(N)]
        row = [HittingCostSpec(QuadraticCost(curvature, [vs[i]]), 2 * curvature) for i in range(N)]
        g = complete_graph(N)
        meta = {"generator": "naive", "variant": variant, "curvature": curvature, "separation": separation}
        return Instance(T, N, 1, float(beta), 1.0, 1.0, [list(row) for _ in range(T)], [g] * T, meta=meta)
    raise ValueError(f"unknown variant {variant!r}")


# --------------------------------------------------------------------------
# JSON serialization
# --------------------------------------------------------------------------

# name -> factory returning a CustomCost for a given (t, i, params) triple
CUSTOM_REGISTRY: dict[str, Callable[..., CustomCost]] = {}


def _coupling_json(c: EdgeCoupling):
    if isinstance(c, ScaledIdentity):
        return {"w": c.w}
    return {"A": c.A.tolist()}


def _coupling_from_json(obj) -> EdgeCoupling:
    if "w" in obj:
        return ScaledIdentity(float(obj["w"]))
    return FullCoupling(np.asarray(obj["A"], float))


def _graph_json(g: GraphSnapshot):
    return {"n": g.n, "edges": [[i, j, _coupling_json(g.couplings[(i, j)])] for i, j in g.edges]}


def _graph_from_json(obj) -> GraphSnapshot:
    return GraphSnapshot(int(obj["n"]), {(int(i), int(j)): _coupling_from_json(c) for i, j, c in obj["edges"]})


def instance_to_json(inst: Instance) -> str:
    """Serialize to JSON.

    Floats are written with Python's shortest round-trip representation, so
    reading the document back reproduces every double exactly.  Repeated graph
    objects are written once in ``graph_table`` and referenced by index.
    """
    costs = []
    for row in inst.costs:
        out = []
        for c in row:
            if c.is_quadratic:
                out.append({"alpha": c.kind.alpha, "v": c.kind.v.tolist(), "mu": c.mu})
            else:
                if not c.kind.name:
                    raise ValueError("custom costs need a registry name to be serialized")
                out.append({"custom": c.kind.name, "mu": c.mu})
        costs.append(out)
    table, index, ids = [], [], {}
    for g in inst.graphs:
        k = ids.get(id(g))
        if k is None:
            k = ids[id(g)] = len(table)
            table.append(_graph_json(g))
        index.append(k)
    doc = {
        "T": inst.T,
        "N": inst.N,
        "d": inst.d,
        "beta": inst.beta,
        "m": inst.m,
        "l": inst.l,
        "x0": inst.x0.tolist(),
        "costs": costs,
        "graph_table": table,
        "graphs": index,
        "meta": inst.meta,
    }
    return json.dumps(doc)


def instance_from_json(text: str) -> Instance:
    doc = json.loads(text)
    costs = []
    for t, row in enumerate(doc["costs"], 1):
        out = []
        for i, c in enumerate(row):
            if "custom" in c:
                factory = CUSTOM_REGISTRY.get(c["custom"])
                if factory is None:
                    raise KeyError(f"custom cost {c['custom']!r} is not registered")
                out.append(HittingCostSpec(factory(t, i), float(c["mu"])))
            else:
                out.append(HittingCostSpec(QuadraticCost(float(c["alpha"]), c["v"]), float(c["mu"])))
        costs.append(out)
    if "graph_table" in doc:
        table = [_graph_from_json(g) for g in doc["graph_table"]]
        graphs = [table[k] for k in doc["graphs"]]
    else:  # plain list of per-round graphs
        cache: dict[str, GraphSnapshot] = {}
        graphs = []
        for g in doc["graphs"]:
            key = json.dumps(g, sort_keys=True)
            graphs.append(cache.setdefault(key, _graph_from_json(g)))
    return Instance(
        int(doc["T"]),
        int(doc["N"]),
        int(doc["d"]),
        float(doc["beta"]),
        float(doc["m"]),
        float(doc["l"]),
        costs,
        graphs,
        np.asarray(doc.get("x0", np.zeros((doc["N"], doc["d"]))), float),
        meta=doc.get("meta", {}),
    )


def save_instance(inst: Instance, path) -> None:
    Path(path).write_text(instance_to_json(inst))


def load_instance(path) -> Instance:
    return instance_from_json(Path(path).read_text())


def random_quadratic_instance(
    rng: np.random.Generator,
    N: int,
    T: int,
    graphs: Sequence[GraphSnapshot],
    d: int = 1,
    beta: float = 1.0,
    m: float = 1.0,
    l: float = 1.0,
    alpha_range=(0.5, 2.0),
    v_scale: float = 5.0,
    mu_fraction: float = 1.0,
) -> Instance:
    """Random quadratic instance over a given graph schedule (testing helper).

    Each agent's declared ``mu`` is ``mu_fraction`` times the smallest
    curvature ``2 alpha`` it ever sees.
    """
    alpha = rng.uniform(*alpha_range, size=(T, N))
    v = rng.normal(scale=v_scale, size=(T, N, d))
    mus = mu_fraction * 2 * alpha.min(axis=0)
    costs = [[HittingCostSpec(QuadraticCost(alpha[t, i], v[t, i]), mus[i]) for i in range(N)] for t in range(T)]
    if len(graphs) == 1:
        graphs = list(graphs) * T
    x0 = rng.normal(scale=v_scale / 2, size=(N, d))
    return Instance(T, N, d, beta, m, l, costs, list(graphs), x0)
