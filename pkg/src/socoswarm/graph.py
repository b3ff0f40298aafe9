"""Undirected per-round communication graphs and their spectral quantities.

A :class:`GraphSnapshot` is the graph ``G_t`` seen by the agents at one
round, together with the linear map attached to every edge.  The module also
provides the circulant D-regular constructor, hop neighbourhoods, diameters
and the strong-convexity constant ``sigma`` of the edge-augmented round
objective (exact eigensolve or the closed form for regular graphs).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg

__all__ = [
    "EdgeCoupling",
    "ScaledIdentity",
    "FullCoupling",
    "GraphSnapshot",
    "SpectralReport",
    "DiameterInfo",
    "build_d_regular",
    "complete_graph",
    "r_hop_neighborhood",
    "diameter",
    "sigma_exact",
    "sigma_dregular",
    "sigma_lower_bound",
    "read_edge_list",
    "write_edge_list",
]

# Past this many unknowns the dense eigensolve is replaced by a sparse one.
DENSE_EIG_LIMIT = 100_000


# --------------------------------------------------------------------------
# Edge couplings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ScaledIdentity:
    """Edge map ``A = w * I``; the penalty is ``(beta w^2 / 2) ||xi - xj||^2``."""

    w: float

    def __post_init__(self):
        if not (self.w > 0 and math.isfinite(self.w)):
            raise ValueError(f"coupling weight must be positive, got {self.w}")

    def gram(self, d: int) -> np.ndarray:
        return (self.w * self.w) * np.eye(d)

    def singular_values(self, d: int) -> np.ndarray:
        return np.full(d, float(self.w))

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.w * np.asarray(x, dtype=float)


@dataclass(frozen=True, eq=False)
class FullCoupling:
    """Edge map given by an explicit ``r x d`` matrix of full column rank."""

    A: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] < A.shape[1]:
            raise ValueError(f"coupling matrix must have r >= d rows, got shape {A.shape}")
        object.__setattr__(self, "A", A)

    def gram(self, d: int) -> np.ndarray:
        if self.A.shape[1] != d:
            raise ValueError(f"coupling matrix has {self.A.shape[1]} columns, expected d={d}")
        return self.A.T @ self.A

    def singular_values(self, d: int) -> np.ndarray:
        if self.A.shape[1] != d:
            raise ValueError(f"coupling matrix has {self.A.shape[1]} columns, expected d={d}")
        return np.linalg.svd(self.A, compute_uv=False)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float)

    def __eq__(self, other):
        return isinstance(other, FullCoupling) and np.array_equal(self.A, other.A)

    def __hash__(self):
        return hash(self.A.tobytes())


EdgeCoupling = ScaledIdentity | FullCoupling

_UNIT = ScaledIdentity(1.0)


def _canon(i: int, j: int) -> tuple[int, int]:
    i, j = int(i), int(j)
    if i == j:
        raise ValueError(f"self-loop ({i},{i}) not allowed")
    return (i, j) if i < j else (j, i)


# --------------------------------------------------------------------------
# Graph snapshot
# --------------------------------------------------------------------------


class GraphSnapshot:
    """Undirected simple graph on nodes ``0..n-1`` with one coupling per edge.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : iterable of (int, int) or mapping (int, int) -> EdgeCoupling
        Unordered node pairs.  When a mapping is given its values are the edge
        couplings; otherwise every edge gets ``ScaledIdentity(1)``.
    couplings : mapping, optional
        Explicit per-edge couplings, keyed by either orientation.

    Notes
    -----
    Edges are stored canonically as ``(i, j)`` with ``i < j`` and sorted, so two
    snapshots built from the same edge set compare equal and iterate in the
    same order.  Derived arrays (directed channels, degrees, Laplacian data)
    are computed lazily and cached; the snapshot is treated as immutable.
    """

    def __init__(self, n: int, edges=(), couplings: Mapping | None = None):
        n = int(n)
        if n < 1:
            raise ValueError("graph needs at least one node")
        if isinstance(edges, Mapping):
            couplings = dict(edges) if couplings is None else {**edges, **couplings}
            edges = list(edges.keys())
        table: dict[tuple[int, int], EdgeCoupling] = {}
        for e in edges:
            i, j = _canon(*e)
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i},{j}) outside node range 0..{n - 1}")
            if (i, j) in table:
                raise ValueError(f"duplicate edge ({i},{j})")
            table[(i, j)] = _UNIT
        for e, c in (couplings or {}).items():
            key = _canon(*e)
            if key not in table:
                raise ValueError(f"coupling given for non-edge {key}")
            if not isinstance(c, (ScaledIdentity, FullCoupling)):
                raise TypeError(f"unsupported coupling {c!r}")
            table[key] = c
        self.n = n
        self.edges: tuple[tuple[int, int], ...] = tuple(sorted(table))
        self.couplings: dict[tuple[int, int], EdgeCoupling] = {e: table[e] for e in self.edges}

    # basic queries -------------------------------------------------------
    def __repr__(self):
        return f"GraphSnapshot(n={self.n}, |E|={len(self.edges)})"

    def __eq__(self, other):
        return (
            isinstance(other, GraphSnapshot)
            and self.n == other.n
            and self.edges == other.edges
            and all(self.couplings[e] == other.couplings[e] for e in self.edges)
        )

    def __hash__(self):
        return hash((self.n, self.edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        return _canon(i, j) in self.couplings

    def coupling(self, i: int, j: int) -> EdgeCoupling:
        return self.couplings[_canon(i, j)]

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.edges)}

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        return tuple(tuple(sorted(a)) for a in nbrs)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        if self.edges:
            e = np.asarray(self.edges)
            np.add.at(deg, e[:, 0], 1)
            np.add.at(deg, e[:, 1], 1)
        return deg

    def is_regular(self) -> bool:
        return self.n > 0 and bool(np.all(self.degrees == self.degrees[0]))

    @cached_property
    def all_scaled_identity(self) -> bool:
        return all(isinstance(c, ScaledIdentity) for c in self.couplings.values())

    @cached_property
    def edge_array(self) -> np.ndarray:
        """``(|E|, 2)`` integer array of canonical edges."""
        return np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def channels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed channels ``(src, dst, edge_id)``: both orientations of every edge.

        Channel ``k < |E|`` carries ``i -> j`` for edge ``k = (i, j)``; channel
        ``|E| + k`` carries ``j -> i``.
        """
        e = self.edge_array
        src = np.concatenate([e[:, 0], e[:, 1]])
        dst = np.concatenate([e[:, 1], e[:, 0]])
        eid = np.concatenate([np.arange(len(e)), np.arange(len(e))])
        return src, dst, eid

    @cached_property
    def edge_weights_sq(self) -> np.ndarray:
        """``w^2`` per edge; only meaningful when all couplings are scaled identities."""
        return np.array(
            [c.w * c.w if isinstance(c, ScaledIdentity) else np.nan for c in self.couplings.values()],
            dtype=float,
        )

    def grams(self, d: int) -> np.ndarray:
        """Stacked ``A^T A`` per edge, shape ``(|E|, d, d)``."""
        key = f"_grams_{d}"
        cached = self.__dict__.get(key)
        if cached is None:
            cached = np.array([self.couplings[e].gram(d) for e in self.edges]).reshape(-1, d, d)
            self.__dict__[key] = cached
        return cached

    def sparse_adjacency(self) -> scipy.sparse.csr_matrix:
        e = self.edge_array
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def hop_distances(self) -> np.ndarray:
        """All-pairs hop distances (``inf`` across components)."""
        if not self.edges:
            dist = np.full((self.n, self.n), np.inf)
            np.fill_diagonal(dist, 0.0)
            return dist
        return scipy.sparse.csgraph.shortest_path(self.sparse_adjacency(), unweighted=True, directed=False)

    @cached_property
    def components(self) -> np.ndarray:
        """Component label per node."""
        if not self.edges:
            return np.arange(self.n)
        _, labels = scipy.sparse.csgraph.connected_components(self.sparse_adjacency(), directed=False)
        return labels

    def check_coupling_window(self, m: float, l: float, d: int, rtol: float = 1e-9) -> None:
        """Raise ``ValueError`` unless every ``A^T A`` has spectrum within ``[m, l]``."""
        for e, c in self.couplings.items():
            s2 = c.singular_values(d) ** 2
            if s2.min() < m * (1 - rtol) or s2.max() > l * (1 + rtol):
                raise ValueError(
                    f"edge {e}: squared singular values {s2.min():.6g}..{s2.max():.6g} outside [m, l]=[{m}, {l}]"
                )


# --------------------------------------------------------------------------
# Constructors and traversal
# --------------------------------------------------------------------------


def build_d_regular(N: int, D: int, coupling: EdgeCoupling | None = None) -> GraphSnapshot:
    """Circulant D-regular graph.

    Node ``i`` is joined to ``i +- 1, ..., i +- floor(D/2)`` (mod N), plus the
    antipode ``i + N/2`` when ``D`` is odd.

    Parameters
    ----------
    N, D : int
        Node count and degree, ``2 <= D <= N - 1`` and ``N * D`` even.
    coupling : EdgeCoupling, optional
        Coupling placed on every edge (default ``ScaledIdentity(1)``).
    """
    N, D = int(N), int(D)
    if not 2 <= D <= N - 1:
        raise ValueError(f"need 2 <= D <= N-1, got N={N}, D={D}")
    if (N * D) % 2:
        raise ValueError(f"no D-regular graph with N={N}, D={D} (N*D odd)")
    edges = set()
    for i in range(N):
        for s in range(1, D // 2 + 1):
            edges.add(_canon(i, (i + s) % N))
        if D % 2:
            edges.add(_canon(i, (i + N // 2) % N))
    c = coupling or _UNIT
    g = GraphSnapshot(N, {e: c for e in edges})
    if not np.all(g.degrees == D):  # pragma: no cover - construction guarantees it
        raise RuntimeError("circulant construction produced irregular degrees")
    return g


def complete_graph(N: int, coupling: EdgeCoupling | None = None) -> GraphSnapshot:
    c = coupling or _UNIT
    return GraphSnapshot(N, {(i, j): c for i in range(N) for j in range(i + 1, N)})


def r_hop_neighborhood(g: GraphSnapshot, i: int, r: int) -> set[int]:
    """Nodes within ``r`` hops of ``i`` (breadth-first ball, includes ``i``)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    seen = {int(i)}
    frontier = deque([(int(i), 0)])
    adj = g.adjacency
    while frontier:
        u, du = frontier.popleft()
        if du == r:
            continue
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append((v, du + 1))
    return seen


@dataclass(frozen=True)
class DiameterInfo:
    """Diameter of a possibly disconnected graph.

    ``value`` is ``math.inf`` when the graph is disconnected; ``per_component``
    lists the diameter of each component (ordered by component label) and
    ``max_component`` is the largest finite one.
    """

    value: float
    per_component: tuple[int, ...]

    @property
    def connected(self) -> bool:
        return math.isfinite(self.value)

    @property
    def max_component(self) -> int:
        return max(self.per_component) if self.per_component else 0

    def __int__(self):
        if not self.connected:
            raise ValueError("graph is disconnected; diameter is infinite")
        return int(self.value)


def diameter(g: GraphSnapshot) -> DiameterInfo:
    dist = g.hop_distances
    labels = g.components
    per = []
    for c in range(labels.max() + 1):
        idx = np.flatnonzero(labels == c)
        per.append(int(dist[np.ix_(idx, idx)].max()))
    value = float(per[0]) if len(per) == 1 else math.inf
    return DiameterInfo(value, tuple(per))


# --------------------------------------------------------------------------
# Spectral quantities
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralReport:
    """Strong-convexity constant of the edge-augmented round objective.

    ``lower``/``upper`` hold the D-regular sandwich bounds when available
    (``nan`` otherwise).
    """

    sigma: float
    method: str
    lower: float = float("nan")
    upper: float = float("nan")


def _hessian_bound_matrix(g: GraphSnapshot, mus, lambdas, beta, m) -> scipy.sparse.csr_matrix:
    """Block matrix bounding the Hessian of the augmented objective from below.

    Variables are ordered as nodes then edges (one scalar each; the ``d > 1``
    matrix is this one Kronecker-lifted by ``I_d`` and shares its spectrum).
    """
    n, E = g.n, g.num_edges
    c = 2.0 * beta * m
    diag_x = np.asarray(mus, float) + np.asarray(lambdas, float) + c * g.degrees
    diag_z = np.full(E, 2.0 * c)
    e = g.edge_array
    rows = np.concatenate([np.arange(n + E), e[:, 0], e[:, 1], n + np.arange(E), n + np.arange(E)])
    cols = np.concatenate([np.arange(n + E), n + np.arange(E), n + np.arange(E), e[:, 0], e[:, 1]])
    vals = np.concatenate([diag_x, diag_z, np.full(4 * E, -c)])
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n + E, n + E))


def sigma_exact(g: GraphSnapshot, mus, lambdas, beta: float, m: float) -> SpectralReport:
    """Smallest eigenvalue of the Hessian lower-bound matrix.

    The matrix has node blocks ``mu_i + lambda_i + 2 beta m deg_i``, edge blocks
    ``4 beta m`` and ``-2 beta m`` between each edge and its two endpoints;
    every ``A^T A`` is replaced by its lower bound ``m I``.

    Parameters
    ----------
    g : GraphSnapshot
    mus, lambdas : array_like, shape (n,)
        Declared strong-convexity parameters and the matching regularizer weights.
    beta, m : float
        Dissimilarity weight and the lower singular-value bound (squared).

    Returns
    -------
    SpectralReport
        ``method`` is ``"exact_eigen"`` (dense), ``"sparse_eigen"`` (large graphs)
        or ``"dregular_closed_form"`` when the sparse solver fails on a regular
        graph with uniform parameters.
    """
    if beta <= 0 or m <= 0:
        raise ValueError("sigma is defined for beta > 0 and m > 0")
    mus = np.asarray(mus, float)
    lambdas = np.asarray(lambdas, float)
    if mus.shape != (g.n,) or lambdas.shape != (g.n,):
        raise ValueError("mus and lambdas must have one entry per node")
    M = _hessian_bound_matrix(g, mus, lambdas, beta, m)
    size = M.shape[0]
    if size <= 4000:
        sig = float(scipy.linalg.eigvalsh(M.toarray(), subset_by_index=[0, 0])[0])
        method = "exact_eigen"
    elif size <= DENSE_EIG_LIMIT:
        sig = float(scipy.sparse.linalg.eigsh(M, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0])
        method = "sparse_eigen"
    else:
        return sigma_lower_bound(g, mus, lambdas, beta, m)
    return SpectralReport(sig, method)


def sigma_lower_bound(g: GraphSnapshot, mus, lambdas, beta: float, m: float) -> SpectralReport:
    """Closed-form lower bound on ``sigma`` for large graphs.

    For a regular graph the node diagonal is replaced by its minimum and the
    regular closed form is evaluated with the smallest ``kappa``.  For an
    irregular graph the bound uses the minimum node diagonal and the largest
    signless-Laplacian eigenvalue (bounded by twice the maximum degree).
    """
    mus = np.asarray(mus, float)
    lambdas = np.asarray(lambdas, float)
    if g.is_regular() and g.degrees[0] >= 2:
        rep = sigma_dregular(int(g.degrees[0]), float(np.min(mus + lambdas)), 0.0, beta, m)
        return SpectralReport(rep.sigma, "dregular_lower_bound", rep.lower, rep.upper)
    c = 4.0 * beta * m
    a = float(np.min(mus + lambdas + 2 * beta * m * g.degrees))
    smax2 = 2.0 * float(g.degrees.max())
    sig = 0.5 * (a + c - math.sqrt((c - a) ** 2 + c * c * smax2))
    if sig > 0:
        return SpectralReport(sig, "general_lower_bound")
    # the bound is vacuous on strongly irregular graphs: fall back to shift-invert Lanczos
    M = _hessian_bound_matrix(g, mus, lambdas, beta, m)
    sig = float(scipy.sparse.linalg.eigsh(M, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0])
    return SpectralReport(sig, "sparse_eigen")


def sigma_dregular(D: int, mu: float, lambda1: float, beta: float, m: float) -> SpectralReport:
    """Closed-form ``sigma`` for a D-regular graph with uniform ``mu``.

    ``sigma = 4 beta m kappa / (1 + (D+kappa)/2 + sqrt((1-(D+kappa)/2)^2 + 2D))``
    with ``kappa = (mu + lambda1) / (2 beta m)``, together with the bounds
    ``2(mu+lambda1)/(2D+kappa) <= sigma <= 2(mu+lambda1)/(D+kappa)``.
    """
    if D < 2:
        raise ValueError("closed form requires D >= 2")
    if beta <= 0 or m <= 0:
        raise ValueError("closed form requires beta > 0 and m > 0")
    s = mu + lambda1
    kappa = s / (2 * beta * m)
    h = (D + kappa) / 2
    sig = 4 * beta * m * kappa / (1 + h + math.sqrt((1 - h) ** 2 + 2 * D))
    return SpectralReport(sig, "dregular_closed_form", 2 * s / (2 * D + kappa), 2 * s / (D + kappa))


# --------------------------------------------------------------------------
# Edge-list text format
# --------------------------------------------------------------------------


def read_edge_list(path, n: int | None = None) -> GraphSnapshot:
    """Parse ``i j [w | matrix-file]`` lines (``#`` starts a comment).

    A third token that parses as a float is a scalar weight; otherwise it is a
    path (relative to the edge file) to a matrix readable by ``numpy.loadtxt``
    or ``numpy.load`` (``.npy``).  A line ``n <count>`` fixes the node count.
    """
    path = Path(path)
    edges: dict[tuple[int, int], EdgeCoupling] = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "n" and len(tok) == 2:
            n = int(tok[1])
            continue
        if len(tok) not in (2, 3):
            raise ValueError(f"{path}:{lineno}: expected 'i j [w|matrix-file]'")
        i, j = int(tok[0]), int(tok[1])
        c: EdgeCoupling = _UNIT
        if len(tok) == 3:
            try:
                c = ScaledIdentity(float(tok[2]))
            except ValueError:
                ref = path.parent / tok[2]
                A = np.load(ref) if ref.suffix == ".npy" else np.loadtxt(ref, ndmin=2)
                c = FullCoupling(A)
        key = _canon(i, j)
        if key in edges:
            raise ValueError(f"{path}:{lineno}: duplicate edge {key}")
        edges[key] = c
    if n is None:
        n = 1 + max((max(e) for e in edges), default=0)
    return GraphSnapshot(n, edges)


def write_edge_list(g: GraphSnapshot, path) -> None:
    """Write ``g`` as an edge list.  Full couplings are stored next to it as ``.npy`` files."""
    path = Path(path)
    lines = [f"n {g.n}"]
    for k, (i, j) in enumerate(g.edges):
        c = g.couplings[(i, j)]
        if isinstance(c, ScaledIdentity):
            lines.append(f"{i} {j} {c.w!r}")
        else:
            ref = path.with_name(f"{path.stem}_A{k}.npy")
            np.save(ref, c.A)
            lines.append(f"{i} {j} {ref.name}")
    path.write_text("\n".join(lines) + "\n")


def union_edges(graphs: Iterable[GraphSnapshot]) -> set[tuple[int, int]]:
    out: set[tuple[int, int]] = set()
    for g in graphs:
        out.update(g.edges)
    return out
