"""Decentralized alternating-minimization controller (ACORD).

Each round every agent repeats ``K_t`` cycles of

1. a local regularized step on its own hitting cost, pulled toward the
   auxiliary variables ``z_e`` of its incident edges, and
2. a neighbour exchange of the new actions followed by ``z_e <- (x_i + x_j)/2``.

Only actions (vectors of length ``d``) cross edges.  ``K_t`` is either fixed
or derived from the contraction rate of the iteration; the data-dependent
variants first run a flood-fill (:func:`network_crawl`) to learn a starting
objective value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import CostReport, Trajectory, total_cost
from .graph import sigma_exact, sigma_lower_bound, diameter, DENSE_EIG_LIMIT
from .instance import Instance
from .simnet import CommLog, Harness

__all__ = [
    "AgentState",
    "KtPolicy",
    "lambda1_of_mu",
    "cr_star",
    "cr_acord",
    "competitive_bound",
    "kt_log_argument",
    "compute_Kt",
    "round_sigma",
    "network_crawl",
    "acord_round",
    "run_acord",
]


def lambda1_of_mu(mu: float) -> float:
    """Regularizer weight ``2 / (1 + sqrt(1 + 4/mu))``."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return 2.0 / (1.0 + math.sqrt(1.0 + 4.0 / mu))


def cr_star(mus) -> float:
    """Optimal competitive ratio ``1/2 + 1/2 sqrt(1 + 4/min mu)``."""
    mus = np.asarray(mus, float)
    if mus.size == 0:
        raise ValueError("need at least one mu")
    if np.any(mus <= 0):
        raise ValueError("all mu must be positive")
    return 0.5 + 0.5 * math.sqrt(1.0 + 4.0 / float(mus.min()))


def cr_acord(mus, T: int) -> float:
    """Finite-horizon ratio ``(CR_* + 1/(2T^2)) / (1 - 1/(2T^2))``."""
    e = 1.0 / (2.0 * T * T)
    return (cr_star(mus) + e) / (1.0 - e)


def competitive_bound(opt_cost: float, mus, T: int, beta: float, m: float, l: float) -> float:
    """Guaranteed cost ceiling ``cr_acord * OPT + (1 + beta m^2 / l) / (4T)``."""
    return cr_acord(mus, T) * opt_cost + (1.0 + beta * m * m / l) / (4.0 * T)


@dataclass
class AgentState:
    """What one agent carries between rounds and iterations."""

    id: int
    lambda1: float
    x_prev: np.ndarray
    x_work: np.ndarray
    z_local: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.lambda1 < 1:
            raise ValueError("lambda1 must lie in (0, 1)")


@dataclass(frozen=True)
class KtPolicy:
    """Rule for the number of inner iterations per round.

    Modes: ``fixed`` (constant ``K``), ``bounded`` (uses a uniform bound
    ``Mf`` on hitting costs and ``Ms`` on action norms), ``crawl`` (learns the
    starting objective by flood-fill each round) and ``epsilon`` (crawl with
    the horizon factor ``T^4`` replaced by ``1/eps^2``).
    """

    mode: str
    K: int | None = None
    Mf: float | None = None
    Ms: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "bounded", "crawl", "epsilon"):
            raise ValueError(f"unknown K_t mode {self.mode!r}")
        if self.mode == "fixed" and (self.K is None or self.K < 1):
            raise ValueError("fixed mode needs K >= 1")
        if self.mode == "bounded" and (self.Mf is None or self.Ms is None or self.Mf < 0 or self.Ms < 0):
            raise ValueError("bounded mode needs Mf, Ms >= 0")
        if self.mode == "epsilon" and not (self.eps and self.eps > 0):
            raise ValueError("epsilon mode needs eps > 0")

    @classmethod
    def fixed(cls, K: int) -> "KtPolicy":
        return cls("fixed", K=int(K))

    @classmethod
    def bounded(cls, Mf: float, Ms: float) -> "KtPolicy":
        return cls("bounded", Mf=float(Mf), Ms=float(Ms))

    @classmethod
    def crawl(cls) -> "KtPolicy":
        return cls("crawl")

    @classmethod
    def epsilon(cls, eps: float) -> "KtPolicy":
        return cls("epsilon", eps=float(eps))

    @classmethod
    def parse(cls, text: str) -> "KtPolicy":
        """Parse ``fixed:12``, ``bounded:<Mf>:<Ms>``, ``crawl`` or ``eps:1e-3``."""
        parts = text.strip().split(":")
        head = parts[0].lower()
        try:
            if head == "fixed" and len(parts) == 2:
                return cls.fixed(int(parts[1]))
            if head == "bounded" and len(parts) == 3:
                return cls.bounded(float(parts[1]), float(parts[2]))
            if head in ("crawl", "unbounded", "unbounded_crawl") and len(parts) == 1:
                return cls.crawl()
            if head in ("eps", "epsilon") and len(parts) == 2:
                return cls.epsilon(float(parts[1]))
        except ValueError as exc:
            raise ValueError(f"bad K_t policy {text!r}: {exc}") from None
        raise ValueError(f"bad K_t policy {text!r}; expected fixed:K, bounded:Mf:Ms, crawl or eps:E")

    def label(self) -> str:
        if self.mode == "fixed":
            return f"fixed:{self.K}"
        if self.mode == "bounded":
            return f"bounded:{self.Mf}:{self.Ms}"
        if self.mode == "epsilon":
            return f"eps:{self.eps}"
        return "crawl"


# --------------------------------------------------------------------------
# Iteration count
# --------------------------------------------------------------------------


def kt_log_argument(policy: KtPolicy, sigma_t, beta, l, lambdas, mus, T, F0=None) -> float:
    """Argument of the logarithm in the numerator of the ``K_t`` formula.

    ``horizon * 128 * beta l * S * max_i(mu_i + lambda_i) / (sigma min_i lambda_i)^2``
    with ``horizon = T^4`` (or ``1/eps^2``) and ``S = N (Mf + Ms^2/2)`` in
    bounded mode or the starting objective value ``F0`` otherwise.
    """
    lambdas = np.asarray(lambdas, float)
    mus = np.asarray(mus, float)
    horizon = 1.0 / policy.eps**2 if policy.mode == "epsilon" else float(T) ** 4
    if policy.mode == "bounded":
        S = mus.size * (policy.Mf + policy.Ms**2 / 2)
    else:
        if F0 is None:
            raise ValueError(f"{policy.mode} mode needs F0")
        S = float(F0)
    return horizon * 128.0 * beta * l * S * float(np.max(mus + lambdas)) / (sigma_t * float(lambdas.min())) ** 2


def compute_Kt(policy: KtPolicy, sigma_t, beta, l, lambdas, mus, T, F0=None) -> int:
    """Inner iterations needed so the round's residual error is below the per-round budget.

    ``K_t = ceil( log(arg) / log(4 beta l / (4 beta l - sigma_t)) )``, floored at 1,
    where ``arg`` is :func:`kt_log_argument`.  Fixed mode returns ``K``.
    """
    if policy.mode == "fixed":
        return int(policy.K)
    L = 4.0 * beta * l
    if not (sigma_t > 0 and sigma_t < L):
        raise ValueError(f"contraction rate undefined: need 0 < sigma < 4 beta l = {L}, got {sigma_t}")
    arg = kt_log_argument(policy, sigma_t, beta, l, lambdas, mus, T, F0)
    if arg <= 1.0:
        return 1
    K = math.ceil(math.log(arg) / math.log(L / (L - sigma_t)))
    return max(int(K), 1)


_SIGMA_CACHE: dict = {}


def round_sigma(inst: Instance, t: int, lambdas=None):
    """``sigma_t`` of round ``t`` (``None`` when there is no coupling)."""
    g = inst.graph(t)
    if inst.beta == 0 or not g.edges:
        return None
    lam = np.array([lambda1_of_mu(mu) for mu in inst.mus]) if lambdas is None else np.asarray(lambdas, float)
    key = (id(g), inst.beta, inst.m, inst.mus.tobytes(), lam.tobytes())
    rep = _SIGMA_CACHE.get(key)
    if rep is None or rep[0] is not g:
        if g.n + g.num_edges > DENSE_EIG_LIMIT:
            rep = (g, sigma_lower_bound(g, inst.mus, lam, inst.beta, inst.m))
        else:
            rep = (g, sigma_exact(g, inst.mus, lam, inst.beta, inst.m))
        if len(_SIGMA_CACHE) > 256:
            _SIGMA_CACHE.clear()
        _SIGMA_CACHE[key] = rep
    return rep[1]


# --------------------------------------------------------------------------
# Flood-fill of the starting objective
# --------------------------------------------------------------------------


def network_crawl(harness: Harness, t: int, agents, policy: KtPolicy | None = None, sigma=None):
    """Flood-fill every agent's local starting value, then derive ``K_t``.

    Agent ``i`` contributes ``f_t^i(0) + (lambda_i/2)||x_prev_i||^2``.  Each
    step every agent sends its table of known entries (and the known-mask) to
    its neighbours, who adopt any entry they did not know.  After as many
    steps as the largest component diameter every agent holds the sum over its
    component.

    Returns
    -------
    F0 : ndarray, shape (N,)
        Component sum known to each agent.
    K : ndarray of int, shape (N,)
        Iteration count each agent derives from its sum (``1`` without coupling).
    """
    inst = harness.inst
    policy = policy or KtPolicy.crawl()
    N = inst.N
    g = inst.graph(t)
    own = inst.hitting_at_zero(t) + np.array([0.5 * a.lambda1 * float(a.x_prev @ a.x_prev) for a in agents])
    Y = np.zeros((N, N))
    known = np.zeros((N, N), dtype=bool)
    Y[np.arange(N), np.arange(N)] = own
    known[np.arange(N), np.arange(N)] = True
    steps = diameter(g).max_component if g.edges else 0
    if steps:
        src, dst, _ = harness.channels(t)
    for step in range(1, steps + 1):
        # payload: the value table followed by the known-mask bits
        recv = harness.exchange(t, step, np.concatenate([Y, known], axis=1), kind="crawl")
        recv_known = recv[:, N:] > 0.5
        rows, cols = np.nonzero(recv_known & ~known[dst])
        Y[dst[rows], cols] = recv[rows, cols]
        known[dst[rows], cols] = True
    F0 = np.where(known, Y, 0.0).sum(axis=1)
    lambdas = np.array([a.lambda1 for a in agents])
    if sigma is None:
        K = np.ones(N, dtype=np.int64)
    else:
        K = np.array(
            [compute_Kt(policy, sigma, inst.beta, inst.l, lambdas, inst.mus, inst.T, F0[i]) for i in range(N)],
            dtype=np.int64,
        )
    return F0, K


# --------------------------------------------------------------------------
# One round
# --------------------------------------------------------------------------


def acord_round(harness: Harness, inst: Instance, t: int, states, Kt, warm_start: bool = True):
    """Run ``Kt`` local-step / exchange cycles and commit the round's actions.

    Parameters
    ----------
    harness : Harness
    inst : Instance
    t : int
        Round (1-indexed).
    states : list of AgentState
        ``x_prev`` must hold the round ``t-1`` actions.  Updated in place.
    Kt : int or array of int
        Iterations; an array gives one count per agent (agents of one
        connected component must agree).
    warm_start : bool
        Start from ``x = x_prev`` and ``z`` at the edge midpoints of ``x_prev``
        (one neighbour exchange); otherwise from ``x = 0, z = 0``.

    Returns
    -------
    states, x_t : list of AgentState, ndarray (N, d)
    """
    N, d = inst.N, inst.d
    g = inst.graph(t)
    K = np.broadcast_to(np.asarray(Kt, dtype=np.int64), (N,)).copy()
    if np.any(K < 1):
        raise ValueError("Kt must be at least 1")
    Kmax = int(K.max())
    lam = np.array([s.lambda1 for s in states])
    xp = np.array([s.x_prev for s in states], dtype=float).reshape(N, d)
    beta = inst.beta
    src, dst, eid = harness.channels(t) if g.edges else (np.empty(0, np.int64),) * 3
    C = src.size
    coupled = beta > 0 and C > 0
    scalar = g.all_scaled_identity
    quad = inst.is_quadratic
    costs = inst.costs[t - 1]

    # per-channel coupling held by the receiving agent (it owns z for that edge)
    if coupled and scalar:
        cw = 2.0 * beta * g.edge_weights_sq[eid]
        S = np.bincount(dst, weights=cw, minlength=N)
    elif coupled:
        Gc = 2.0 * beta * g.grams(d)[eid]
        S = np.zeros((N, d, d))
        np.add.at(S, dst, Gc)
    if quad:
        alpha, v = inst.quadratic_arrays
        a2 = 2.0 * alpha[t - 1]
        base = a2[:, None] * v[t - 1] + lam[:, None] * xp
        if coupled and not scalar:
            Minv = np.linalg.inv(S + ((a2 + lam)[:, None, None] * np.eye(d)))
    else:
        base = lam[:, None] * xp

    def coupling_rhs(z):
        if scalar:
            return np.stack([np.bincount(dst, weights=cw * z[:, k], minlength=N) for k in range(d)], axis=1)
        R = np.zeros((N, d))
        np.add.at(R, dst, np.einsum("cde,ce->cd", Gc, z))
        return R

    def x_step(z, active):
        if not coupled:
            R = 0.0
        else:
            R = coupling_rhs(z)
        if quad:
            if not coupled:
                return base / (a2 + lam)[:, None]
            if scalar:
                return (base + R) / (a2 + lam + S)[:, None]
            return np.einsum("nde,ne->nd", Minv, base + R)
        out = x.copy()
        eye = np.eye(d)
        for i in np.flatnonzero(active):
            if coupled:
                H = (lam[i] + S[i]) * eye if scalar else lam[i] * eye + S[i]
            else:
                H = lam[i] * eye
            rhs = base[i] + (R[i] if coupled else 0.0)
            out[i] = costs[i].prox(H, rhs)
        return out

    def exchange_and_average(x, k, active_ch):
        recv = harness.exchange(t, k, x, kind="action", active=active_ch)
        return 0.5 * (x[dst] + recv)

    all_active = bool(np.all(K == Kmax))
    # wall clock covers the inner iterations only, not the agent-state bookkeeping
    with harness.timed():
        if warm_start:
            x = xp.copy()
            z = exchange_and_average(x, 1, None) if coupled else np.zeros((C, d))
        else:
            x = np.zeros((N, d))
            z = np.zeros((C, d))
        per_step_ops = np.maximum(g.degrees, 1) * float(d**3)
        for k in range(1, Kmax + 1):
            active = K >= k
            new = x_step(z, active)
            x = new if all_active else np.where(active[:, None], new, x)
            if not coupled:
                continue
            # exchange x_k unless it is the committed iterate of a warm-started run
            if warm_start and k == Kmax:
                break
            nxt = K >= (k + 1) if warm_start else active
            ch = None if all_active else nxt[dst]
            if ch is not None and not ch.any():
                break
            label = k + 1 if warm_start else k
            znew = exchange_and_average(x, label, ch)
            z = znew if ch is None else np.where(ch[:, None], znew, z)

    harness.log.add_ops(np.arange(N), per_step_ops * K)
    for i, s in enumerate(states):
        s.x_work = x[i].copy()
        s.x_prev = x[i].copy()
        s.z_local = {}
    if coupled:
        for c in range(C):
            states[dst[c]].z_local[g.edges[eid[c]]] = z[c].copy()
    return states, x


# --------------------------------------------------------------------------
# Full horizon
# --------------------------------------------------------------------------


def init_states(inst: Instance) -> list[AgentState]:
    return [
        AgentState(i, lambda1_of_mu(inst.mus[i]), inst.x0[i].copy(), inst.x0[i].copy())
        for i in range(inst.N)
    ]


def run_acord(inst: Instance, policy: KtPolicy, warm_start: bool | None = None, harness: Harness | None = None):
    """Run the controller over the whole horizon.

    ``warm_start`` defaults to ``True`` for a fixed iteration count only.  The
    derived counts bound the starting gap through the value at ``x = 0, z = 0``
    and therefore start there.

    Returns
    -------
    (Trajectory, CostReport, CommLog)
        The log's ``round_info[t]`` holds ``K`` (per-agent counts), ``sigma``
        and a ``disconnected`` flag for every round.
    """
    harness = harness or Harness(inst, "acord")
    if warm_start is None:
        warm_start = policy.mode == "fixed"
    states = init_states(inst)
    lambdas = np.array([s.lambda1 for s in states])
    X = np.empty((inst.T, inst.N, inst.d))
    for t in range(1, inst.T + 1):
        g = inst.graph(t)
        rep = round_sigma(inst, t, lambdas)
        sigma = None if rep is None else rep.sigma
        info = {"sigma": sigma, "disconnected": bool(g.edges) and not diameter(g).connected}
        if policy.mode == "fixed":
            K = np.full(inst.N, policy.K, dtype=np.int64)
        elif sigma is None:
            K = np.ones(inst.N, dtype=np.int64)
            if policy.mode in ("crawl", "epsilon"):
                network_crawl(harness, t, states, policy, None)
        elif policy.mode == "bounded":
            K = np.full(inst.N, compute_Kt(policy, sigma, inst.beta, inst.l, lambdas, inst.mus, inst.T), dtype=np.int64)
        else:
            info["F0"], K = network_crawl(harness, t, states, policy, sigma)
        info["K"] = K
        harness.log.round_info[t] = info
        states, X[t - 1] = acord_round(harness, inst, t, states, K, warm_start=warm_start)
    N = max(inst.N, 1)
    total = harness.log.wall_clock.pop((harness.algo, -1), 0.0)
    for i in range(inst.N):
        harness.log.wall_clock[(harness.algo, i)] += total / N
    traj = Trajectory(X, inst.x0.copy())
    return traj, total_cost(inst, traj), harness.log
