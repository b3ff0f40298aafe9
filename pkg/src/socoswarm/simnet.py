"""Bulk-synchronous message-passing harness.

Every message an algorithm sends goes through this module, which checks it
against the round's graph and records it in a :class:`CommLog`.  Action and
crawl messages may only travel along an edge; function descriptors (used by
the neighbourhood-MPC baseline) may travel up to ``r`` hops and are charged
once per hop.
"""

from __future__ import annotations

import csv
import json
import time
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .graph import GraphSnapshot

__all__ = [
    "Message",
    "CommLog",
    "LocalityError",
    "Harness",
    "deliver",
    "summarize",
    "write_summary_json",
    "KINDS",
]

KINDS = ("action", "crawl", "function")


class LocalityError(RuntimeError):
    """A message left the neighbourhood it is allowed to reach."""


@dataclass(frozen=True)
class Message:
    round: int
    iteration: int
    src: int
    dst: int
    payload_dim: int
    kind: str
    hops: int = 1


@dataclass
class _Batch:
    round: int
    iteration: int
    src: np.ndarray
    dst: np.ndarray
    payload_dim: int
    kind: str
    hops: np.ndarray | None = None

    @property
    def hop_count(self) -> int:
        return int(self.src.size if self.hops is None else self.hops.sum())


class CommLog:
    """Append-only record of delivered messages, compute counters and timings.

    Messages are stored in batches (one per exchange phase) and expanded into
    :class:`Message` objects on demand.  ``per_agent_ops`` counts modelled
    floating-point work per agent; ``wall_clock`` maps ``(algo, agent)`` to
    seconds.  ``round_info`` holds per-round metadata written by the
    algorithms (iteration counts, ``sigma``, connectivity flags).
    """

    def __init__(self, n_agents: int = 0):
        self.n_agents = n_agents
        self._batches: list[_Batch] = []
        self.per_agent_ops: dict[int, float] = defaultdict(float)
        self.wall_clock: dict[tuple[str, int], float] = defaultdict(float)
        self.round_info: dict[int, dict] = {}

    # writing --------------------------------------------------------------
    def _append_batch(self, b: _Batch) -> None:
        if b.kind not in KINDS:
            raise ValueError(f"unknown message kind {b.kind!r}")
        if b.src.size:
            self._batches.append(b)

    def add_ops(self, agents, flops) -> None:
        for a, f in zip(np.atleast_1d(agents), np.broadcast_to(flops, np.shape(np.atleast_1d(agents)))):
            self.per_agent_ops[int(a)] += float(f)

    # reading --------------------------------------------------------------
    def __len__(self) -> int:
        return sum(b.src.size for b in self._batches)

    def __iter__(self) -> Iterator[Message]:
        for b in self._batches:
            hops = np.ones(b.src.size, dtype=np.int64) if b.hops is None else b.hops
            for s, d, h in zip(b.src.tolist(), b.dst.tolist(), hops.tolist()):
                yield Message(b.round, b.iteration, s, d, b.payload_dim, b.kind, h)

    @property
    def messages(self) -> list[Message]:
        return list(self)

    def count(self, kind: str | None = None, round: int | None = None, hop_weighted: bool = True) -> int:
        n = 0
        for b in self._batches:
            if (kind is None or b.kind == kind) and (round is None or b.round == round):
                n += b.hop_count if hop_weighted else b.src.size
        return n

    def kinds(self) -> set[str]:
        return {b.kind for b in self._batches}

    def payload_dims(self, kind: str | None = None) -> set[int]:
        return {b.payload_dim for b in self._batches if kind is None or b.kind == kind}

    def batches(self):
        return tuple(self._batches)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "iteration", "src", "dst", "payload_dim", "kind", "hops"])
            for m in self:
                w.writerow([m.round, m.iteration, m.src, m.dst, m.payload_dim, m.kind, m.hops])


def deliver(log: CommLog, msg: Message, g_t: GraphSnapshot, r: int | None = None) -> bool:
    """Record ``msg`` if the round graph allows it; return whether it was accepted.

    ``action`` and ``crawl`` messages need ``(src, dst)`` to be an edge of
    ``g_t``.  ``function`` messages need a declared radius ``r`` and
    ``dst`` within ``r`` hops; they are logged with ``hops`` equal to the
    shortest-path length.
    """
    if msg.kind not in KINDS:
        raise ValueError(f"unknown message kind {msg.kind!r}")
    if not (0 <= msg.src < g_t.n and 0 <= msg.dst < g_t.n) or msg.src == msg.dst:
        return False
    if msg.kind == "function":
        if r is None:
            return False
        dist = g_t.hop_distances[msg.src, msg.dst]
        if not np.isfinite(dist) or dist > r:
            return False
        hops = int(dist)
    else:
        if not g_t.has_edge(msg.src, msg.dst):
            return False
        hops = 1
    log._append_batch(
        _Batch(msg.round, msg.iteration, np.array([msg.src]), np.array([msg.dst]), msg.payload_dim, msg.kind, np.array([hops]))
    )
    return True


class Harness:
    """Round-by-round delivery service bound to one instance's graph schedule.

    Algorithms call :meth:`exchange` to send one vector along every directed
    edge (a neighbour exchange) and :meth:`ship_functions` to relay cost
    descriptors inside an ``r``-hop ball.  Both raise :class:`LocalityError`
    when a message would violate the round's graph.
    """

    def __init__(self, inst, algo: str = "acord", log: CommLog | None = None):
        self.inst = inst
        self.algo = algo
        self.log = log if log is not None else CommLog(inst.N)
        self._validated: dict[int, GraphSnapshot] = {}

    def graph(self, t: int) -> GraphSnapshot:
        return self.inst.graph(t)

    def channels(self, t: int):
        """Validated directed channels ``(src, dst, edge_id)`` of round ``t``."""
        g = self.graph(t)
        src, dst, eid = g.channels
        if self._validated.get(id(g)) is not g:
            ok = np.array([g.has_edge(s, d) for s, d in zip(src.tolist(), dst.tolist())], dtype=bool)
            if not ok.all():  # pragma: no cover - channels are derived from the edge set
                raise LocalityError(f"round {t}: channel list contains non-edges")
            self._validated[id(g)] = g
        return src, dst, eid

    def exchange(self, t: int, iteration: int, values: np.ndarray, kind: str = "action", active=None) -> np.ndarray:
        """Each agent sends ``values[agent]`` to every neighbour.

        Returns the payload received on each directed channel (row ``c`` is what
        ``dst[c]`` got from ``src[c]``).  ``active`` optionally masks channels
        that do not fire this iteration.
        """
        if kind == "function":
            raise LocalityError("function descriptors must use ship_functions")
        src, dst, _ = self.channels(t)
        values = np.asarray(values)
        payload_dim = int(np.prod(values.shape[1:])) if values.ndim > 1 else 1
        s, d = (src, dst) if active is None else (src[active], dst[active])
        self.log._append_batch(_Batch(t, iteration, s, d, payload_dim, kind))
        return values[src]

    def ship_functions(self, t: int, dst: int, srcs, payload_dim: int, r: int) -> None:
        """Relay cost descriptors from ``srcs`` to ``dst``; charged per hop."""
        g = self.graph(t)
        srcs = np.asarray([s for s in srcs if s != dst], dtype=np.int64)
        if srcs.size == 0:
            return
        dist = g.hop_distances[srcs, dst]
        if not np.all(np.isfinite(dist)) or np.any(dist > r):
            bad = srcs[~(np.isfinite(dist) & (dist <= r))]
            raise LocalityError(f"round {t}: nodes {bad.tolist()} are more than {r} hops from {dst}")
        self.log._append_batch(
            _Batch(t, 0, srcs, np.full(srcs.size, dst), payload_dim, "function", dist.astype(np.int64))
        )

    def send(self, msg: Message, r: int | None = None) -> None:
        if not deliver(self.log, msg, self.graph(msg.round), r):
            raise LocalityError(f"rejected {msg}")

    @contextmanager
    def timed(self, agent: int = -1):
        """Accumulate wall-clock time under ``(algo, agent)``; ``-1`` means all agents."""
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.log.wall_clock[(self.algo, agent)] += time.perf_counter() - t0


def summarize(log: CommLog) -> dict:
    """Aggregate message, payload, compute and timing statistics.

    ``time_per_agent`` maps each algorithm to its total wall-clock time divided
    by the number of agents.
    """
    per_round: dict[int, int] = defaultdict(int)
    dims = 0
    for b in log.batches():
        per_round[b.round] += b.hop_count
        dims += b.hop_count * b.payload_dim
    n = max(log.n_agents, 1)
    times: dict[str, float] = defaultdict(float)
    for (algo, _agent), sec in log.wall_clock.items():
        times[algo] += sec
    return {
        "messages_per_round": dict(sorted(per_round.items())),
        "messages_total": int(sum(per_round.values())),
        "dims_total": int(dims),
        "ops_per_agent": dict(sorted(log.per_agent_ops.items())),
        "time_per_agent": {a: s / n for a, s in times.items()},
    }


def write_summary_json(log: CommLog, path, *, algo: str, N: int, D, beta: float, T: int) -> dict:
    s = summarize(log)
    doc = {
        "algo": algo,
        "N": N,
        "D": D,
        "beta": beta,
        "T": T,
        "messages": s["messages_total"],
        "dims": s["dims_total"],
        "tau_per_agent": s["time_per_agent"].get(algo, 0.0),
    }
    Path(path).write_text(json.dumps(doc, indent=2))
    return doc
