"""Experiment driver: algorithm dispatch, sweeps, competitive-ratio reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping, NamedTuple

import numpy as np

from .acord import KtPolicy, cr_star, lambda1_of_mu, run_acord, competitive_bound
from .baselines import LpcConfig, run_consensus, run_ftm, run_local, run_local_robd, run_lpc
from .costs import CostReport, Trajectory
from .instance import (
    Instance,
    generate_experiment_instance,
    generate_lower_bound_instance,
    generate_naive_failure_instance,
    load_instance,
)
from .oracles import offline_opt
from .simnet import CommLog, summarize

__all__ = [
    "AlgoSpec",
    "parse_algo",
    "run_algorithm",
    "ExperimentConfig",
    "load_config",
    "make_instance",
    "run_sweep",
    "CRRecord",
    "cr_report",
    "bound_violations",
    "BoundViolation",
    "ApproxBound",
    "approx_cr_bound",
    "aggregate_rows",
    "read_rows_csv",
]

log = logging.getLogger(__name__)

SIMPLE_ALGOS = ("ftm", "local", "local-robd", "consensus", "opt")


class BoundViolation(AssertionError):
    pass


# --------------------------------------------------------------------------
# Algorithm dispatch
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AlgoSpec:
    """Parsed algorithm label such as ``acord:fixed:12`` or ``lpc:2:1``."""

    name: str
    policy: KtPolicy | None = None
    lpc: LpcConfig | None = None

    @property
    def label(self) -> str:
        if self.name == "acord":
            return f"acord:{self.policy.label()}"
        if self.name == "lpc":
            return f"lpc:{self.lpc.r}:{self.lpc.k}"
        return self.name


def parse_algo(text: str) -> AlgoSpec:
    """Parse ``acord[:<policy>]``, ``lpc:<r>[:<k>]`` or a simple policy name."""
    text = text.strip()
    head, _, rest = text.partition(":")
    head = head.lower()
    if head == "acord":
        return AlgoSpec("acord", policy=KtPolicy.parse(rest) if rest else KtPolicy.crawl())
    if head == "lpc":
        parts = rest.split(":") if rest else []
        if not 1 <= len(parts) <= 2:
            raise ValueError(f"bad LPC spec {text!r}; expected lpc:<r>[:<k>]")
        return AlgoSpec("lpc", lpc=LpcConfig(int(parts[0]), int(parts[1]) if len(parts) == 2 else 1))
    if head.replace("_", "-") in SIMPLE_ALGOS and not rest:
        return AlgoSpec(head.replace("_", "-"))
    raise ValueError(f"unknown algorithm {text!r}")


class RunOutput(NamedTuple):
    """``seconds`` is the elapsed time of the whole call; ``compute_seconds``
    the compute-only wall clock the algorithm recorded in its log (equal to
    ``seconds`` for policies without a log)."""

    trajectory: Trajectory
    cost: CostReport
    log: CommLog | None
    seconds: float
    compute_seconds: float


def run_algorithm(inst: Instance, spec: AlgoSpec | str) -> RunOutput:
    if isinstance(spec, str):
        spec = parse_algo(spec)
    t0 = time.perf_counter()
    if spec.name == "acord":
        traj, cost, clog = run_acord(inst, spec.policy)
    elif spec.name == "lpc":
        traj, cost, clog = run_lpc(inst, spec.lpc)
    else:
        fn = {
            "ftm": run_ftm,
            "local": run_local,
            "local-robd": run_local_robd,
            "consensus": run_consensus,
            "opt": offline_opt,
        }[spec.name]
        traj, cost = fn(inst)
        clog = None
    elapsed = time.perf_counter() - t0
    compute = float(sum(clog.wall_clock.values())) if clog is not None else elapsed
    return RunOutput(traj, cost, clog, elapsed, compute)


# --------------------------------------------------------------------------
# Competitive-ratio report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CRRecord:
    """Realized cost of one algorithm against the offline optimum.

    ``bound`` is the guaranteed ceiling ``cr_acord * OPT + (1 + beta m^2/l)/(4T)``;
    it is binding only for the decentralized controller.
    """

    algo: str
    cost: float
    opt_cost: float
    ratio: float
    bound: float
    slack: float

    @property
    def guaranteed(self) -> bool:
        return self.algo.startswith("acord")

    @property
    def violated(self) -> bool:
        return self.guaranteed and self.slack < -1e-12 * max(1.0, abs(self.bound))


def cr_report(inst: Instance, traj_costs: Mapping[str, CostReport], opt: CostReport | None = None) -> list[CRRecord]:
    """Competitive ratio and guarantee slack of every algorithm.

    A positive cost against a zero optimum yields ``ratio = inf``.
    """
    if opt is None:
        _, opt = offline_opt(inst)
    bound = competitive_bound(opt.total, inst.mus, inst.T, inst.beta, inst.m, inst.l)
    out = []
    for algo, rep in traj_costs.items():
        if opt.total > 0:
            ratio = rep.total / opt.total
        else:
            ratio = 1.0 if rep.total == 0 else math.inf
        out.append(CRRecord(algo, rep.total, opt.total, ratio, bound, bound - rep.total))
    return out


def bound_violations(records) -> list[CRRecord]:
    return [r for r in records if r.violated]


class ApproxBound(NamedTuple):
    ratio_bound: float
    additive_per_round: float
    vacuous: bool


def approx_cr_bound(eps1, eps2, mu, lambda1) -> ApproxBound:
    """Competitive bound of an inexact regularized step.

    With ``s = sqrt(max(mu + lambda1))``, ``lmin = min(lambda1)`` and
    ``g = 2 eps2 s / lmin``:

    ``ratio = (CR + g) / (1 - g)``, ``additive = (eps2 s / (2 lmin) + eps1 / lmin) / (1 - g)``

    where ``CR = max(1, max_i lambda1_i (1 + lambda1_i/mu_i)) / lmin`` is the
    exact step's ratio (``1/2 + 1/2 sqrt(1 + 4/mu)`` at the optimal ``lambda1``).  Arrays
    of per-agent ``mu`` and ``lambda1`` give the networked version.  When
    ``g >= 1`` the bound is vacuous: both components are ``inf``.

    Parameters
    ----------
    eps1 : float
        Objective gap of the inexact step against the exact one.
    eps2 : float
        Distance between the inexact and the exact step.
    """
    mu = np.atleast_1d(np.asarray(mu, float))
    lam = np.atleast_1d(np.asarray(lambda1, float))
    if eps1 < 0 or eps2 < 0:
        raise ValueError("error terms must be nonnegative")
    s = math.sqrt(float(np.max(mu + lam)))
    lmin = float(lam.min())
    cr = max(1.0, float(np.max(lam * (1.0 + lam / mu)))) / lmin
    g = 2.0 * eps2 * s / lmin
    if g >= 1.0:
        return ApproxBound(math.inf, math.inf, True)
    return ApproxBound((cr + g) / (1.0 - g), (eps2 * s / (2 * lmin) + eps1 / lmin) / (1.0 - g), False)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------

GENERATORS = {
    "experiment": generate_experiment_instance,
    "lower_bound": generate_lower_bound_instance,
    "naive": generate_naive_failure_instance,
}


@dataclass
class ExperimentConfig:
    """Sweep description (JSON).

    ``instance`` holds ``generator`` (``experiment``, ``lower_bound``,
    ``naive`` or ``file``) and ``params``; ``seeds`` are passed to seeded
    generators.  ``sweep`` optionally varies one instance parameter:
    ``{"param": "beta", "values": [10, 50], "algorithms": [[...], [...]]}``
    where the per-value algorithm lists are optional.
    """

    instance: dict
    algorithms: list[str]
    seeds: list[int] = field(default_factory=lambda: [0])
    sweep: dict | None = None
    outputs: str | None = None
    repetitions: int = 1
    with_opt: bool = True
    name: str = "sweep"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not self.seeds:
            raise ValueError("seed list must be nonempty")
        if not self.algorithms and not (self.sweep and self.sweep.get("algorithms")):
            raise ValueError("no algorithms given")
        for a in self.algorithms:
            parse_algo(a)

    def points(self):
        """Yield ``(x, instance params, algorithm labels)`` per sweep point."""
        base = dict(self.instance.get("params", {}))
        if not self.sweep:
            yield "", base, self.algorithms
            return
        per = self.sweep.get("algorithms")
        for k, value in enumerate(self.sweep["values"]):
            params = {**base, self.sweep["param"]: value}
            yield value, params, (per[k] if per else self.algorithms)


def load_config(path) -> ExperimentConfig:
    doc = json.loads(Path(path).read_text())
    return ExperimentConfig(**doc)


def make_instance(generator: str, params: dict, seed: int | None) -> Instance:
    if generator == "file":
        return load_instance(params["path"])
    fn = GENERATORS[generator]
    kwargs = dict(params)
    if generator == "experiment":
        kwargs["seed"] = seed
    return fn(**kwargs)


ROW_FIELDS = [
    "x",
    "algo",
    "seed",
    "hitting",
    "switching",
    "dissimilarity",
    "total",
    "opt_total",
    "ratio",
    "messages",
    "tau_per_agent",
    "error",
]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _stderr(vals: np.ndarray) -> float:
    if vals.size < 2:
        return 0.0
    return float(np.std(vals, ddof=1) / math.sqrt(vals.size))


def aggregate_rows(rows) -> list[dict]:
    """Mean and standard error of ``total`` per ``(x, algo)``, plus normalized copies.

    Normalized columns divide by the largest mean at the same ``x``; rows with
    an error are skipped.  Groups keep first-appearance order.
    """
    groups: dict[tuple[str, str], list[float]] = {}
    ratios: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        if r.get("error"):
            continue
        key = (str(r["x"]), str(r["algo"]))
        groups.setdefault(key, []).append(float(r["total"]))
        ratio = r.get("ratio")
        if ratio not in (None, ""):
            ratios.setdefault(key, []).append(float(ratio))
    out = []
    for (x, algo), vals in groups.items():
        arr = np.array(vals)
        rat = np.array(ratios.get((x, algo), []))
        out.append(
            {
                "x": x,
                "algo": algo,
                "n": int(arr.size),
                "mean": float(np.mean(arr)),
                "stderr": _stderr(arr),
                "mean_ratio_to_opt": float(np.mean(rat)) if rat.size else float("nan"),
            }
        )
    peak: dict[str, float] = {}
    for a in out:
        peak[a["x"]] = max(peak.get(a["x"], 0.0), a["mean"])
    for a in out:
        p = peak[a["x"]]
        a["mean_normalized"] = a["mean"] / p if p > 0 else 0.0
        a["stderr_normalized"] = a["stderr"] / p if p > 0 else 0.0
    return out


def read_rows_csv(path) -> list[dict]:
    with open(Path(path), newline="") as fh:
        return list(csv.DictReader(fh))


def _write_csv(path: Path, fields, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})


def run_sweep(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Run every (sweep point, seed, algorithm) and write the report files.

    Writes ``rows.csv`` (one row per run), ``aggregate.csv`` (columns ``x``,
    ``algo``, ``mean``, ``stderr`` and normalized variants) and
    ``summary.json`` into ``out_dir`` (or ``cfg.outputs``).  A failing
    algorithm is recorded in the ``error`` column and does not stop the sweep.

    Returns
    -------
    dict with keys ``rows``, ``aggregate`` and ``paths``.
    """
    out = Path(out_dir or cfg.outputs or ".")
    out.mkdir(parents=True, exist_ok=True)
    gen = cfg.instance.get("generator", "experiment")
    rows = []
    timing: dict[tuple[str, str], list[float]] = {}
    for x, params, algos in cfg.points():
        for seed in cfg.seeds:
            inst = make_instance(gen, params, seed)
            opt_total = None
            if cfg.with_opt:
                try:
                    opt_total = offline_opt(inst)[1].total
                except Exception as exc:  # noqa: BLE001 - recorded, not fatal
                    log.warning("offline optimum failed at x=%s seed=%s: %s", x, seed, exc)
            for label in algos:
                row = {"x": x, "algo": label, "seed": seed}
                try:
                    spec = parse_algo(label)
                    secs = []
                    for _ in range(cfg.repetitions):
                        res = run_algorithm(inst, spec)
                        secs.append(res.compute_seconds)
                    rep = res.cost
                    row.update(
                        hitting=rep.hitting,
                        switching=rep.switching,
                        dissimilarity=rep.dissimilarity,
                        total=rep.total,
                        opt_total=opt_total,
                        ratio=(rep.total / opt_total) if opt_total else None,
                        messages=res.log.count() if res.log is not None else 0,
                        tau_per_agent=float(np.median(secs)) / inst.N,
                    )
                    timing.setdefault((str(x), label), []).append(row["tau_per_agent"])
                except Exception as exc:  # noqa: BLE001 - partial-failure isolation
                    log.warning("%s failed at x=%s seed=%s: %s", label, x, seed, exc)
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    agg = aggregate_rows(rows)
    for a in agg:
        taus = timing.get((a["x"], a["algo"]), [])
        a["tau_per_agent"] = float(np.mean(taus)) if taus else float("nan")
    paths = {"rows": out / "rows.csv", "aggregate": out / "aggregate.csv", "summary": out / "summary.json"}
    _write_csv(paths["rows"], ROW_FIELDS, rows)
    _write_csv(
        paths["aggregate"],
        ["x", "algo", "n", "mean", "stderr", "mean_normalized", "stderr_normalized", "mean_ratio_to_opt", "tau_per_agent"],
        agg,
    )
    paths["summary"].write_text(json.dumps({"config": asdict(cfg), "aggregate": agg}, indent=2, default=str))
    return {"rows": rows, "aggregate": agg, "paths": paths}


def summary_record(label: str, inst: Instance, clog: CommLog | None, seconds: float) -> dict:
    """Summary document ``{algo, N, D, beta, T, messages, dims, tau_per_agent}``."""
    g = inst.graph(1)
    D = int(g.degrees[0]) if g.is_regular() else None
    s = summarize(clog) if clog is not None else {"messages_total": 0, "dims_total": 0}
    return {
        "algo": label,
        "N": inst.N,
        "D": D,
        "beta": inst.beta,
        "T": inst.T,
        "messages": s["messages_total"],
        "dims": s["dims_total"],
        "tau_per_agent": seconds / inst.N,
    }
