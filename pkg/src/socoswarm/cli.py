"""Command-line interface ``soco-swarm``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .acord import KtPolicy, lambda1_of_mu
from .baselines import LpcConfig
from .costs import write_cost_csv
from .graph import read_edge_list, sigma_dregular, sigma_exact
from .instance import (
    generate_experiment_instance,
    generate_lower_bound_instance,
    generate_naive_failure_instance,
    load_instance,
    save_instance,
)
from .oracles import offline_opt
from .runner import (
    AlgoSpec,
    bound_violations,
    cr_report,
    load_config,
    parse_algo,
    run_algorithm,
    run_sweep,
    summary_record,
)

EXIT_BOUND_VIOLATION = 2


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    res = run_sweep(cfg, args.out)
    for a in res["aggregate"]:
        print(f"{a['x']!s:>8}  {a['algo']:<20} mean={a['mean']:.6g}  stderr={a['stderr']:.3g}  n={a['n']}")
    print(f"wrote {res['paths']['rows']}, {res['paths']['aggregate']}, {res['paths']['summary']}")
    errors = [r for r in res["rows"] if r.get("error")]
    if errors:
        print(f"{len(errors)} run(s) failed; see the error column", file=sys.stderr)
    return 0


def _cmd_cr(args) -> int:
    inst = load_instance(args.instance)
    _, opt = offline_opt(inst)
    costs = {}
    for label in args.algos.split(","):
        spec = parse_algo(label)
        costs[spec.label] = run_algorithm(inst, spec).cost
    records = cr_report(inst, costs, opt)
    print("algo,cost,opt_cost,ratio,bound,slack")
    for r in records:
        print(f"{r.algo},{r.cost!r},{r.opt_cost!r},{r.ratio!r},{r.bound!r},{r.slack!r}")
    bad = bound_violations(records)
    if bad:
        for r in bad:
            print(f"bound violated by {r.algo}: cost {r.cost:.6g} > bound {r.bound:.6g}", file=sys.stderr)
        return EXIT_BOUND_VIOLATION
    return 0


def _cmd_sigma(args) -> int:
    g = read_edge_list(args.graph)
    mu = float(args.mu)
    lam = lambda1_of_mu(mu)
    rep = sigma_exact(g, np.full(g.n, mu), np.full(g.n, lam), args.beta, args.m)
    doc = {"n": g.n, "edges": g.num_edges, "mu": mu, "lambda1": lam, "beta": args.beta, "m": args.m,
           "sigma": rep.sigma, "method": rep.method}
    if g.is_regular() and g.degrees[0] >= 2:
        cf = sigma_dregular(int(g.degrees[0]), mu, lam, args.beta, args.m)
        doc.update(D=int(g.degrees[0]), sigma_closed_form=cf.sigma, lower=cf.lower, upper=cf.upper)
    print(json.dumps(doc, indent=2))
    return 0


def _algo_from_args(args) -> AlgoSpec:
    if args.algo == "acord":
        return AlgoSpec("acord", policy=KtPolicy.parse(args.kt))
    if args.algo == "lpc":
        return AlgoSpec("lpc", lpc=LpcConfig(args.r, args.k))
    return parse_algo(args.algo)


def _cmd_simulate(args) -> int:
    inst = load_instance(args.instance)
    spec = _algo_from_args(args)
    res = run_algorithm(inst, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cost_csv(res.cost, out / "costs.csv")
    if res.log is not None:
        res.log.to_csv(out / "comm.csv")
    doc = summary_record(spec.label, inst, res.log, res.compute_seconds)
    (out / "summary.json").write_text(json.dumps(doc, indent=2))
    print(json.dumps({**doc, "cost": res.cost.total}, indent=2))
    if spec.name == "acord" and args.check_bound:
        records = cr_report(inst, {spec.label: res.cost})
        if bound_violations(records):
            print("bound violated", file=sys.stderr)
            return EXIT_BOUND_VIOLATION
    return 0


def _cmd_generate(args) -> int:
    if args.kind == "experiment":
        inst = generate_experiment_instance(args.N, args.T, args.D, args.beta, args.seed, args.alpha_floor)
    elif args.kind == "lower-bound":
        inst = generate_lower_bound_instance(args.N, args.T, args.mu, args.mu_prime, args.variant, beta=args.beta)
    else:
        inst = generate_naive_failure_instance(args.variant, args.beta, args.T)
    save_instance(inst, args.out)
    print(f"wrote {args.out} (T={inst.T}, N={inst.N}, d={inst.d})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="soco-swarm", description="Networked smoothed online optimization experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sweep described by a JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("cr", help="competitive ratios of several algorithms on one instance")
    c.add_argument("--instance", required=True)
    c.add_argument("--algos", default="acord,lpc:1:1,ftm")
    c.set_defaults(func=_cmd_cr)

    s = sub.add_parser("sigma", help="strong-convexity constant of a graph")
    s.add_argument("--graph", required=True)
    s.add_argument("--mu", type=float, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--m", type=float, default=1.0)
    s.set_defaults(func=_cmd_sigma)

    m = sub.add_parser("simulate", help="run one algorithm and write cost, message log and summary")
    m.add_argument("--instance", required=True)
    m.add_argument("--algo", required=True, help="acord | lpc | ftm | local | local-robd | consensus | opt")
    m.add_argument("--kt", default="crawl", help="fixed:K | bounded:Mf:Ms | crawl | eps:E")
    m.add_argument("--r", type=int, default=1)
    m.add_argument("--k", type=int, default=1)
    m.add_argument("--out", required=True)
    m.add_argument("--check-bound", action="store_true", help="exit 2 if the cost guarantee is violated")
    m.set_defaults(func=_cmd_simulate)

    g = sub.add_parser("generate", help="write a generated instance as JSON")
    g.add_argument("kind", choices=["experiment", "lower-bound", "naive"])
    g.add_argument("--N", type=int, default=20)
    g.add_argument("--T", type=int, default=20)
    g.add_argument("--D", type=int, default=2)
    g.add_argument("--beta", type=float, default=50.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--alpha-floor", type=float, default=0.1)
    g.add_argument("--mu", type=float, default=1.0)
    g.add_argument("--mu-prime", type=float, default=1e6)
    g.add_argument("--variant", default="symmetric")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
