"""Decentralized smoothed online convex optimization over networked agents.

Agents on a (possibly changing) graph each pay a hitting cost, a switching
cost for moving their action and a dissimilarity cost per edge for disagreeing
with neighbours.  The package provides the ACORD controller, which only ever
exchanges actions with immediate neighbours, centralized oracles to compare
against, several baselines, and a metered message-passing harness.
"""

from .acord import AgentState, KtPolicy, acord_round, compute_Kt, cr_star, lambda1_of_mu, network_crawl, run_acord
from .baselines import (
    LpcConfig,
    acord_flops_estimate,
    lpc_flops_estimate,
    run_consensus,
    run_ftm,
    run_local,
    run_local_robd,
    run_lpc,
)
from .costs import CostReport, Trajectory, dissimilarity, surrogate_F, total_cost
from .graph import (
    FullCoupling,
    GraphSnapshot,
    ScaledIdentity,
    SpectralReport,
    build_d_regular,
    diameter,
    r_hop_neighborhood,
    sigma_dregular,
    sigma_exact,
)
from .instance import (
    CustomCost,
    HittingCostSpec,
    Instance,
    QuadraticCost,
    generate_experiment_instance,
    generate_lower_bound_instance,
    generate_naive_failure_instance,
)
from .oracles import SolveConfig, am_reference, offline_opt, robd_round_exact
from .runner import CRRecord, ExperimentConfig, approx_cr_bound, cr_report, run_sweep
from .simnet import CommLog, Harness, Message, deliver, summarize

__version__ = "0.1.0"
