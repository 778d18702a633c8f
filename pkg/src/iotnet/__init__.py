"""Imitation-regularized optimal transport on directed logistics networks.

The package solves endpoint-constrained path-distribution problems of the form
``min E_P[cost] + alpha * KL(P || target)`` by reduction to a Schrodinger
bridge: tilt the target by the path costs, then match the endpoint marginals
with Sinkhorn scaling.  Markov structure is exploited when it exists
(``spectral`` + ``bridge``), and explicit path enumeration handles rule-based,
non-additive costs (``imitation``).  ``approx`` fits the best Markov chain to
a non-Markov solution, ``robust`` certifies worst-case costs over an entropic
ball of cost perturbations, ``oracle`` provides brute-force reference solvers,
and ``scenario`` runs end-to-end logistics studies.
"""

from .approx import (MarkovFit, fit_markov, fit_objective_error, fitted_prior,
                     markov_plan_from_fit)
from .bridge import (BridgeSolution, EndpointCache, MarkovPrior, PathPrior,
                     markov_path_law, marginalize_prior, path_kl,
                     path_law_from_endpoint, sinkhorn_markov, sinkhorn_path)
from .errors import (ConvergenceError, InfeasibleError, IOTError,
                     ValidationError)
from .fileio import (atomic_write_text, load_marginal, load_path_distribution,
                     load_prior, load_step_weights, read_plan,
                     save_path_distribution, write_plan)
from .imitation import (ImitationTarget, IOTProblem, ObjectiveTerms,
                        TransportPlan, blend_distribution, edge_usage_from_law,
                        evaluate_objective_terms, expand_target,
                        imitation_prior_markov, imitation_prior_paths,
                        solve_iot)
from .network import (CostModel, Edge, EdgeKind, Network, Node, PathSpace,
                      build_network, enumerate_paths, load_network,
                      markov_edge_cost, markov_model_from_network,
                      network_from_dict, network_to_dict, path_cost,
                      path_costs, reprice, ruled_path_cost, save_network,
                      strongly_connected)
from .oracle import DenseCoupling, dense_ipf, lp_ot, objective_eval
from .robust import (RobustCertificate, RobustEquivalenceReport,
                     robust_equivalence_check, robust_membership,
                     worst_case_certificate)
from .scenario import (DisasterResult, DisasterSpec, PlanReport, RiskWeights,
                       ScenarioResult, ScenarioSpec, build_risk_matrix,
                       emit_report, load_scenario, run_imitation_scenario,
                       run_risk_scenario, run_scenario)
from .spectral import (RBPrior, build_rb_prior, perron, rb_path_density,
                       rb_path_density_gibbs, rb_walk, weight_matrix)

__version__ = "0.1.0"

__all__ = [
    "BridgeSolution", "ConvergenceError", "CostModel", "DenseCoupling",
    "DisasterResult", "DisasterSpec", "Edge", "EdgeKind", "EndpointCache",
    "IOTError", "IOTProblem", "ImitationTarget", "InfeasibleError",
    "MarkovFit", "MarkovPrior", "Network", "Node", "ObjectiveTerms",
    "PathPrior", "PathSpace", "PlanReport", "RBPrior", "RiskWeights",
    "RobustCertificate", "RobustEquivalenceReport", "ScenarioResult",
    "ScenarioSpec", "TransportPlan", "ValidationError", "atomic_write_text",
    "blend_distribution", "build_network", "build_rb_prior",
    "build_risk_matrix", "dense_ipf", "edge_usage_from_law", "emit_report",
    "enumerate_paths", "evaluate_objective_terms", "expand_target",
    "fit_markov", "fit_objective_error", "fitted_prior",
    "imitation_prior_markov", "imitation_prior_paths", "load_marginal",
    "load_network", "load_path_distribution", "load_prior", "load_scenario",
    "load_step_weights", "lp_ot", "marginalize_prior", "markov_edge_cost",
    "markov_model_from_network", "markov_path_law", "markov_plan_from_fit",
    "network_from_dict", "network_to_dict",
    "objective_eval", "path_cost", "path_costs", "path_kl",
    "path_law_from_endpoint", "perron", "rb_path_density",
    "rb_path_density_gibbs", "rb_walk", "read_plan", "reprice",
    "robust_equivalence_check", "robust_membership", "ruled_path_cost",
    "run_imitation_scenario", "run_risk_scenario", "run_scenario",
    "save_network", "save_path_distribution", "sinkhorn_markov",
    "sinkhorn_path", "solve_iot", "strongly_connected",
    "weight_matrix", "worst_case_certificate", "write_plan",
]
