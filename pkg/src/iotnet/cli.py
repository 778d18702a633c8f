"""Command-line interface for the transport solvers.

Subcommands: ``rbwalk`` (spectral walk prior of a network), ``bridge``
(Schrodinger system against an explicit prior), ``solve`` (the full
imitation-regularized transport problem), ``approx`` (best Markov fit of a
path prior), ``robust-cert`` (worst-case cost certificate of a saved plan),
``scenario`` (logistics scenario files plus report emission), and
``oracle check`` (self-verification against the brute-force solvers).

Exit codes: 0 success; 1 bad input or infeasible problem (and usage errors);
2 iteration budget exhausted.  Every output file is written atomically, all
floats in shortest round-trip form, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fixtures
from .approx import fit_markov
from .bridge import (BridgeSolution, MarkovPrior, path_law_from_endpoint,
                     sinkhorn_markov, sinkhorn_path)
from .errors import ConvergenceError, InfeasibleError, ValidationError
from .fileio import (atomic_write_text, fmt, format_path, load_marginal,
                     load_path_distribution, load_prior, load_step_weights,
                     read_plan, save_path_distribution, write_plan)
from .imitation import ImitationTarget, IOTProblem, expand_target, solve_iot
from .network import (CostModel, Network, enumerate_paths, load_network,
                      markov_model_from_network, path_costs)
from .oracle import dense_ipf, lp_ot
from .robust import worst_case_certificate
from .scenario import emit_report, load_scenario, run_scenario
from .spectral import build_rb_prior


class _Parser(argparse.ArgumentParser):
    """argparse subclass exiting 1 on usage errors (2 means non-convergence)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _common_flags() -> argparse.ArgumentParser:
    """Shared flags, accepted before or after the subcommand.

    Defaults are SUPPRESS and get resolved after parsing: a subparser's
    default would otherwise clobber a value given before the subcommand.
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for builtin networks and samplers (default 0)")
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS,
                        help="solver stopping tolerance (default per command)")
    common.add_argument("--max-iter", type=int, default=argparse.SUPPRESS,
                        dest="max_iter",
                        help="iteration budget for iterative solvers")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, dest="out_dir",
                        help="directory for output files (default .)")
    return common


def _resolve_common(args: argparse.Namespace, *, tol_default: float = 1e-10) -> None:
    args.seed = getattr(args, "seed", 0)
    args.tol = getattr(args, "tol", tol_default)
    args.max_iter = getattr(args, "max_iter", 100_000)
    args.out_dir = getattr(args, "out_dir", ".")
    if args.tol <= 0:
        raise ValidationError(f"--tol must be positive, got {args.tol}")
    if args.max_iter < 1:
        raise ValidationError(f"--max-iter must be >= 1, got {args.max_iter}")


def _out_path(args: argparse.Namespace, name: str) -> str:
    given = getattr(args, "out", None)
    if given:
        return given if os.path.isabs(given) else os.path.join(args.out_dir, given)
    return os.path.join(args.out_dir, name)


def _dump_json(path: str, doc: dict) -> None:
    atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# network references
# ---------------------------------------------------------------------------


@dataclass
class _NetworkBundle:
    network: Network
    ruled: CostModel | None
    markov: CostModel
    nu0: np.ndarray | None = None
    nuT: np.ndarray | None = None
    horizon: int | None = None


def _load_network_ref(ref: str, seed: int) -> _NetworkBundle:
    """A network plus cost models from a file path or a ``builtin:`` name."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name == "tiny":
            fx = fixtures.tiny_fixture()
            return _NetworkBundle(network=fx.network, ruled=None, markov=fx.model,
                                  nu0=fx.nu0, nuT=fx.nuT,
                                  horizon=fx.space.horizon)
        if name in ("synthetic30", "risk30"):
            builder = fixtures.synthetic30 if name == "synthetic30" else fixtures.risk30
            fx = builder(seed)
            nu0, nuT = fx.marginals()
            return _NetworkBundle(network=fx.network, ruled=fx.ruled,
                                  markov=markov_model_from_network(fx.network, fx.ruled),
                                  nu0=nu0, nuT=nuT, horizon=fx.horizon)
        raise ValidationError(f"unknown builtin network {name!r} "
                              f"(expected tiny, synthetic30, or risk30)")
    network, ruled = load_network(ref)
    return _NetworkBundle(network=network, ruled=ruled,
                          markov=markov_model_from_network(network, ruled))


def _pick_model(bundle: _NetworkBundle, choice: str) -> CostModel:
    if choice == "markov":
        return bundle.markov
    if choice == "ruled":
        if bundle.ruled is None:
            raise ValidationError("this network has no rule-based cost model; "
                                  "use --cost markov")
        return bundle.ruled
    return bundle.ruled if bundle.ruled is not None else bundle.markov


def _marginal(args_value: str | None, fallback: np.ndarray | None, n: int,
              flag: str) -> np.ndarray:
    if args_value is not None:
        return load_marginal(args_value, n)
    if fallback is not None:
        return fallback
    raise ValidationError(f"{flag} is required for this network")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_rbwalk(args: argparse.Namespace) -> int:
    _resolve_common(args, tol_default=1e-12)
    bundle = _load_network_ref(args.network, args.seed)
    prior = build_rb_prior(bundle.markov, args.alpha, bundle.network.n,
                           tol=args.tol, max_iter=args.max_iter)
    out = _out_path(args, "rbwalk.json")
    _dump_json(out, {
        "alpha": args.alpha,
        "n": bundle.network.n,
        "spectral_radius": prior.spectral_radius,
        "left_vector": prior.left_vector.tolist(),
        "right_vector": prior.right_vector.tolist(),
        "node_weights": prior.node_weights.tolist(),
        "transitions": prior.transitions.tolist(),
    })
    print(f"spectral_radius={fmt(prior.spectral_radius)} n={bundle.network.n} "
          f"wrote {out}")
    return 0


def _chain_support_law(initial: np.ndarray, transitions,
                       horizon: int) -> dict[tuple[int, ...], float]:
    """Enumerate the support of a Markov path law (small chains only)."""
    table = {(int(i) + 1,): float(initial[i])
             for i in np.nonzero(initial > 0)[0]}
    for t in range(horizon):
        mat = transitions[t] if isinstance(transitions, (list, tuple)) else transitions
        nxt: dict[tuple[int, ...], float] = {}
        for nodes, prob in table.items():
            row = mat[nodes[-1] - 1]
            for j in np.nonzero(row > 0)[0]:
                nxt[nodes + (int(j) + 1,)] = prob * float(row[j])
        table = nxt
        if len(table) > 1_000_000:
            raise ValidationError("path law support is too large to enumerate; "
                                  "drop --emit-paths")
    return table


def _cmd_bridge(args: argparse.Namespace) -> int:
    _resolve_common(args)
    prior = load_prior(args.prior)
    if isinstance(prior, MarkovPrior):
        n = prior.initial.shape[0]
        horizon = args.horizon
        if horizon is None:
            if prior.matrices is not None:
                horizon = len(prior.matrices)
            else:
                raise ValidationError(
                    "--horizon is required for a markov prior with one matrix")
        nu0 = load_marginal(args.nu0, n)
        nuT = load_marginal(args.nuT, n)
        solution = sinkhorn_markov(prior, nu0, nuT, horizon,
                                   tol=args.tol, max_iter=args.max_iter)
        kernel = prior.endpoint_kernel(horizon)
        coupling = solution.phihat0[:, None] * kernel * solution.phiT[None, :]
    else:
        space = prior.path_space
        n, horizon = space.n, space.horizon
        if args.horizon is not None and args.horizon != horizon:
            raise ValidationError(
                f"--horizon {args.horizon} != prior horizon {horizon}")
        nu0 = load_marginal(args.nu0, n)
        nuT = load_marginal(args.nuT, n)
        solution = sinkhorn_path(prior, nu0, nuT, tol=args.tol,
                                 max_iter=args.max_iter)
        coupling = solution.endpoint_coupling

    out = _out_path(args, "bridge.json")
    _dump_json(out, {
        "horizon": horizon,
        "n": n,
        "iterations": solution.iterations,
        "residual": solution.residual,
        "phi0": solution.phi0.tolist(),
        "phiT": solution.phiT.tolist(),
        "phihat0": solution.phihat0.tolist(),
        "phihatT": solution.phihatT.tolist(),
        "endpoint_coupling": coupling.tolist(),
    })
    written = [out]
    if args.emit_paths:
        if isinstance(prior, MarkovPrior):
            table = _chain_support_law(nu0, solution.transitions, horizon)
        else:
            law = path_law_from_endpoint(solution, prior)
            table = {p: float(law[k]) for k, p in enumerate(prior.path_space.paths)
                     if law[k] > 0}
        paths_out = out[:-5] + "_paths.json" if out.endswith(".json") \
            else out + "_paths.json"
        save_path_distribution(paths_out, horizon, table)
        written.append(paths_out)
    print(f"iterations={solution.iterations} residual={fmt(solution.residual)} "
          f"wrote {' '.join(written)}")
    return 0


def _cmd_solve(args: argparse.Namespace) -> int:
    _resolve_common(args)
    bundle = _load_network_ref(args.network, args.seed)
    network = bundle.network
    model = _pick_model(bundle, args.cost)
    horizon = args.horizon if args.horizon is not None else bundle.horizon
    if horizon is None:
        raise ValidationError("--horizon is required for this network")
    nu0 = _marginal(args.nu0, bundle.nu0, network.n, "--nu0")
    nuT = _marginal(args.nuT, bundle.nuT, network.n, "--nuT")
    starts = [i + 1 for i in np.nonzero(nu0 > 0)[0]]
    ends = [i + 1 for i in np.nonzero(nuT > 0)[0]]
    space = enumerate_paths(network, horizon, starts, ends, model)

    if args.q_file is not None:
        q_horizon, table = load_path_distribution(args.q_file)
        if q_horizon != horizon:
            raise ValidationError(
                f"target horizon {q_horizon} != problem horizon {horizon}")
        unknown = [p for p in table if p not in space.index]
        if unknown:
            raise ValidationError("target puts mass on paths outside the "
                                  f"feasible space, e.g. {unknown[:3]}")
        q = np.zeros(space.size)
        for p, prob in table.items():
            q[space.index[p]] = prob
        total = float(q.sum())
        if total <= 0:
            raise ValidationError("target carries no mass on the feasible space")
        target = ImitationTarget.paths(q / total, blend=args.beta)
    elif args.rq_file is not None:
        initial, matrix = load_step_weights(args.rq_file, network)
        target = ImitationTarget.markov(matrix, initial, blend=args.beta,
                                        stochastic=False)
    else:
        target = ImitationTarget.uniform(space.size)

    problem = IOTProblem(network=network, cost_model=model, path_space=space,
                         nu0=nu0, nuT=nuT, alpha=args.alpha, target=target)
    plan = solve_iot(problem, force_path=args.force_path, tol=args.tol,
                     max_iter=args.max_iter)
    out = _out_path(args, "plan.txt")
    write_plan(out, plan)
    obj = plan.objective
    print(f"paths={space.size} expected_cost={fmt(obj.expected_cost)} "
          f"kl_to_target={fmt(obj.kl_to_target)} total={fmt(obj.total)} "
          f"wrote {out}")
    return 0


def _cmd_approx(args: argparse.Namespace) -> int:
    _resolve_common(args)
    prior = load_prior(args.prior)
    if isinstance(prior, MarkovPrior):
        raise ValidationError("the prior is already Markov; nothing to fit")
    fit = fit_markov(prior)
    init = np.zeros(fit.n)
    for v, s in fit.initial_log.items():
        init[v - 1] = float(np.exp(s))
    init /= init.sum()
    mat = np.zeros((fit.n, fit.n))
    for (i, j), s in fit.step_log.items():
        mat[i - 1, j - 1] = float(np.exp(s))
    out = _out_path(args, "approx.json")
    _dump_json(out, {
        "type": "markov",
        "initial": init.tolist(),
        "matrix": mat.tolist(),
        "fit_residual": fit.residual,
        "gauge_component": fit.gauge_component,
        "horizon": fit.horizon,
    })
    print(f"residual={fmt(fit.residual)} gauge_component={fmt(fit.gauge_component)} "
          f"wrote {out}")
    return 0


def _cmd_robust_cert(args: argparse.Namespace) -> int:
    _resolve_common(args)
    plan = read_plan(args.plan)
    paths = sorted(plan["paths"])
    law = np.array([plan["paths"][p][0] for p in paths])
    costs = np.array([plan["paths"][p][1] for p in paths])
    total = float(law.sum())
    if not (0.999999 <= total <= 1.000001):
        raise ValidationError(f"plan probabilities sum to {total!r}, expected 1")
    law = law / total

    alpha = args.alpha
    if alpha is None:
        meta = plan["meta"]
        if "alpha" not in meta:
            raise ValidationError("plan file carries no alpha; pass --alpha")
        alpha = float(meta["alpha"])

    q_horizon, table = load_path_distribution(args.q_file)
    if paths and q_horizon != len(paths[0]) - 1:
        raise ValidationError(f"target horizon {q_horizon} does not match the "
                              f"plan's path length")
    index = {p: k for k, p in enumerate(paths)}
    unknown = [p for p in table if p not in index]
    if unknown:
        raise ValidationError("target puts mass on paths absent from the plan "
                              f"file, e.g. {unknown[:3]}; re-solve with a plan "
                              "covering the target's support")
    q = np.zeros(len(paths))
    for p, prob in table.items():
        q[index[p]] = prob

    cert = worst_case_certificate(law, costs, q, alpha, args.epsilon)
    out = _out_path(args, "robust_cert.json")
    maximizer = {format_path(p): float(cert.maximizer[k])
                 for k, p in enumerate(paths) if np.isfinite(cert.maximizer[k])}
    _dump_json(out, {
        "alpha": alpha,
        "epsilon": cert.epsilon,
        "nominal_cost": cert.nominal_cost,
        "kl_term": cert.kl_term,
        "worst_case_cost": cert.worst_case_cost,
        "maximizer": maximizer,
    })
    print(f"nominal_cost={fmt(cert.nominal_cost)} "
          f"worst_case_cost={fmt(cert.worst_case_cost)} wrote {out}")
    return 0


def _cmd_scenario(args: argparse.Namespace) -> int:
    _resolve_common(args)
    spec = load_scenario(args.spec)
    result = run_scenario(spec, seed=args.seed, tol=args.tol,
                          max_iter=args.max_iter)
    written = emit_report(result, args.out_dir)
    opt = result.reports["optimal"].total_cost
    imi = result.reports["imitation"].total_cost
    line = (f"kind={result.kind} paths={result.space.size} "
            f"optimal_cost={fmt(opt)} imitation_cost={fmt(imi)}")
    if result.disaster is not None:
        line += (f" imitation_after={fmt(result.disaster.imitation_total_after)}"
                 f" optimal_after={fmt(result.disaster.optimal_total_after)}")
    print(line)
    print(f"wrote {len(written)} report files to {args.out_dir}")
    return 0


def _oracle_problem(args: argparse.Namespace):
    name = args.fixture
    if name == "tiny":
        fx = fixtures.tiny_fixture()
        alpha = args.alpha if args.alpha is not None else 0.5
        return fx.network, fx.model, fx.space, fx.nu0, fx.nuT, alpha, True
    if name == "four":
        network, model = fixtures.four_node_fixture()
        space = enumerate_paths(network, 3, [1], [1, 2, 3, 4], model)
        counts = np.bincount(space.ends, minlength=network.n + 1)[1:].astype(float)
        counts[0] *= 2.0
        nuT = counts / counts.sum()
        nu0 = np.zeros(network.n)
        nu0[0] = 1.0
        alpha = args.alpha if args.alpha is not None else 0.5
        return network, model, space, nu0, nuT, alpha, True
    builder = fixtures.synthetic30 if name == "synthetic30" else fixtures.risk30
    fx = builder(args.seed)
    nu0, nuT = fx.marginals()
    space = enumerate_paths(fx.network, fx.horizon, sorted(fx.supply),
                            sorted(fx.demand), fx.ruled)
    alpha = args.alpha if args.alpha is not None else 80.0
    return fx.network, fx.ruled, space, nu0, nuT, alpha, False


def _cmd_oracle_check(args: argparse.Namespace) -> int:
    _resolve_common(args)
    network, model, space, nu0, nuT, alpha, run_lp = _oracle_problem(args)
    costs = path_costs(space, model, network)
    target = ImitationTarget.uniform(space.size)
    problem = IOTProblem(network=network, cost_model=model, path_space=space,
                         nu0=nu0, nuT=nuT, alpha=alpha, target=target)
    plan = solve_iot(problem, tol=args.tol, max_iter=args.max_iter)

    failures = 0

    def report(name: str, ok: bool, detail: str) -> None:
        nonlocal failures
        print(f"{'ok' if ok else 'FAIL'} {name} ({detail})")
        if not ok:
            failures += 1

    q = expand_target(target, space)
    weights = np.exp(-(costs - costs.min()) / alpha) * q
    ipf = dense_ipf(space, weights, nu0, nuT, tol=args.tol,
                    max_iter=args.max_iter)
    tv = 0.5 * float(np.abs(plan.path_law - ipf.probabilities).sum())
    report("ipf-vs-bridge", tv <= 1e-8, f"tv={fmt(tv)}")

    start_gap = float(np.abs(np.bincount(space.starts - 1, weights=plan.path_law,
                                         minlength=network.n) - nu0).max())
    end_gap = float(np.abs(np.bincount(space.ends - 1, weights=plan.path_law,
                                       minlength=network.n) - nuT).max())
    gap = max(start_gap, end_gap)
    report("marginal-gaps", gap <= 1e-8, f"sup={fmt(gap)}")

    if run_lp:
        lp = lp_ot(space, costs, nu0, nuT)
        expected = float(plan.path_law @ costs)
        report("lp-lower-bound", lp.objective <= expected + 1e-9,
               f"lp={fmt(lp.objective)} plan={fmt(expected)}")
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    common = _common_flags()
    parser = _Parser(prog="iot", parents=[common],
                     description="Imitation-regularized optimal transport on "
                                 "directed logistics networks.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("rbwalk", parents=[common],
                       help="spectral walk prior of a network's cost structure")
    p.add_argument("--network", required=True,
                   help="network JSON file or builtin:NAME")
    p.add_argument("--alpha", type=float, required=True,
                   help="inverse tilt strength (temperature)")
    p.add_argument("--out", help="output file (default rbwalk.json)")
    p.set_defaults(func=_cmd_rbwalk)

    p = sub.add_parser("bridge", parents=[common],
                       help="solve the Schrodinger system for a prior")
    p.add_argument("--prior", required=True, help="prior JSON file")
    p.add_argument("--nu0", required=True, help="start marginal JSON file")
    p.add_argument("--nuT", required=True, help="end marginal JSON file")
    p.add_argument("--horizon", type=int,
                   help="steps (required for single-matrix markov priors)")
    p.add_argument("--emit-paths", action="store_true", dest="emit_paths",
                   help="also write the full path law")
    p.add_argument("--out", help="output file (default bridge.json)")
    p.set_defaults(func=_cmd_bridge)

    p = sub.add_parser("solve", parents=[common],
                       help="solve an imitation-regularized transport problem")
    p.add_argument("--network", required=True,
                   help="network JSON file or builtin:NAME")
    p.add_argument("--nu0", help="start marginal JSON file")
    p.add_argument("--nuT", help="end marginal JSON file")
    p.add_argument("--alpha", type=float, required=True,
                   help="regularization strength")
    p.add_argument("--horizon", type=int, help="number of steps")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--q-file", dest="q_file",
                       help="path-form imitation target (JSON)")
    group.add_argument("--rq-file", dest="rq_file",
                       help="step-weight imitation target (JSON)")
    p.add_argument("--beta", type=float, default=0.0,
                   help="blend weight toward the uniform path law")
    p.add_argument("--force-path", action="store_true", dest="force_path",
                   help="use the explicit path-space route even when a "
                        "Markov factorization exists")
    p.add_argument("--cost", choices=("auto", "ruled", "markov"), default="auto",
                   help="cost model: rule-based or per-edge table")
    p.add_argument("--out", help="plan file (default plan.txt)")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("approx", parents=[common],
                       help="fit the best Markov chain to a path prior")
    p.add_argument("--prior", required=True, help="path-form prior JSON file")
    p.add_argument("--out", help="output file (default approx.json)")
    p.set_defaults(func=_cmd_approx)

    p = sub.add_parser("robust-cert", parents=[common],
                       help="worst-case cost certificate for a saved plan")
    p.add_argument("--plan", required=True, help="plan file from `iot solve`")
    p.add_argument("--q-file", required=True, dest="q_file",
                   help="reference path distribution (JSON)")
    p.add_argument("--alpha", type=float,
                   help="ball shape parameter (default: the plan's alpha)")
    p.add_argument("--epsilon", type=float, required=True,
                   help="ball radius")
    p.add_argument("--out", help="output file (default robust_cert.json)")
    p.set_defaults(func=_cmd_robust_cert)

    p = sub.add_parser("scenario", parents=[common],
                       help="run a logistics scenario file and emit reports")
    p.add_argument("--spec", required=True, help="scenario JSON file")
    p.set_defaults(func=_cmd_scenario)

    p = sub.add_parser("oracle", parents=[common],
                       help="brute-force self-verification")
    osub = p.add_subparsers(dest="oracle_command", metavar="CHECK")
    osub.required = True
    pc = osub.add_parser("check", parents=[common],
                         help="cross-check the solvers on a fixture")
    pc.add_argument("--fixture", required=True,
                    choices=("tiny", "four", "synthetic30", "risk30"))
    pc.add_argument("--alpha", type=float,
                    help="regularization strength (default per fixture)")
    pc.set_defaults(func=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
