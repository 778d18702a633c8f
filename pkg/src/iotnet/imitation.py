"""Imitation-regularized optimal transport: cost plus divergence-to-target.

The problem: move mass from ``nu0`` to ``nuT`` over horizon-``T`` paths,
minimising ``E_P[C] + alpha * KL(P || Q)`` where ``Q`` is a target behaviour
to imitate.  Both terms fold into a single Schrodinger bridge against a tilted
prior, which is how :func:`solve_iot` computes the optimum:

* Markov route (per-edge costs, Markov target, no blending): tilt the
  maximum-entropy-rate walk by the target's step weights and bridge the
  resulting Markov prior.  Cost enters through the walk, the target through
  the Hadamard product — no path enumeration in the solve itself.
* Path route (everything else, including rule-based non-additive costs and
  blended targets): build explicit path weights ``exp(-C(x)/alpha) * Q(x)``
  (log-shifted before exponentiation; a global prior scale is gauge) and
  bridge the explicit prior through its endpoint marginalisation.

Optional endpoint scale vectors on the path weights are pure gauge: they
rescale the prior by start/end factors that the bridge's potentials absorb,
so the plan is unchanged (tested).  Blending replaces the target by
``(1-beta) Q + beta * uniform``; a blended Markov target is no longer Markov,
so any ``beta > 0`` forces the path route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bridge import (BridgeSolution, MarkovPrior, PathPrior, markov_path_law,
                     path_kl, path_law_from_endpoint, sinkhorn_markov,
                     sinkhorn_path)
from .errors import InfeasibleError, ValidationError
from .network import (MARKOV, CostModel, Network, PathSpace, path_costs)
from .spectral import RBPrior, build_rb_prior

__all__ = [
    "ImitationTarget", "IOTProblem", "ObjectiveTerms", "TransportPlan",
    "blend_distribution", "expand_target", "imitation_prior_markov",
    "imitation_prior_paths", "solve_iot", "edge_usage_from_law",
    "evaluate_objective_terms",
]


@dataclass(frozen=True)
class ImitationTarget:
    """Behaviour to imitate: Markov step weights or explicit path weights.

    ``initial``/``matrix`` describe a Markov target (step weights over
    existing edges; rows need not be normalised — set ``stochastic=False``
    for raw nonnegative weights such as risk scores).  ``path_probs`` is a
    path-form target aligned with the problem's path space.  ``blend`` mixes
    the target with the uniform path distribution.
    """

    initial: np.ndarray | None = None
    matrix: np.ndarray | None = None
    path_probs: np.ndarray | None = None
    blend: float = 0.0
    stochastic: bool = True

    def __post_init__(self):
        if not (0.0 <= self.blend <= 1.0):
            raise ValidationError(f"blend must be in [0,1], got {self.blend}")
        has_markov = self.matrix is not None
        has_paths = self.path_probs is not None
        if has_markov == has_paths:
            raise ValidationError("provide exactly one of matrix / path_probs")
        if has_markov:
            mat = np.asarray(self.matrix, dtype=float)
            if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
                raise ValidationError("target matrix must be square")
            if np.any(mat < 0) or not np.all(np.isfinite(mat)):
                raise ValidationError("target matrix must be nonnegative and finite")
            object.__setattr__(self, "matrix", mat)
            if self.initial is not None:
                init = np.asarray(self.initial, dtype=float)
                if init.shape != (mat.shape[0],) or np.any(init < 0):
                    raise ValidationError("target initial law must be a nonnegative "
                                          "vector matching the matrix dimension")
                object.__setattr__(self, "initial", init)
            if self.stochastic:
                rowsum = mat.sum(axis=1)
                rows = np.nonzero(rowsum > 0)[0]
                if np.any(np.abs(rowsum[rows] - 1.0) > 1e-9):
                    bad = int(rows[np.argmax(np.abs(rowsum[rows] - 1.0))]) + 1
                    raise ValidationError(
                        f"target rows must sum to 1 (row {bad} sums to "
                        f"{float(rowsum[bad - 1])!r}); pass stochastic=False for "
                        f"raw weights")
        else:
            probs = np.asarray(self.path_probs, dtype=float)
            if probs.ndim != 1 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
                raise ValidationError("path_probs must be a nonnegative finite vector")
            if not np.any(probs > 0):
                raise ValidationError("path_probs must carry some mass")
            object.__setattr__(self, "path_probs", probs)

    @classmethod
    def markov(cls, matrix, initial=None, *, blend: float = 0.0,
               stochastic: bool = True) -> "ImitationTarget":
        return cls(initial=initial, matrix=matrix, blend=blend,
                   stochastic=stochastic)

    @classmethod
    def paths(cls, path_probs, *, blend: float = 0.0) -> "ImitationTarget":
        return cls(path_probs=path_probs, blend=blend)

    @classmethod
    def uniform(cls, size: int) -> "ImitationTarget":
        """Pure maximum-entropy transport: target the uniform law on ``size`` paths."""
        return cls(path_probs=np.full(size, 1.0 / size))

    @property
    def is_markov(self) -> bool:
        return self.matrix is not None


@dataclass(frozen=True)
class IOTProblem:
    network: Network
    cost_model: CostModel
    path_space: PathSpace
    nu0: np.ndarray
    nuT: np.ndarray
    alpha: float
    target: ImitationTarget

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValidationError(f"alpha must be positive and finite, got {self.alpha}")
        for name in ("nu0", "nuT"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (self.path_space.n,):
                raise ValidationError(f"{name} must have length {self.path_space.n}")
            object.__setattr__(self, name, vec)


@dataclass(frozen=True)
class ObjectiveTerms:
    expected_cost: float
    kl_to_target: float
    total: float


@dataclass(frozen=True)
class TransportPlan:
    """Solved plan: path law, objective decomposition, and edge usage.

    ``transition_matrices`` is populated on the Markov route only.
    ``edge_usage`` maps ``(t, i, j)`` to the mass moved along edge ``(i,j)``
    at step ``t``; each step's masses sum to 1.
    """

    path_space: PathSpace
    path_law: np.ndarray
    path_costs: np.ndarray
    target_probs: np.ndarray
    alpha: float
    objective: ObjectiveTerms
    edge_usage: dict[tuple[int, int, int], float]
    transition_matrices: list[np.ndarray] | None = None
    bridge: BridgeSolution | None = field(default=None, repr=False, compare=False)


def blend_distribution(q: np.ndarray, beta: float) -> np.ndarray:
    """Convex blend with the uniform law: ``(1-beta) q + beta / len(q)``."""
    q = np.asarray(q, dtype=float)
    if not (0.0 <= beta <= 1.0):
        raise ValidationError(f"beta must be in [0,1], got {beta}")
    return (1.0 - beta) * q + beta / q.shape[0]


def expand_target(target: ImitationTarget, space: PathSpace) -> np.ndarray:
    """Evaluate the (blended) target on every path of the space.

    Markov targets multiply their step weights along each path, with the
    initial law defaulting to uniform over nodes; path targets must already be
    aligned with the space.  Blending happens after expansion, over the
    space's paths.
    """
    if target.is_markov:
        mat = target.matrix
        if mat.shape[0] != space.n:
            raise ValidationError(
                f"target matrix is {mat.shape[0]}x{mat.shape[0]} but the path "
                f"space has {space.n} nodes")
        init = target.initial
        if init is None:
            init = np.full(space.n, 1.0 / space.n)
        arr = space.array - 1
        q = init[arr[:, 0]].copy()
        for t in range(space.horizon):
            q *= mat[arr[:, t], arr[:, t + 1]]
    else:
        q = target.path_probs
        if q.shape != (space.size,):
            raise ValidationError(
                f"path-form target has {q.shape[0]} entries but the path space "
                f"has {space.size} paths")
    if target.blend > 0.0:
        q = blend_distribution(q, target.blend)
    return q


def imitation_prior_markov(rb: RBPrior, target: ImitationTarget) -> MarkovPrior:
    """Markov prior of the tilted problem: walk (x) target, step by step.

    The step matrix is the entrywise product of the walk's transitions and the
    target's step weights; the initial weights (stationary walk law times the
    target's initial law) are normalised to a probability vector — a global
    prior scale shifts the divergence by a constant and cannot move the
    bridge.
    """
    if not target.is_markov:
        raise ValidationError("markov prior construction needs a Markov target")
    if target.blend != 0.0:
        raise ValidationError("blended targets are not Markov; use the path route")
    if target.matrix.shape[0] != rb.transitions.shape[0]:
        raise ValidationError("target and walk dimensions differ")
    step = rb.transitions * target.matrix
    init = rb.node_weights.copy()
    if target.initial is not None:
        init = init * target.initial
    total = float(init.sum())
    if total <= 0:
        raise InfeasibleError("target initial law annihilates the walk prior")
    return MarkovPrior(initial=init / total, matrix=step)


def imitation_prior_paths(model: CostModel, network: Network, space: PathSpace,
                          q: np.ndarray, alpha: float, *,
                          start_scale: np.ndarray | None = None,
                          end_scale: np.ndarray | None = None) -> PathPrior:
    """Explicit tilted prior: ``scaleterms * exp(-C(x)/alpha) * q(x)``.

    Built in log space and shifted by the max before exponentiation, so only
    cost *spreads* (not absolute values) need to fit the float range; the
    shift is a global prior scale, which is gauge.  ``start_scale`` and
    ``end_scale`` default to ones and are themselves gauge (any strictly
    positive choice yields the same bridge).
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (space.size,):
        raise ValidationError("q must align with the path space")
    if np.any(q < 0):
        raise ValidationError("q must be nonnegative")
    costs = path_costs(space, model, network)
    with np.errstate(divide="ignore"):
        logw = np.where(q > 0, -costs / alpha + np.log(np.where(q > 0, q, 1.0)), -np.inf)
    for scale, col in ((start_scale, space.starts), (end_scale, space.ends)):
        if scale is not None:
            scale = np.asarray(scale, dtype=float)
            if scale.shape != (space.n,) or np.any(scale <= 0):
                raise ValidationError("scale vectors must be strictly positive "
                                      "length-n vectors")
            logw = logw + np.log(scale)[col - 1]
    top = float(np.max(logw))
    if not math.isfinite(top):
        raise InfeasibleError("target q puts no mass on any feasible path")
    return PathPrior(path_space=space, weights=np.exp(logw - top))


def edge_usage_from_law(space: PathSpace, law: np.ndarray,
                        floor: float = 0.0) -> dict[tuple[int, int, int], float]:
    """Aggregate a path law into per-step edge masses ``(t, i, j) -> mass``."""
    usage: dict[tuple[int, int, int], float] = {}
    arr = space.array
    for t in range(space.horizon):
        for i, j, mass in zip(arr[:, t], arr[:, t + 1], law):
            if mass > floor:
                key = (t, int(i), int(j))
                usage[key] = usage.get(key, 0.0) + float(mass)
    return dict(sorted(usage.items()))


def evaluate_objective_terms(law: np.ndarray, costs: np.ndarray, q: np.ndarray,
               alpha: float) -> ObjectiveTerms:
    cost = float(law @ costs)
    div = path_kl(law, q)
    total = cost + alpha * div if math.isfinite(div) else math.inf
    return ObjectiveTerms(expected_cost=cost, kl_to_target=div, total=total)


def solve_iot(problem: IOTProblem, *, force_path: bool = False,
              tol: float = 1e-10, max_iter: int = 100_000) -> TransportPlan:
    """Solve the imitation-regularized transport problem.

    Route selection: the Markov route runs when the cost model is Markov, the
    target is Markov-form, and there is no blending; ``force_path`` overrides
    it for cross-validation.  Both routes produce the same plan on their
    common domain (tested to 1e-8 total variation).
    """
    space = problem.path_space
    q = expand_target(problem.target, space)
    costs = path_costs(space, problem.cost_model, problem.network)

    markov_route = (problem.cost_model.mode == MARKOV
                    and problem.target.is_markov
                    and problem.target.blend == 0.0
                    and not force_path)
    if markov_route:
        rb = build_rb_prior(problem.cost_model, problem.alpha, space.n)
        prior = imitation_prior_markov(rb, problem.target)
        solution = sinkhorn_markov(prior, problem.nu0, problem.nuT, space.horizon,
                                   tol=tol, max_iter=max_iter)
        law = markov_path_law(solution, problem.nu0, space)
        transitions = solution.transitions
    else:
        prior = imitation_prior_paths(problem.cost_model, problem.network, space,
                                      q, problem.alpha)
        solution = sinkhorn_path(prior, problem.nu0, problem.nuT,
                                 tol=tol, max_iter=max_iter)
        law = path_law_from_endpoint(solution, prior)
        transitions = None

    return TransportPlan(path_space=space, path_law=law, path_costs=costs,
                         target_probs=q, alpha=problem.alpha,
                         objective=evaluate_objective_terms(law, costs, q, problem.alpha),
                         edge_usage=edge_usage_from_law(space, law),
                         transition_matrices=transitions, bridge=solution)
