"""Imitation targets, tilted priors, and the end-to-end solver."""

import numpy as np
import pytest

from iotnet import (
    ImitationTarget,
    IOTProblem,
    ValidationError,
    blend_distribution,
    build_rb_prior,
    dense_ipf,
    expand_target,
    imitation_prior_markov,
    imitation_prior_paths,
    objective_eval,
    path_costs,
    solve_iot,
)
from iotnet import fixtures
from iotnet.bridge import markov_path_law, sinkhorn_markov
from iotnet.bridge import MarkovPrior

from helpers import feasible_laws, marginal_gap, tv, uniform_problem


# ---------------------------------------------------------------------------
# targets and blending
# ---------------------------------------------------------------------------


def test_blend_point_mass_worked_example():
    q = np.array([1.0, 0.0, 0.0, 0.0])
    out = blend_distribution(q, 0.1)
    assert np.allclose(out, [0.925, 0.025, 0.025, 0.025], atol=1e-15)
    assert out.sum() == pytest.approx(1.0, abs=1e-15)


def test_blend_zero_and_one_are_endpoints():
    q = np.array([0.7, 0.3, 0.0, 0.0])
    assert np.array_equal(blend_distribution(q, 0.0), q)
    assert np.allclose(blend_distribution(q, 1.0), 0.25)
    with pytest.raises(ValidationError):
        blend_distribution(q, 1.5)


def test_target_requires_exactly_one_form():
    with pytest.raises(ValidationError):
        ImitationTarget()
    with pytest.raises(ValidationError):
        ImitationTarget(matrix=np.eye(2), path_probs=np.array([1.0]))


def test_markov_target_checks_stochastic_rows():
    bad = np.array([[0.5, 0.4], [0.0, 1.0]])
    with pytest.raises(ValidationError):
        ImitationTarget.markov(bad)
    # the same rows pass as raw weights
    ImitationTarget.markov(bad, stochastic=False)


def test_expand_target_markov_products(tiny):
    rng = np.random.default_rng(2)
    mat = rng.uniform(0.1, 1.0, size=(3, 3))
    mat /= mat.sum(axis=1, keepdims=True)
    init = np.array([0.2, 0.3, 0.5])
    q = expand_target(ImitationTarget.markov(mat, init), tiny.space)
    for k, p in enumerate(tiny.space.paths):
        ref = init[p[0] - 1]
        for a, b in zip(p, p[1:]):
            ref *= mat[a - 1, b - 1]
        assert q[k] == pytest.approx(ref, rel=1e-14)


def test_expand_target_defaults_to_uniform_initial(tiny):
    mat = np.full((3, 3), 1.0 / 3.0)
    q = expand_target(ImitationTarget.markov(mat), tiny.space)
    assert np.allclose(q, 1.0 / 27.0, atol=1e-15)


def test_expand_target_blends_after_expansion(tiny):
    mat = np.full((3, 3), 1.0 / 3.0)
    q = expand_target(ImitationTarget.markov(mat, blend=0.5), tiny.space)
    assert np.allclose(q, 1.0 / 27.0, atol=1e-15)  # uniform blends to itself


def test_expand_target_rejects_misaligned_paths(tiny):
    with pytest.raises(ValidationError):
        expand_target(ImitationTarget.paths(np.ones(5) / 5.0), tiny.space)


# ---------------------------------------------------------------------------
# tilted priors
# ---------------------------------------------------------------------------


def test_markov_tilt_is_entrywise_product(tiny):
    rb = build_rb_prior(tiny.model, 0.5, 3)
    mat = np.full((3, 3), 1.0 / 3.0)
    prior = imitation_prior_markov(rb, ImitationTarget.markov(mat))
    assert np.allclose(prior.matrix, rb.transitions / 3.0, atol=1e-15)


def test_markov_tilt_rejects_blended_targets(tiny):
    rb = build_rb_prior(tiny.model, 0.5, 3)
    mat = np.full((3, 3), 1.0 / 3.0)
    with pytest.raises(ValidationError):
        imitation_prior_markov(rb, ImitationTarget.markov(mat, blend=0.1))


def test_endpoint_scales_are_gauge(tiny):
    """Rescaling the tilted prior by start/end factors cannot move the bridge."""
    from iotnet.bridge import path_law_from_endpoint, sinkhorn_path

    costs = path_costs(tiny.space, tiny.model, tiny.network)
    q = np.full(tiny.space.size, 1.0 / tiny.space.size)
    rng = np.random.default_rng(4)
    plain = imitation_prior_paths(tiny.model, tiny.network, tiny.space, q, 0.7)
    scaled = imitation_prior_paths(
        tiny.model, tiny.network, tiny.space, q, 0.7,
        start_scale=rng.uniform(0.5, 2.0, size=3),
        end_scale=rng.uniform(0.5, 2.0, size=3))
    laws = []
    for prior in (plain, scaled):
        sol = sinkhorn_path(prior, tiny.nu0, tiny.nuT, tol=1e-13)
        laws.append(path_law_from_endpoint(sol, prior))
    assert tv(laws[0], laws[1]) < 1e-10


# ---------------------------------------------------------------------------
# the objective identity behind the reduction
# ---------------------------------------------------------------------------


def test_objective_equals_divergence_to_tilted_prior_up_to_constant(rng):
    """cost + alpha*KL(P||Q) and alpha*KL(P||tilted prior) differ by a
    P-independent constant over the feasible polytope."""
    for _ in range(4):
        d = fixtures.random_markov_problem(rng)
        space = d["space"]
        target = ImitationTarget.markov(d["target_matrix"], d["target_initial"])
        costs = path_costs(space, d["model"], d["network"])
        q = expand_target(target, space)
        alpha = d["alpha"]
        m = q * np.exp(-(costs - costs.min()) / alpha)
        m /= m.sum()
        gaps = []
        for law in feasible_laws(space, d["nu0"], d["nuT"], rng, 25):
            pos = law > 0
            kl_m = float(np.sum(law[pos] * np.log(law[pos] / m[pos])))
            kl_q = float(np.sum(law[pos] * np.log(law[pos] / q[pos])))
            gaps.append(alpha * kl_m - (float(costs @ law) + alpha * kl_q))
        assert float(np.std(gaps)) < 1e-10


# ---------------------------------------------------------------------------
# solve_iot
# ---------------------------------------------------------------------------


def test_solver_hits_marginals_and_normalisation(tiny):
    plan = solve_iot(uniform_problem(tiny, 0.8))
    assert marginal_gap(tiny.space, plan.path_law, tiny.nu0, tiny.nuT) < 1e-9
    assert plan.path_law.sum() == pytest.approx(1.0, abs=1e-9)


def test_solver_beats_every_feasible_competitor(tiny, rng):
    problem = uniform_problem(tiny, 0.8)
    plan = solve_iot(problem, tol=1e-12)
    q = expand_target(problem.target, tiny.space)
    costs = plan.path_costs
    best = plan.objective.total
    for law in feasible_laws(tiny.space, tiny.nu0, tiny.nuT, rng, 100):
        _, _, total = objective_eval(law, costs, q, 0.8)
        assert total >= best - 1e-9


def test_markov_and_path_routes_produce_one_plan(rng):
    for _ in range(4):
        d = fixtures.random_markov_problem(rng)
        target = ImitationTarget.markov(d["target_matrix"], d["target_initial"])
        problem = IOTProblem(network=d["network"], cost_model=d["model"],
                             path_space=d["space"], nu0=d["nu0"], nuT=d["nuT"],
                             alpha=d["alpha"], target=target)
        fast = solve_iot(problem)
        slow = solve_iot(problem, force_path=True)
        assert fast.transition_matrices is not None
        assert slow.transition_matrices is None
        assert tv(fast.path_law, slow.path_law) < 1e-8
        assert fast.objective.total == pytest.approx(slow.objective.total,
                                                     abs=1e-8)


def test_plan_objective_matches_direct_recomputation(tiny):
    problem = uniform_problem(tiny, 1.3)
    plan = solve_iot(problem)
    q = expand_target(problem.target, tiny.space)
    cost, kl, total = objective_eval(plan.path_law, plan.path_costs, q, 1.3)
    assert plan.objective.expected_cost == pytest.approx(cost, abs=1e-12)
    assert plan.objective.kl_to_target == pytest.approx(kl, abs=1e-12)
    assert plan.objective.total == pytest.approx(total, abs=1e-12)


def test_large_alpha_returns_the_bridged_target(tiny):
    """As alpha grows the cost term fades: the plan tends to the target's
    own bridge onto the marginals."""
    problem = uniform_problem(tiny, 1e8)
    plan = solve_iot(problem, tol=1e-13)
    ref = dense_ipf(tiny.space, np.ones(tiny.space.size), tiny.nu0, tiny.nuT,
                    tol=1e-13).probabilities
    assert tv(plan.path_law, ref) < 1e-6


def test_alpha_monotonicity_of_cost_term(tiny):
    costs = []
    for alpha in (0.01, 0.1, 1.0, 10.0, 100.0):
        plan = solve_iot(uniform_problem(tiny, alpha), tol=1e-12)
        costs.append(plan.objective.expected_cost)
    for lo, hi in zip(costs, costs[1:]):
        assert hi >= lo - 1e-9


def test_edge_usage_accounts_every_step(tiny):
    plan = solve_iot(uniform_problem(tiny, 0.8))
    for t in range(tiny.space.horizon):
        step_mass = sum(m for (tt, _i, _j), m in plan.edge_usage.items()
                        if tt == t)
        assert step_mass == pytest.approx(1.0, abs=1e-9)
    # spot-check one entry against the path law
    arr = tiny.space.array
    mask = (arr[:, 0] == 1) & (arr[:, 1] == 2)
    assert plan.edge_usage.get((0, 1, 2), 0.0) == pytest.approx(
        float(plan.path_law[mask].sum()), abs=1e-12)


def test_uniform_target_reduces_to_entropic_transport(rng):
    """With a uniform target the solver equals the plain walk-prior bridge."""
    for _ in range(3):
        d = fixtures.random_markov_problem(rng)
        space = d["space"]
        problem = IOTProblem(network=d["network"], cost_model=d["model"],
                             path_space=space, nu0=d["nu0"], nuT=d["nuT"],
                             alpha=d["alpha"],
                             target=ImitationTarget.uniform(space.size))
        plan = solve_iot(problem, force_path=True)
        rb = build_rb_prior(d["model"], d["alpha"], d["network"].n)
        walk = MarkovPrior(initial=rb.node_weights, matrix=rb.transitions)
        sol = sinkhorn_markov(walk, d["nu0"], d["nuT"], space.horizon)
        assert tv(plan.path_law, markov_path_law(sol, d["nu0"], space)) < 1e-8
