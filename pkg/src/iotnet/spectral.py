"""Maximum-entropy-rate (Ruelle-Bowens) random-walk priors from edge costs.

The construction: put Gibbs weights ``exp(-cost/alpha)`` on existing edges,
take the Perron root and left/right Perron vectors of that nonnegative matrix,
and tilt it into a row-stochastic walk.  Among all stationary chains supported
on the edge set, this walk maximises entropy rate minus costs/alpha; with
uniform costs it is the classic maximum-entropy random walk.

The Perron pair is computed by power iteration on a diagonally shifted copy of
the weight matrix.  The shift costs nothing mathematically (eigenvectors are
unchanged, the root shifts back) and makes the iteration converge on periodic
graphs, where the unshifted matrix has several eigenvalues on the spectral
circle.  The residual is componentwise relative, so even tiny Perron-vector
entries are accurate in relative terms — needed downstream, where the walk's
rows must be stochastic to 1e-10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ValidationError
from .network import MARKOV, CostModel

_SHIFT_FRACTION = 0.1


@dataclass(frozen=True)
class RBPrior:
    """Spectral data of the walk prior: weights, Perron pair, and transitions.

    ``node_weights`` is the stationary law (left*right, summing to 1) and
    ``transitions`` the row-stochastic walk matrix.
    """

    alpha: float
    weight_matrix: np.ndarray
    spectral_radius: float
    left_vector: np.ndarray
    right_vector: np.ndarray
    node_weights: np.ndarray
    transitions: np.ndarray


def _check_strongly_connected(support: np.ndarray) -> None:
    """Double graph search over the boolean support matrix."""
    n = support.shape[0]

    def reachable(adj: np.ndarray) -> np.ndarray:
        seen = np.zeros(n, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            i = stack.pop()
            for j in np.nonzero(adj[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        return seen

    fwd = reachable(support)
    bwd = reachable(support.T)
    if not (fwd.all() and bwd.all()):
        missing = sorted(set(np.nonzero(~fwd)[0] + 1) | set(np.nonzero(~bwd)[0] + 1))
        raise ValidationError(
            f"edge support is not strongly connected (nodes {missing} unreachable "
            f"from or to node 1); the walk prior needs a strongly connected graph")


def weight_matrix(model: CostModel, alpha: float, n: int) -> np.ndarray:
    """Gibbs edge weights ``exp(-cost/alpha)``; exact zero off the edge set.

    Requires a markov-mode cost model whose support is strongly connected.
    """
    if model.mode != MARKOV:
        raise ValidationError("weight_matrix requires a markov-mode CostModel")
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValidationError(f"alpha must be positive and finite, got {alpha}")
    B = np.zeros((n, n), dtype=float)
    for (i, j), cost in model.edge_costs.items():
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValidationError(f"cost table pair ({i},{j}) outside 1..{n}")
        mult = model.edge_multipliers.get((i, j), 1.0)
        B[i - 1, j - 1] = math.exp(-(cost * mult) / alpha)
    _check_strongly_connected(B > 0)
    return B


def perron(B: np.ndarray, tol: float = 1e-12,
           max_iter: int = 100_000) -> tuple[float, np.ndarray, np.ndarray]:
    """Perron root and left/right vectors of a nonnegative irreducible matrix.

    Power iteration on ``B + shift*I``; stops when the componentwise relative
    eigen-residual of both vectors drops below ``tol``.  Returns ``(lam, u, v)``
    normalised so ``||v||_1 = 1`` and ``u @ v = 1``.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {B.shape}")
    if np.any(B < 0) or not np.all(np.isfinite(B)):
        raise ValidationError("matrix must be nonnegative and finite")
    n = B.shape[0]
    shift = _SHIFT_FRACTION * float(np.max(B.sum(axis=1)))
    if shift <= 0:
        raise ValidationError("matrix has no positive entries")

    v = np.full(n, 1.0 / n)
    u = np.full(n, 1.0 / n)
    lam = 0.0
    residual = math.inf
    for _ in range(max_iter):
        # v_new = (B + shift*I) v stays strictly positive from a positive start
        v_new = B @ v + shift * v
        u_new = B.T @ u + shift * u
        v_new /= v_new.sum()
        u_new /= u_new.sum()
        v, u = v_new, u_new
        Bv = B @ v
        Btu = B.T @ u
        lam = float(u @ Bv) / float(u @ v)
        residual = max(float(np.max(np.abs(Bv - lam * v) / (lam * v))),
                       float(np.max(np.abs(Btu - lam * u) / (lam * u))))
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not reach residual {tol} in {max_iter} "
            f"iterations (final residual {residual:.3e})", residual=residual)

    v = v / v.sum()
    u = u / float(u @ v)
    return lam, u, v


def rb_walk(B: np.ndarray, lam: float, v: np.ndarray) -> np.ndarray:
    """Row-stochastic tilt ``R_ij = B_ij * v_j / (lam * v_i)``."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValidationError("right Perron vector must be strictly positive")
    if lam <= 0:
        raise ValidationError(f"spectral radius must be positive, got {lam}")
    return (B * v[None, :]) / (lam * v[:, None])


def build_rb_prior(model: CostModel, alpha: float, n: int, *,
                   tol: float = 1e-12, max_iter: int = 100_000) -> RBPrior:
    """Full pipeline: Gibbs weights -> Perron pair -> stochastic walk."""
    B = weight_matrix(model, alpha, n)
    lam, u, v = perron(B, tol=tol, max_iter=max_iter)
    R = rb_walk(B, lam, v)
    node_weights = u * v
    return RBPrior(alpha=alpha, weight_matrix=B, spectral_radius=lam,
                   left_vector=u, right_vector=v, node_weights=node_weights,
                   transitions=R)


def rb_path_density(prior: RBPrior, path) -> float:
    """Walk density of one path: stationary start weight times step products."""
    idx = [int(p) - 1 for p in path]
    out = float(prior.node_weights[idx[0]])
    R = prior.transitions
    for a, b in zip(idx, idx[1:]):
        out *= float(R[a, b])
    return out


def rb_path_density_gibbs(prior: RBPrior, path, cost: float) -> float:
    """Closed form of the same density: ``u[x0] * v[xT] * lam^-T * exp(-C/alpha)``.

    ``cost`` must be the path's total cost under the model the prior was built
    from; agreement with :func:`rb_path_density` on every path is exercised in
    the test suite at 1e-12.
    """
    idx = [int(p) - 1 for p in path]
    horizon = len(idx) - 1
    if math.isinf(cost):
        return 0.0
    return (float(prior.left_vector[idx[0]]) * float(prior.right_vector[idx[-1]])
            * prior.spectral_radius ** (-horizon) * math.exp(-cost / prior.alpha))
