"""Shared oracles and generators for the test suite."""

import numpy as np

from grouplens.core import GroupPartition, RegressionProblem, default_weights

ACCEPTANCE_LOG = {}


def record(key, ok, detail=""):
    """Log a criterion verdict for the terminal summary and return it."""
    ACCEPTANCE_LOG[str(key)] = (bool(ok), detail)
    return ok


def random_problem(rng, n, sizes, weights=None, noise=1.0, beta=None):
    part = GroupPartition.contiguous(sizes)
    p = part.p
    X = rng.standard_normal((n, p))
    if beta is None:
        beta = np.zeros(p)
        beta[part.groups[0]] = rng.uniform(1, 2, part.sizes[0])
    y = X @ beta + noise * rng.standard_normal(n)
    w = default_weights(part, n) if weights is None else np.asarray(weights, dtype=float)
    return RegressionProblem(X, y, part, w), beta


def prox_grad_reference(X, y, partition, penalties, iters=100_000, tol=1e-14):
    """Accelerated proximal gradient with step 1/L and adaptive restart.

    Written independently of the package solver: it only shares the
    objective ``||y - X b||^2 / (2n) + sum_j w_j ||b_j||``.
    """
    n, p = X.shape
    L = np.linalg.norm(X, 2) ** 2 / n
    b = np.zeros(p)
    z = b.copy()
    t = 1.0

    def prox(v):
        out = v.copy()
        for w, g in zip(penalties, partition.groups):
            nv = np.linalg.norm(v[g])
            out[g] = 0.0 if nv <= w / L else v[g] * (1 - w / (L * nv))
        return out

    for _ in range(iters):
        grad = X.T @ (X @ z - y) / n
        b_new = prox(z - grad / L)
        if np.max(np.abs(b_new - b)) <= tol:
            b = b_new
            break
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        if (z - b_new) @ (b_new - b) > 0:  # restart when momentum points uphill
            t_new = 1.0
            z = b_new.copy()
        else:
            z = b_new + ((t - 1) / t_new) * (b_new - b)
        b, t = b_new, t_new
    return b


def orthonormal_columns(rng, n, p):
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    return np.sqrt(n) * Q
