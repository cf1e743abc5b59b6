"""Scaled group Lasso: joint estimation of coefficients and noise level.

Alternates ``sigma <- ||y - X b|| / sqrt((1 - a) n)`` with a group Lasso fit
at penalty ``sigma * w`` until the profile derivative in sigma vanishes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import RegressionProblem
from .errors import DegenerateScaleError, InvalidArgumentError
from .group_lasso import fit_group_lasso

log = logging.getLogger(__name__)


@dataclass
class ScaledFit:
    beta: np.ndarray
    sigma: float
    iterations: int
    converged: bool
    kkt_residual: float
    trace: list = field(default_factory=list, repr=False)
    a: float = 0.0

    def residual(self, problem: RegressionProblem) -> np.ndarray:
        return problem.y - problem.X @ self.beta


def joint_objective(problem: RegressionProblem, beta, sigma: float, a: float = 0.0) -> float:
    r = problem.y - problem.X @ beta
    pen = sum(w * np.linalg.norm(beta[g])
              for w, g in zip(problem.weights, problem.partition.groups))
    return float(r @ r / (2 * problem.n * sigma) + (1 - a) * sigma / 2 + pen)


def _inner(problem, sigma, warm, inner_tol, max_iter):
    # kkt tolerance relative to sigma keeps the whole fit scale equivariant
    return fit_group_lasso(problem, sigma * problem.weights, max_iter=max_iter,
                           kkt_tol=inner_tol * sigma, warm_start=warm)


def fit_scaled(problem: RegressionProblem, max_outer: int = 100, conv_tol: float = 1e-6,
               sigma_floor: float | None = None, sigma_init: float | None = None,
               a: float = 0.0, inner_tol: float = 1e-9,
               inner_max_iter: int = 5000, plain_steps: int = 10) -> ScaledFit:
    """Scaled group Lasso by alternating minimization.

    The base weights live on ``problem.weights``; each outer step solves the
    group Lasso at ``sigma * weights``. Iteration stops when
    ``|1 - ||y - X b||^2 / ((1 - a) n sigma^2)| <= conv_tol``, i.e. when the
    profile derivative is (numerically) zero; this also bounds the relative
    change of sigma by ``conv_tol``. After ``plain_steps`` alternations the
    root of the profile derivative is bracketed and refined by Brent's
    method, which removes the slow linear convergence of plain alternation
    near a group's entry threshold. ``max_outer`` caps the total number of
    group Lasso solves.

    Raises
    ------
    DegenerateScaleError
        If the noise-level estimate falls below ``sigma_floor``
        (default ``1e-10 * ||y|| / sqrt(n)``).
    """
    if not 0 <= a < 1:
        raise InvalidArgumentError("a must lie in [0, 1)")
    n = problem.n
    y_scale = float(np.linalg.norm(problem.y)) / math.sqrt(n)
    if sigma_floor is None:
        sigma_floor = 1e-10 * y_scale
    sigma = y_scale / math.sqrt(1 - a) if sigma_init is None else float(sigma_init)
    if not sigma > sigma_floor:
        raise DegenerateScaleError(sigma, sigma_floor)

    state = {"beta": None, "fit": None, "evals": 0}
    trace = []

    def score(sig):
        # 1 - RSS / ((1 - a) n sigma^2): non-decreasing in sigma because the
        # profile objective is convex; its root is the estimate
        fit = _inner(problem, sig, state["beta"], inner_tol, inner_max_iter)
        state.update(beta=fit.beta, fit=fit, sigma=sig, evals=state["evals"] + 1)
        r = problem.y - problem.X @ fit.beta
        rss = float(r @ r)
        trace.append((sig, joint_objective(problem, fit.beta, sig, a)))
        return 1.0 - rss / ((1 - a) * n * sig ** 2), rss

    converged = False
    # plain alternation; iterates started above the root decrease monotonically
    while state["evals"] < min(plain_steps, max_outer):
        g, rss = score(sigma)
        if abs(g) <= conv_tol:
            converged = True
            break
        sigma_new = math.sqrt(rss / ((1 - a) * n))
        if not sigma_new > sigma_floor:
            raise DegenerateScaleError(sigma_new, sigma_floor)
        sigma = sigma_new

    if not converged and state["evals"] < max_outer:
        sigma, converged = _bracketed_root(score, sigma, sigma_floor, conv_tol,
                                           max_outer - state["evals"])
        if not converged:
            # the bracket may end on a kink; finish on the last evaluation
            g, _ = score(sigma) if state["evals"] < max_outer else (None, None)
            converged = g is not None and abs(g) <= conv_tol
    # report the pair (beta, sigma) of the last solve so they always match
    beta, fit, it, sigma = state["beta"], state["fit"], state["evals"], state["sigma"]
    if not converged:
        log.warning("scaled group lasso did not converge in %d outer steps", max_outer)
    return ScaledFit(beta=beta, sigma=sigma, iterations=it, converged=converged,
                     kkt_residual=fit.kkt_residual, trace=trace, a=a)


def _bracketed_root(score, sigma, floor, conv_tol, budget):
    """Root of the monotone ``score`` below ``sigma``; returns (sigma, ok)."""
    hi = sigma
    lo = sigma
    g_lo = None
    used = 0
    step = 0.9
    while used < budget:
        lo = max(lo * step, floor * (1 + 1e-12))
        g_lo, _ = score(lo)
        used += 1
        if abs(g_lo) <= conv_tol:
            return lo, True
        if g_lo < 0:
            break
        hi = lo
        step = step * step
        if lo <= floor * (1 + 1e-9):
            raise DegenerateScaleError(lo, floor)
    if g_lo is None or g_lo >= 0:
        return lo, False
    found = {"sigma": None}

    def f(sig):
        nonlocal used
        if used >= budget:
            raise _Budget
        g, _ = score(sig)
        used += 1
        if abs(g) <= conv_tol:
            found["sigma"] = sig
            raise _Found
        return g

    try:
        root = brentq(f, lo, hi, xtol=1e-3 * conv_tol * lo, rtol=4 * np.finfo(float).eps,
                      maxiter=200)
    except _Found:
        return found["sigma"], True
    except (_Budget, RuntimeError):
        return hi, False
    return root, False


class _Found(Exception):
    pass


class _Budget(Exception):
    pass


def profile_derivative(problem: RegressionProblem, sigma: float, a: float = 0.0,
                       inner_tol: float = 1e-9) -> float:
    """Derivative in sigma of the profile objective ``L(b(sigma w), sigma)``."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    fit = _inner(problem, sigma, None, inner_tol, 5000)
    r = problem.y - problem.X @ fit.beta
    return float((1 - a) / 2 - (r @ r) / (2 * problem.n * sigma ** 2))


def sigma_z_statistic(fit: ScaledFit | float, sigma_true: float, n: int) -> float:
    """Standardized noise-level error ``sqrt(2n) (sigma_hat / sigma - 1)``.

    Asymptotically standard normal when the penalty bias is negligible.
    """
    if sigma_true <= 0:
        raise InvalidArgumentError("sigma_true must be positive")
    s = fit.sigma if isinstance(fit, ScaledFit) else float(fit)
    return math.sqrt(2 * n) * (s / sigma_true - 1.0)
