"""De-biased group estimators, chi-squared group tests and confidence ellipsoids."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .core import RegressionProblem
from .errors import InfeasibleProjectionError, InvalidArgumentError, RankDeficiencyError
from .numerics import numerical_rank, pinv_apply, project
from .projection import ProjectionBundle, feasibility_report
from .scaled import ScaledFit

LARGE_GROUP_CUTOFF = 50


@dataclass
class GroupInferenceResult:
    G: np.ndarray
    beta_G_hat: np.ndarray
    T: float
    k_G: int
    p_value: float
    method: str
    sigma_used: float
    ellipsoid_radius: float
    level: float
    feasibility: dict = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "G": self.G.tolist(), "beta_G_hat": self.beta_G_hat.tolist(), "T": self.T,
            "T2": self.T ** 2, "k_G": self.k_G, "p_value": self.p_value,
            "method": self.method, "sigma_used": self.sigma_used,
            "ellipsoid_radius": self.ellipsoid_radius, "alpha": self.level,
        }


def _check(problem: RegressionProblem, bundle: ProjectionBundle, G):
    if G is not None and not np.array_equal(np.unique(np.asarray(G)), bundle.G):
        raise InvalidArgumentError("G does not match the projection bundle")
    if bundle.Z.shape[0] != problem.n:
        raise InvalidArgumentError("bundle was built for a different design")


def nuisance_fit(problem: RegressionProblem, bundle: ProjectionBundle,
                 beta: np.ndarray) -> np.ndarray:
    """Fitted contribution of the variables outside ``G`` under ``beta``.

    Without reparametrization this is ``sum_k X_{G_k\\G} b_{G_k\\G}``; with it,
    ``sum_k Q_{G_k\\G} X_{G_k} b_{G_k}``.
    """
    X = problem.X
    out = np.zeros(problem.n)
    for k, idx in bundle.split.outside.items():
        if bundle.reparametrized:
            gk = problem.partition.groups[k]
            out += project(bundle.outside_bases[k], X[:, gk] @ beta[gk])
        else:
            out += X[:, idx] @ beta[idx]
    return out


def remainder(problem: RegressionProblem, bundle: ProjectionBundle,
              init_beta: np.ndarray, true_beta: np.ndarray) -> np.ndarray:
    """Standardized bias term ``sum_k P_G (mu_hat_k - mu*_k)`` (needs the truth)."""
    d = nuisance_fit(problem, bundle, init_beta) - nuisance_fit(problem, bundle, true_beta)
    return project(bundle.basis, d)


def _projected_target(bundle):
    # U^T X_G: coordinates of P_G X_G in the score basis
    return bundle.basis.U.T @ bundle.target


def debias_beta(init_beta: np.ndarray, problem: RegressionProblem,
                bundle: ProjectionBundle, G=None) -> np.ndarray:
    """Bias-corrected estimate of ``beta_G``.

    ``b_G + (P_G X_G)^+ P_G (y - X b)``; with a reparametrized bundle,
    ``(P_G X~_G)^+ P_G (y - sum_k Q_{G_k\\G} X_{G_k} b_{G_k})``.

    Raises
    ------
    RankDeficiencyError
        When ``rank(P_G X_G) < |G|``: the correction would leave some
        direction of ``beta_G`` untouched.
    """
    _check(problem, bundle, G)
    if not bundle.rank_ok:
        raise RankDeficiencyError("rank(P_G X_G) < |G|: no bias correction in some direction")
    init_beta = np.asarray(init_beta, dtype=float)
    U = bundle.basis.U
    B = _projected_target(bundle)
    if bundle.reparametrized:
        rhs = U.T @ (problem.y - nuisance_fit(problem, bundle, init_beta))
        return pinv_apply(B, rhs)
    rhs = U.T @ (problem.y - problem.X @ init_beta)
    return init_beta[bundle.G] + pinv_apply(B, rhs)


def debias_mu(init_beta: np.ndarray, problem: RegressionProblem,
              bundle: ProjectionBundle, G=None) -> np.ndarray:
    """Bias-corrected estimate of ``mu_G = X_G beta_G``.

    ``X_G b_G + (P_G Q_G)^+ P_G (y - X b)``, computed as
    ``V (U^T V)^+ U^T (y - X b)`` with ``U``, ``V`` orthonormal bases of the
    score and group column spaces.
    """
    _check(problem, bundle, G)
    if bundle.basis.r != bundle.target_basis.r:
        raise RankDeficiencyError("rank(P_G) != rank(X_G)")
    U, V = bundle.basis.U, bundle.target_basis.U
    init_beta = np.asarray(init_beta, dtype=float)
    if bundle.reparametrized:
        r = problem.y - nuisance_fit(problem, bundle, init_beta)
        return V @ pinv_apply(U.T @ V, U.T @ r)
    r = problem.y - problem.X @ init_beta
    return bundle.target @ init_beta[bundle.G] + V @ pinv_apply(U.T @ V, U.T @ r)


def group_statistic(problem: RegressionProblem, bundle: ProjectionBundle,
                   init_beta: np.ndarray, sigma: float, null_value=None) -> float:
    """``T_G = ||P_G (y - nuisance fit - X_G b0)|| / sigma`` for ``H0: beta_G = b0``."""
    r = problem.y - nuisance_fit(problem, bundle, init_beta)
    if null_value is not None:
        r = r - bundle.target @ np.asarray(null_value, dtype=float)
    return float(np.linalg.norm(bundle.basis.U.T @ r) / sigma)


def chi2_p_value(T: float, k: int, large_group_cutoff: int = LARGE_GROUP_CUTOFF):
    """Upper-tail p-value of ``T^2`` against chi-squared with ``k`` df.

    From ``large_group_cutoff`` on, the normal approximation
    ``(T^2 - k) / sqrt(2k) ~ N(0, 1)`` is used instead.
    """
    if k < 1:
        raise InvalidArgumentError("k must be at least 1")
    if k >= large_group_cutoff:
        z = (T * T - k) / math.sqrt(2 * k)
        return float(stats.norm.sf(z)), "normal_approx"
    return float(stats.chi2.sf(T * T, k)), "chisq"


def group_test(problem: RegressionProblem, bundle: ProjectionBundle, G=None,
               init_fit: Optional[ScaledFit] = None, level: float = 0.05,
               sigma: Optional[float] = None, null_value=None,
               large_group_cutoff: int = LARGE_GROUP_CUTOFF, omega_prime=None,
               require_converged: bool = True) -> GroupInferenceResult:
    """Chi-squared test of ``H0: beta_G = null_value`` (default zero).

    Parameters
    ----------
    init_fit : ScaledFit
        Initial estimate; its ``sigma`` is the plug-in noise level unless
        ``sigma`` is given (oracle or degree-adjusted runs).
    level : float
        Level ``alpha`` of the confidence ellipsoid
        ``{b : ||(P_G X_G)(beta_G_hat - b)|| <= sigma * sqrt(chi2_{k, 1-alpha})}``.

    Raises
    ------
    InfeasibleProjectionError
        If the bundle fails its feasibility check; no p-value is produced.
    """
    _check(problem, bundle, G)
    if init_fit is None:
        raise InvalidArgumentError("an initial fit is required")
    if require_converged and not init_fit.converged:
        raise InvalidArgumentError("initial fit did not converge")
    if not 0 < level < 1:
        raise InvalidArgumentError("level must lie in (0, 1)")
    report = feasibility_report(bundle, omega_prime)
    if not report["feasible"]:
        raise InfeasibleProjectionError(
            "projection infeasible: " + "; ".join(report["reasons"]), report)
    s = init_fit.sigma if sigma is None else float(sigma)
    if s <= 0:
        raise InvalidArgumentError("sigma must be positive")
    beta_G = debias_beta(init_fit.beta, problem, bundle)
    T = group_statistic(problem, bundle, init_fit.beta, s, null_value)
    k = bundle.k_G
    p, method = chi2_p_value(T, k, large_group_cutoff)
    radius = s * math.sqrt(stats.chi2.ppf(1 - level, k))
    return GroupInferenceResult(G=bundle.G.copy(), beta_G_hat=beta_G, T=T, k_G=k,
                                p_value=min(max(p, 0.0), 1.0), method=method,
                                sigma_used=s, ellipsoid_radius=radius, level=level,
                                feasibility=report)


def ellipsoid_distance(result: GroupInferenceResult, bundle: ProjectionBundle,
                       candidate) -> float:
    candidate = np.asarray(candidate, dtype=float)
    if candidate.shape != result.beta_G_hat.shape:
        raise InvalidArgumentError("candidate has the wrong dimension")
    return float(np.linalg.norm(_projected_target(bundle) @ (result.beta_G_hat - candidate)))


def confidence_region_contains(result: GroupInferenceResult, bundle: ProjectionBundle,
                               problem: RegressionProblem = None, G=None,
                               beta_G_candidate=None, rtol: float = 1e-12) -> bool:
    if problem is not None:
        _check(problem, bundle, G)
    d = ellipsoid_distance(result, bundle, beta_G_candidate)
    return d <= result.ellipsoid_radius * (1 + rtol)


def ols_sigma(problem: RegressionProblem) -> float:
    """Degree-adjusted noise level ``sqrt(RSS / (n - rank X))`` of least squares."""
    X, y = problem.X, problem.y
    r = numerical_rank(X)
    if r >= problem.n:
        raise InvalidArgumentError("least squares leaves no residual degrees of freedom")
    b = pinv_apply(X, y)
    res = y - X @ b
    return float(math.sqrt(res @ res / (problem.n - r)))
