"""Relaxed projections for group inference.

A score matrix ``Z`` for a variable group ``G`` is obtained as the residual
of a penalized multivariate regression of ``X_G`` (or of its within-group
reparametrization) on the out-of-group parts ``X_{G_k \\ G}`` of every group
not contained in ``G``. The projection onto ``range(Z)`` drives the bias
correction; this module also reports how far that projection is from the
group's own column space (gap, noise factor) and from the nuisance columns
(bias components).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import GroupPartition, default_weights
from .errors import InvalidArgumentError
from .numerics import (RANK_TOL, OrthoBasis, numerical_rank, pinv_apply,
                       project, project_out, range_basis, spectral_norm)

log = logging.getLogger(__name__)

PENALTIES = ("frobenius", "nuclear")


def as_index_set(G, p: int) -> np.ndarray:
    G = np.unique(np.asarray(G, dtype=np.intp).reshape(-1))
    if G.size == 0:
        raise InvalidArgumentError("group of interest is empty")
    if G[0] < 0 or G[-1] >= p:
        raise InvalidArgumentError(f"group indices must lie in 0..{p - 1}")
    return G


@dataclass(frozen=True)
class GroupSplit:
    """How a target index set ``G`` cuts through the partition.

    ``outside[k]`` is ``G_k \\ G`` for every group not contained in ``G``;
    ``inside[k]`` is ``G_k & G`` for every group meeting ``G``.
    """

    G: np.ndarray
    outside: dict
    inside: dict

    @classmethod
    def of(cls, partition: GroupPartition, G) -> "GroupSplit":
        G = as_index_set(G, partition.p)
        mask = np.zeros(partition.p, dtype=bool)
        mask[G] = True
        outside, inside = {}, {}
        for k, gk in enumerate(partition.groups):
            m = mask[gk]
            if not m.all():
                outside[k] = gk[~m]
            if m.any():
                inside[k] = gk[m]
        return cls(G, outside, inside)

    @property
    def straddled(self) -> list:
        """Groups with members both inside and outside ``G``."""
        return [k for k in self.inside if k in self.outside]

    @property
    def is_nested(self) -> bool:
        return not self.straddled


@dataclass(frozen=True)
class ReparamDesign:
    """Within-group reparametrization of ``X_G``.

    For each straddled group the block ``X_{G_k & G}`` is replaced by its
    residual against ``X_{G_k \\ G}``; other blocks are unchanged. Columns of
    ``X_tilde`` follow the sorted order of ``G``.
    """

    X_tilde: np.ndarray
    split: GroupSplit
    outside_bases: dict
    back_maps: dict

    def nuisance_coefficients(self, beta: np.ndarray) -> dict:
        """Coefficients ``b~_k`` of ``X_{G_k \\ G}`` after reparametrization.

        ``X_{G_k} b_{G_k} = X~_{G_k & G} b_{G_k & G} + X_{G_k \\ G} b~_k``.
        """
        out = {}
        for k, out_idx in self.split.outside.items():
            bt = beta[out_idx].copy()
            if k in self.back_maps:
                in_idx, D = self.back_maps[k]
                bt = bt + D @ beta[in_idx]
            out[k] = bt
        return out


def reparametrize(X: np.ndarray, partition: GroupPartition, G,
                  rank_tol: float = RANK_TOL) -> ReparamDesign:
    X = np.asarray(X, dtype=float)
    split = GroupSplit.of(partition, G)
    pos = {v: i for i, v in enumerate(split.G)}
    Xt = X[:, split.G].copy()
    bases, back = {}, {}
    for k, out_idx in split.outside.items():
        bases[k] = range_basis(X[:, out_idx], rank_tol)
    for k in split.straddled:
        in_idx = split.inside[k]
        cols = [pos[v] for v in in_idx]
        Xa = X[:, in_idx]
        Xt[:, cols] = project_out(bases[k], Xa)
        back[k] = (in_idx, pinv_apply(X[:, split.outside[k]], Xa, rank_tol))
    return ReparamDesign(Xt, split, bases, back)


@dataclass
class ProjectionBundle:
    """Score matrix, its projection and the feasibility diagnostics.

    ``target`` is the matrix whose column space plays the role of ``Q_G``:
    ``X_G`` itself, or its reparametrization when ``reparametrized``.
    ``group_bias`` maps each group ``k`` not contained in ``G`` to
    ``||P_G Q_{G_k \\ G}||_S`` and ``dual_norms`` to
    ``||Q_{G_k \\ G} Z / sqrt(n)||`` in the penalty's dual norm.
    """

    G: np.ndarray
    Z: np.ndarray
    basis: OrthoBasis
    target: np.ndarray
    target_basis: OrthoBasis
    reparametrized: bool
    gap: float
    tau: float
    group_bias: dict
    dual_norms: dict
    xi_omega: dict
    rank_ok: bool
    penalty_kind: str
    converged: bool = True
    iterations: int = 0
    score_conditioning: float = float("nan")
    split: Optional[GroupSplit] = field(default=None, repr=False)
    outside_bases: dict = field(default_factory=dict, repr=False)
    X: Optional[np.ndarray] = field(default=None, repr=False)
    partition: Optional[GroupPartition] = field(default=None, repr=False)
    xi: float = 1.0

    @property
    def k_G(self) -> int:
        return self.basis.r

    def dual_bound_violation(self) -> float:
        """Largest excess of a dual norm over its penalty level (<= 0 when certified)."""
        if not self.dual_norms:
            return -math.inf
        return max(self.dual_norms[k] - self.xi_omega[k] for k in self.dual_norms)

    def certified(self, tol: float = 1e-6) -> bool:
        return self.dual_bound_violation() <= tol

    def summary(self) -> dict:
        return {
            "G": self.G.tolist(), "k_G": self.k_G, "gap": self.gap, "tau": self.tau,
            "rank_ok": self.rank_ok, "penalty": self.penalty_kind, "xi": self.xi,
            "reparametrized": self.reparametrized, "converged": self.converged,
            "iterations": self.iterations,
            "max_group_bias": max(self.group_bias.values(), default=0.0),
            "dual_bound_violation": self.dual_bound_violation(),
            "score_conditioning": self.score_conditioning,
        }


def _gap_and_tau(U: np.ndarray, V: np.ndarray):
    """Gap ``||P Q^perp||_S`` and noise factor ``||(P Q)^+||_S`` from bases."""
    if U.shape[1] == 0:
        return 0.0, math.inf
    UV = U.T @ V
    gap = spectral_norm(U.T - UV @ V.T)
    s = np.linalg.svd(UV, compute_uv=False)
    s = s[s > RANK_TOL * max(s[0], 1.0)] if s.size else s
    tau = 1.0 / s.min() if s.size else math.inf
    return min(gap, 1.0), tau


def bundle_from_scores(X: np.ndarray, partition: GroupPartition, G, Z: np.ndarray,
                       reparametrize_target: Optional[bool] = None,
                       penalty_kind: str = "frobenius", xi: float = 1.0,
                       omega2=None, rank_tol: float = RANK_TOL,
                       converged: bool = True, iterations: int = 0,
                       _reparam: Optional[ReparamDesign] = None) -> ProjectionBundle:
    """Assemble a :class:`ProjectionBundle` around a given score matrix."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    rp = _reparam or reparametrize(X, partition, G, rank_tol)
    split = rp.split
    if reparametrize_target is None:
        reparametrize_target = not split.is_nested
    target = rp.X_tilde if reparametrize_target else X[:, split.G]
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (n, split.G.size):
        raise InvalidArgumentError(f"score matrix must be {n} x {split.G.size}")
    if penalty_kind not in PENALTIES:
        raise InvalidArgumentError(f"penalty_kind must be one of {PENALTIES}")
    if omega2 is None:
        omega2 = default_weights(partition, n)
    omega2 = np.asarray(omega2, dtype=float)

    basis = range_basis(Z, rank_tol)
    tbasis = range_basis(target, rank_tol)
    gap, tau = _gap_and_tau(basis.U, tbasis.U)
    rank_ok = (basis.r == split.G.size
               and numerical_rank(basis.U.T @ target, rank_tol) == split.G.size)
    bias, dual, xo = {}, {}, {}
    for k, Wk in rp.outside_bases.items():
        bias[k] = spectral_norm(basis.U.T @ Wk.U) if Wk.r else 0.0
        QZ = Wk.U.T @ Z / math.sqrt(n)
        if penalty_kind == "frobenius":
            dual[k] = float(np.linalg.norm(QZ))
        else:
            dual[k] = spectral_norm(QZ)
        xo[k] = xi * float(omega2[k])
    ev = np.linalg.eigvalsh(Z.T @ Z / n) if Z.size else np.zeros(0)
    cond = 1.0 / math.sqrt(ev.min()) if ev.size and ev.min() > 0 else math.inf
    return ProjectionBundle(
        G=split.G, Z=Z, basis=basis, target=target, target_basis=tbasis,
        reparametrized=bool(reparametrize_target), gap=gap, tau=tau,
        group_bias=bias, dual_norms=dual, xi_omega=xo, rank_ok=rank_ok,
        penalty_kind=penalty_kind, converged=converged, iterations=iterations,
        score_conditioning=cond, split=split, outside_bases=rp.outside_bases,
        X=X, partition=partition, xi=xi)


def _prox(C: np.ndarray, t: float, kind: str) -> np.ndarray:
    if t == 0.0:
        return C
    if kind == "frobenius":
        nrm = np.linalg.norm(C)
        return C * (1 - t / nrm) if nrm > t else np.zeros_like(C)
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep]


def relaxed_projection(X: np.ndarray, partition: GroupPartition, G,
                       penalty_kind: str = "frobenius", xi: float = 1.0, omega2=None,
                       reparametrize_target: Optional[bool] = None,
                       max_iter: int = 10000, tol: float = 1e-10,
                       rank_tol: float = RANK_TOL) -> ProjectionBundle:
    """Score matrix from a groupwise penalized multivariate regression.

    Solves::

        min_Gamma (1/2n) ||X_G - sum_k X_{G_k\\G} Gamma_k||_F^2
                  + sum_k (xi * omega2_k / sqrt(n)) ||X_{G_k\\G} Gamma_k||

    with the Frobenius or nuclear norm on each fitted block, and returns the
    bundle built on the residual ``Z``. Each block is expressed in an
    orthonormal basis of ``range(X_{G_k\\G})`` so that the block update is an
    exact proximal step (matrix soft-thresholding or singular-value
    soft-thresholding). When ``reparametrize_target`` is true (the default
    whenever ``G`` straddles a group) ``X_G`` is first replaced by its
    within-group reparametrization.

    Parameters
    ----------
    omega2 : array of shape (M,), optional
        Per-group penalty levels; defaults to unit-scale default weights.
        Only entries of groups not contained in ``G`` are used.
    tol : float
        Convergence threshold on the largest proximal fixed-point residual,
        relative to ``||X_G||_F / sqrt(n)``.
    """
    if penalty_kind not in PENALTIES:
        raise InvalidArgumentError(f"penalty_kind must be one of {PENALTIES}")
    if xi < 0:
        raise InvalidArgumentError("xi must be non-negative")
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    rp = reparametrize(X, partition, G, rank_tol)
    split = rp.split
    if split.G.size >= n:
        raise InvalidArgumentError("|G| must be smaller than n")
    if reparametrize_target is None:
        reparametrize_target = not split.is_nested
    T = rp.X_tilde if reparametrize_target else X[:, split.G]
    if omega2 is None:
        omega2 = default_weights(partition, n)
    omega2 = np.asarray(omega2, dtype=float)
    if omega2.shape != (partition.M,):
        raise InvalidArgumentError(f"omega2 must have length {partition.M}")

    ks = [k for k in split.outside if rp.outside_bases[k].r > 0]
    lam = {k: xi * float(omega2[k]) for k in ks}
    if any(l < 0 for l in lam.values()):
        raise InvalidArgumentError("penalty levels must be non-negative")
    A = {k: math.sqrt(n) * rp.outside_bases[k].U for k in ks}
    kw = dict(reparametrize_target=reparametrize_target, penalty_kind=penalty_kind,
              xi=xi, omega2=omega2, rank_tol=rank_tol, _reparam=rp)

    if not ks:
        return bundle_from_scores(X, partition, split.G, T.copy(), **kw)
    if all(l == 0 for l in lam.values()):
        # exact least-squares residual against all nuisance columns
        span = range_basis(np.hstack([rp.outside_bases[k].U for k in ks]), rank_tol)
        return bundle_from_scores(X, partition, split.G, project_out(span, T), **kw)

    C = {k: np.zeros((A[k].shape[1], T.shape[1])) for k in ks}
    Z = T.copy()
    scale = max(np.linalg.norm(T) / math.sqrt(n), 1e-300)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        worst = 0.0
        for k in ks:
            grad = A[k].T @ Z / n
            new = _prox(C[k] + grad, lam[k], penalty_kind)
            d = new - C[k]
            if np.any(d):
                Z -= A[k] @ d
                C[k] = new
                worst = max(worst, float(np.linalg.norm(d)))
        if worst <= tol * scale:
            # confirm with a full fixed-point pass at the current iterate
            res = max(np.linalg.norm(_prox(C[k] + A[k].T @ Z / n, lam[k], penalty_kind) - C[k])
                      for k in ks)
            if res <= tol * scale:
                converged = True
                break
    if not converged:
        log.warning("relaxed projection did not converge in %d sweeps", max_iter)
    Z = T - sum(A[k] @ C[k] for k in ks)
    return bundle_from_scores(X, partition, split.G, Z, converged=converged,
                              iterations=it, **kw)


def _stretch_factor(X: np.ndarray, split: GroupSplit, k: int, rank_tol: float) -> float:
    """``max ||X_{G_k\\G} u_out|| / ||X_{G_k} u||`` over ``u``."""
    if k not in split.inside:
        return 1.0
    gk = np.sort(np.concatenate([split.inside[k], split.outside[k]]))
    Xk = X[:, gk]
    sel = np.isin(gk, split.outside[k]).astype(float)
    U, s, Vt = np.linalg.svd(Xk, full_matrices=False)
    keep = s > rank_tol * s[0]
    # u = V diag(1/s) c with ||c|| = ||X_k u||
    B = Xk @ (sel[:, None] * (Vt[keep].T / s[keep]))
    return spectral_norm(B)


def feasibility_report(bundle: ProjectionBundle, omega_prime=None,
                       dual_tol: float = 1e-6, max_gap: float = 1.0) -> dict:
    """Check the relaxed projection against the constraints it must meet.

    Feasible means: full rank, ``gap < max_gap``, certified dual bound, and
    ``||P_G Q_{G_k\\G}||_S <= omega_prime_k`` for every group not contained in
    ``G``. By default ``omega_prime_k`` is the bound implied by the dual
    certificate, ``xi * omega2_k * ||(Z^T Z / n)^{-1/2}||_S``.

    The bias factor ``eta_G = max_k M_k ||P_G Q_{G_k}||_S / omega_{*,k}`` uses
    unit-scale default weights for ``omega_*`` and ``M_k = 1`` after
    reparametrization.
    """
    X, part, split = bundle.X, bundle.partition, bundle.split
    n = X.shape[0]
    reasons = []
    if not bundle.rank_ok:
        reasons.append("rank(P_G X_G) < |G|")
    if not bundle.gap < max_gap:
        reasons.append(f"gap {bundle.gap:.6f} >= {max_gap}")
    if not bundle.converged:
        reasons.append("projection solver did not converge")
    if not bundle.certified(dual_tol):
        reasons.append("dual bound not certified")
    worst_k, worst_ratio = None, -math.inf
    limits = {}
    for k, b in bundle.group_bias.items():
        if omega_prime is None:
            lim = bundle.xi_omega[k] * bundle.score_conditioning + dual_tol
        else:
            lim = float(np.asarray(omega_prime)[k])
        limits[k] = lim
        ratio = b / lim if lim > 0 else (math.inf if b > 0 else 0.0)
        if ratio > worst_ratio:
            worst_k, worst_ratio = k, ratio
    if worst_ratio > 1.0:
        reasons.append(f"bias component of group {worst_k} exceeds its limit")

    omega_star = default_weights(part, n)
    eta = 0.0
    for k in split.outside:
        Wk = range_basis(X[:, part.groups[k]])
        Mk = 1.0 if bundle.reparametrized else _stretch_factor(X, split, k, RANK_TOL)
        eta = max(eta, Mk * spectral_norm(bundle.basis.U.T @ Wk.U) / omega_star[k])
    return {"feasible": not reasons, "reasons": reasons, "worst_group": worst_k,
            "worst_ratio": worst_ratio if worst_k is not None else 0.0,
            "eta_G": eta, "gap": bundle.gap, "tau": bundle.tau}
