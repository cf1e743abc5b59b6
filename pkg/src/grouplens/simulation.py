"""Seeded data generators and the replication harness for the simulation study."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .core import GroupPartition, RegressionProblem, default_weights
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

STREAM_DESIGN, STREAM_NOISE, STREAM_SIGNAL = 0, 1, 2


def rng_for(seed: int, rep_index: int, stream: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, replication, stream)."""
    ss = np.random.SeedSequence([int(seed), int(rep_index), int(stream)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimDesign:
    """One simulation scenario.

    Groups are contiguous blocks of ``group_size`` variables. The design rows
    are iid ``N(0, Sigma)`` with ``Sigma`` block diagonal (blocks of
    ``block_size`` variables, within-block correlation ``rho``); ``rho = 0``
    gives the identity. ``weights_M`` overrides the group count entering the
    penalty level (the number of groups by default). The first ``g`` groups carry ``s`` nonzero
    coefficients of kind ``"pm1"`` (random signs), ``"uniform"`` (uniform on
    ``signal_range``) or ``"constant"`` (all equal to ``tau``).
    """

    n: int
    p: int
    group_size: int
    g: int
    s: int
    signal: str = "pm1"
    tau: float = 1.0
    signal_range: tuple = (2.0, 3.0)
    rho: float = 0.0
    block_size: Optional[int] = None
    sigma: float = 1.0
    orthonormalize_groups: bool = False
    weights_scale: float = 1.0
    weights_M: Optional[int] = None
    seed: int = 0
    test_groups: tuple = (0,)
    xi: float = 1.0
    penalty: str = "frobenius"
    alpha: float = 0.05
    pivot_at_truth: bool = False
    oracle_sigma: bool = False

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.group_size < 1:
            raise InvalidArgumentError("n, p and group_size must be positive")
        if self.p % self.group_size:
            raise InvalidArgumentError("p must be a multiple of group_size")
        k = self.block_size or self.group_size
        if k > 1 and not (-1.0 / (k - 1) < self.rho < 1.0):
            raise InvalidArgumentError(
                f"rho={self.rho} does not give a valid correlation matrix for block size {k}")
        if k == 1 and self.rho != 0:
            raise InvalidArgumentError("rho must be 0 for block size 1")
        if not 0 <= self.g <= self.M:
            raise InvalidArgumentError("g must lie in 0..M")
        if self.s > self.g * self.group_size or self.s < (1 if self.g else 0) * self.g:
            raise InvalidArgumentError("s inconsistent with g active groups")
        if self.signal not in ("pm1", "uniform", "constant"):
            raise InvalidArgumentError(f"unknown signal kind {self.signal!r}")
        if self.sigma <= 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.penalty not in ("frobenius", "nuclear"):
            raise InvalidArgumentError(f"unknown penalty {self.penalty!r}")
        if not 0 < self.alpha < 1:
            raise InvalidArgumentError("alpha must lie in (0, 1)")
        for t in self.test_groups:
            if not 0 <= t < self.M:
                raise InvalidArgumentError(f"test group {t} out of range")

    @property
    def M(self) -> int:
        return self.p // self.group_size

    def partition(self) -> GroupPartition:
        return GroupPartition.contiguous([self.group_size] * self.M)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["signal_range"] = list(self.signal_range)
        d["test_groups"] = list(self.test_groups)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimDesign":
        d = dict(d)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgumentError(f"unknown design fields: {sorted(unknown)}")
        required = {f.name for f in dataclasses.fields(cls)
                    if f.default is dataclasses.MISSING
                    and f.default_factory is dataclasses.MISSING}
        missing = required - set(d)
        if missing:
            raise InvalidArgumentError(f"missing design fields: {sorted(missing)}")
        if "signal_range" in d:
            d["signal_range"] = tuple(d["signal_range"])
        if "test_groups" in d:
            d["test_groups"] = tuple(int(t) for t in d["test_groups"])
        try:
            return cls(**d)
        except TypeError as exc:  # wrongly typed field values
            raise InvalidArgumentError(f"invalid design: {exc}") from None


@dataclass
class SimData:
    problem: RegressionProblem
    beta: np.ndarray
    eps: np.ndarray
    sigma: float


def correlation_block(k: int, rho: float) -> np.ndarray:
    return (1 - rho) * np.eye(k) + rho * np.ones((k, k))


def design_matrix(design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    n, p = design.n, design.p
    Z = rng.standard_normal((n, p))
    k = design.block_size or design.group_size
    if design.rho != 0:
        for start in range(0, p, k):
            stop = min(start + k, p)
            L = np.linalg.cholesky(correlation_block(stop - start, design.rho))
            Z[:, start:stop] = Z[:, start:stop] @ L.T
    return Z


def orthonormalize_groups(X: np.ndarray, partition: GroupPartition) -> np.ndarray:
    """Rescale each group block so that ``X_j^T X_j / n = I``."""
    n = X.shape[0]
    X = X.copy()
    for g in partition.groups:
        Q, R = np.linalg.qr(X[:, g])
        if np.min(np.abs(np.diag(R))) <= 1e-12 * np.max(np.abs(np.diag(R))):
            raise InvalidArgumentError("cannot orthonormalize a rank-deficient group")
        X[:, g] = math.sqrt(n) * Q
    return X


def true_beta(design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    beta = np.zeros(design.p)
    d = design.group_size
    slots = [j * d + i for i in range(d) for j in range(design.g)]
    idx = np.sort(np.array(slots[:design.s], dtype=int))
    if design.signal == "pm1":
        beta[idx] = rng.choice([-1.0, 1.0], size=idx.size)
    elif design.signal == "uniform":
        lo, hi = design.signal_range
        beta[idx] = rng.uniform(lo, hi, size=idx.size)
    else:
        beta[idx] = design.tau
    return beta


def generate(design: SimDesign, rep_index: int) -> SimData:
    """Draw one replication; deterministic in ``(design.seed, rep_index)``."""
    part = design.partition()
    X = design_matrix(design, rng_for(design.seed, rep_index, STREAM_DESIGN))
    if design.orthonormalize_groups:
        X = orthonormalize_groups(X, part)
    beta = true_beta(design, rng_for(design.seed, rep_index, STREAM_SIGNAL))
    eps = design.sigma * rng_for(design.seed, rep_index, STREAM_NOISE).standard_normal(design.n)
    y = X @ beta + eps
    w = default_weights(part, design.n, M=design.weights_M, scale=design.weights_scale)
    return SimData(RegressionProblem(X, y, part, w), beta, eps, design.sigma)


@dataclass
class ReplicationSummary:
    """Per-replication records plus aggregates over the successful ones."""

    design: dict
    reps: int
    rows: list
    failures: list
    aggregates: dict
    qq: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"design": self.design, "reps": self.reps, "rows": self.rows,
                "failures": self.failures, "failure_count": len(self.failures),
                "aggregates": self.aggregates}


def _weighted_prediction_error(problem, beta_hat, beta_true, sigma):
    n = problem.n
    w_star = default_weights(problem.partition, n)
    h = beta_hat - beta_true
    total = sum(w * np.linalg.norm(problem.X[:, g] @ h[g])
                for w, g in zip(w_star, problem.partition.groups))
    return float(total / (math.sqrt(n) * sigma))


def run_one(design: SimDesign, rep_index: int) -> dict:
    """Fit, project and test one replication; returns a flat record."""
    from .inference import group_test
    from .projection import relaxed_projection
    from .scaled import fit_scaled

    data = generate(design, rep_index)
    pr = data.problem
    fit = fit_scaled(pr)
    sigma_oracle = float(np.linalg.norm(data.eps) / math.sqrt(pr.n))
    row = {
        "rep": rep_index, "sigma_hat": fit.sigma, "sigma_converged": fit.converged,
        "sigma_z": math.sqrt(2 * pr.n) * (fit.sigma / design.sigma - 1.0),
        "sigma_rel_error": abs(fit.sigma / sigma_oracle - 1.0),
        "weighted_pred_error": _weighted_prediction_error(pr, fit.beta, data.beta, design.sigma),
        "tests": [],
    }
    for j in design.test_groups:
        G = pr.partition.groups[j]
        bundle = relaxed_projection(pr.X, pr.partition, G, penalty_kind=design.penalty,
                                    xi=design.xi, omega2=pr.weights)
        null = data.beta[G] if design.pivot_at_truth else None
        res = group_test(pr, bundle, init_fit=fit, level=design.alpha, null_value=null,
                         sigma=design.sigma if design.oracle_sigma else None)
        row["tests"].append({
            "group": int(j), "nonzero": bool(np.any(data.beta[G] != 0)),
            "T": res.T, "T2": res.T ** 2, "k_G": res.k_G, "p_value": res.p_value,
            "reject": bool(res.p_value < design.alpha), "method": res.method,
            "gap": bundle.gap, "tau": bundle.tau, "eta_G": res.feasibility["eta_G"],
            "covered": bool(np.linalg.norm(
                bundle.basis.U.T @ bundle.target @ (res.beta_G_hat - data.beta[G]))
                <= res.ellipsoid_radius),
        })
    return row


def _safe_run(design, rep_index):
    try:
        return run_one(design, rep_index)
    except Exception as exc:  # recorded, not fatal
        return {"rep": rep_index, "error": f"{type(exc).__name__}: {exc}"}


def qq_pairs(sample, dist) -> np.ndarray:
    """Sorted (theoretical, empirical) quantile pairs at plotting positions."""
    x = np.sort(np.asarray(sample, dtype=float))
    m = x.size
    probs = (np.arange(1, m + 1) - 0.5) / m
    return np.column_stack([dist.ppf(probs), x])


def summarize(design: SimDesign, rows: list) -> ReplicationSummary:
    ok = [r for r in rows if "error" not in r]
    failures = [r for r in rows if "error" in r]
    agg = {"successful_reps": len(ok)}
    qq = {}
    if ok:
        sig = np.array([r["sigma_hat"] for r in ok])
        z = np.array([r["sigma_z"] for r in ok])
        agg.update({
            "mean_sigma": float(sig.mean()),
            "sd_sigma": float(sig.std(ddof=1)) if sig.size > 1 else 0.0,
            "mean_sigma_z": float(z.mean()),
            "var_sigma_z": float(z.var(ddof=1)) if z.size > 1 else 0.0,
            "ks_sigma_z": float(stats.kstest(z, "norm").statistic),
            "mean_sigma_rel_error": float(np.mean([r["sigma_rel_error"] for r in ok])),
            "mean_weighted_pred_error": float(np.mean([r["weighted_pred_error"] for r in ok])),
        })
        qq["sigma"] = qq_pairs(z, stats.norm)
        per_group = {}
        for pos, j in enumerate(design.test_groups):
            tests = [r["tests"][pos] for r in ok]
            T2 = np.array([t["T2"] for t in tests])
            k = tests[0]["k_G"]
            rate = float(np.mean([t["reject"] for t in tests]))
            per_group[str(j)] = {
                "nonzero": tests[0]["nonzero"], "k_G": k, "rejection_rate": rate,
                "coverage": float(np.mean([t["covered"] for t in tests])),
                "mean_T2": float(T2.mean()), "mean_gap": float(np.mean([t["gap"] for t in tests])),
                "ks_chi2": float(stats.kstest(T2, stats.chi2(k).cdf).statistic),
                "ks_normal": float(stats.kstest((T2 - k) / math.sqrt(2 * k), "norm").statistic),
            }
            qq[f"T2_group{j}"] = qq_pairs(T2, stats.chi2(k))
            qq[f"T2_normal_group{j}"] = qq_pairs((T2 - k) / math.sqrt(2 * k), stats.norm)
        agg["groups"] = per_group
        nz = [g for g in per_group.values() if g["nonzero"]]
        zero = [g for g in per_group.values() if not g["nonzero"]]
        if nz:
            agg["TP"] = nz[0]["rejection_rate"]
        if zero:
            agg["FP"] = zero[0]["rejection_rate"]
    return ReplicationSummary(design.to_dict(), len(rows), ok, failures, agg, qq)


def run_replications(design: SimDesign, reps: int, threads: int = 1,
                     start: int = 0) -> ReplicationSummary:
    """Run ``reps`` independent replications of the three-step procedure.

    Results do not depend on ``threads``: every replication draws from its
    own keyed random stream and rows are reduced in replication order.
    """
    if reps < 1:
        raise InvalidArgumentError("reps must be at least 1")
    idx = range(start, start + reps)
    if threads == 1:
        rows = [_safe_run(design, i) for i in idx]
    else:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=threads)(delayed(_safe_run)(design, i) for i in idx)
    rows.sort(key=lambda r: r["rep"])
    for r in rows:
        if "error" in r:
            log.warning("replication %d failed: %s", r["rep"], r["error"])
    return summarize(design, rows)


# Scenarios of the simulation study. The penalty scale of the noise-level
# and group-distribution studies is not pinned down by the source; 0.7
# reproduces the reported mean noise-level estimate.
def sigma_design(p: int = 200, seed: int = 0) -> SimDesign:
    return SimDesign(n=1000, p=p, group_size=4, g=2, s=8, signal="pm1",
                     orthonormalize_groups=True, weights_scale=0.7, seed=seed,
                     test_groups=())


def small_group_design(seed: int = 0) -> SimDesign:
    """Groups of 4 with signals in [2, 3]; tests the first zero group."""
    return SimDesign(n=1000, p=200, group_size=4, g=10, s=40, signal="uniform",
                     orthonormalize_groups=True, weights_scale=0.7, seed=seed,
                     test_groups=(10,))


def large_group_design(seed: int = 0) -> SimDesign:
    """Groups of 20 with signals in [2, 3]; tests the first zero group."""
    return SimDesign(n=1000, p=200, group_size=20, g=2, s=40, signal="uniform",
                     orthonormalize_groups=True, weights_scale=0.7, seed=seed,
                     test_groups=(2,))


def block_design(rho: float, tau: float, group_size: int = 5, seed: int = 0) -> SimDesign:
    """Block-correlated design with one constant-signal group (n=100, p=200).

    Tests the nonzero first group and the first zero group.
    """
    g = 1 if tau != 0 else 0
    # the penalty level keeps the 40 blocks of the base design for every group size
    return SimDesign(n=100, p=200, group_size=group_size, g=g, s=group_size * g,
                     signal="constant", tau=tau, rho=rho, block_size=group_size,
                     weights_scale=5.0, weights_M=40, seed=seed,
                     test_groups=(0, 1) if g else (0,))


def null_design(seed: int = 0) -> SimDesign:
    """Global null on the base block design: every coefficient is zero."""
    return block_design(rho=0.0, tau=0.0, seed=seed)
