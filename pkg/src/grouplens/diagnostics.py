"""Empirical upper bounds on cone-restricted design constants.

The restricted eigenvalue (RE), compatibility constant (CC), cone
invertibility factor (CIF) and its sign-restricted version (SCIF) are infima
of ratios over cones of the form

    sum_{j not in T} w_j ||u_j|| <= xi * sum_{j in T} w_j ||u_j|| != 0,

with the SCIF cone further requiring ``u_j' X_j' X u <= 0`` outside ``T``.
Every cone point gives an upper bound on the infimum, so the estimators here
search the cone by random sampling plus a local pattern search and report
the best value found together with the direction attaining it.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from scipy.stats import qmc

from .core import GroupPartition
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

KINDS = ("RE", "CC", "CIF", "SCIF")
_INTERIOR = 1.0 - 1e-12  # keeps boundary samples inside despite rounding


@dataclass
class ConeSample:
    u: np.ndarray
    in_cone: bool
    in_sign_cone: bool
    values: dict = field(default_factory=dict)


@dataclass
class ConstantEstimate:
    """Certified upper bound on a design constant.

    ``upper_bound`` is the defining ratio evaluated at ``argmin_u``; it is
    ``inf`` when no admissible direction was found.
    """

    kind: str
    upper_bound: float
    argmin_u: Optional[np.ndarray]
    xi: float
    q: int
    T: tuple
    T_prime: tuple
    budget: int
    n_feasible: int

    def to_dict(self) -> dict:
        return {"kind": self.kind, "upper_bound": self.upper_bound,
                "bound_type": "upper",
                "argmin_u": None if self.argmin_u is None else self.argmin_u.tolist(),
                "xi": self.xi, "q": self.q, "T": list(self.T), "T_prime": list(self.T_prime),
                "budget": self.budget, "n_feasible": self.n_feasible}


class _Setup:
    """Validated inputs shared by all evaluations."""

    def __init__(self, X, partition: GroupPartition, omega, T, T_prime=None, q=1):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != partition.p:
            raise InvalidArgumentError("X does not match the partition")
        omega = np.asarray(omega, dtype=float)
        if omega.shape != (partition.M,) or np.any(omega <= 0):
            raise InvalidArgumentError("omega must hold one positive weight per group")
        T = tuple(sorted({int(t) for t in T}))
        if not T:
            raise InvalidArgumentError("T must be nonempty")
        if T[0] < 0 or T[-1] >= partition.M:
            raise InvalidArgumentError("T refers to a group that does not exist")
        if T_prime is None:
            T_prime = T
        elif isinstance(T_prime, str) and T_prime == "all":
            T_prime = tuple(range(partition.M))
        T_prime = tuple(sorted({int(t) for t in T_prime}))
        if not set(T) <= set(T_prime) or T_prime[-1] >= partition.M:
            raise InvalidArgumentError("T' must contain T and lie in 0..M-1")
        if q not in (1, 2):
            raise InvalidArgumentError("q must be 1 or 2")
        self.X, self.part, self.omega, self.q = X, partition, omega, q
        self.n = X.shape[0]
        self.labels = partition.labels()
        self.T, self.T_prime = T, T_prime
        self.in_T = np.zeros(partition.M, dtype=bool)
        self.in_T[list(T)] = True
        self.in_Tp = np.zeros(partition.M, dtype=bool)
        self.in_Tp[list(T_prime)] = True
        self.wT2 = float(np.sum(omega[self.in_T] ** 2))

    def group_norms(self, v):
        return np.sqrt(np.bincount(self.labels, weights=v * v, minlength=self.part.M))

    def masses(self, norms):
        wn = self.omega * norms
        return float(wn[self.in_T].sum()), float(wn[~self.in_T].sum())

    def in_cone(self, u, xi, norms=None):
        norms = self.group_norms(u) if norms is None else norms
        inside, outside = self.masses(norms)
        return inside > 0 and outside <= xi * inside

    def sign_products(self, u, grad=None):
        grad = self.X.T @ (self.X @ u) if grad is None else grad
        return np.bincount(self.labels, weights=u * grad, minlength=self.part.M)

    def in_sign_cone(self, u, xi, grad=None):
        if not self.in_cone(u, xi):
            return False
        s = self.sign_products(u, grad)
        return bool(np.all(s[~self.in_T] <= 0.0))

    def functionals(self, u) -> dict:
        Xu = self.X @ u
        grad = self.X.T @ Xu
        norms = self.group_norms(u)
        gnorms = self.group_norms(grad)
        fit = float(np.linalg.norm(Xu))
        sqn = math.sqrt(self.n)
        uTp = math.sqrt(float(np.sum(norms[self.in_Tp] ** 2)))
        inside, _ = self.masses(norms)
        re = fit / (sqn * uTp) if uTp > 0 else math.inf
        cc = fit * math.sqrt(self.wT2) / (sqn * inside) if inside > 0 else math.inf
        w = self.omega[self.in_Tp]
        lq = float(np.sum(w ** 2 * (norms[self.in_Tp] / w) ** self.q)) ** (1.0 / self.q)
        top = float(np.max(gnorms / self.omega)) * self.wT2 ** (1.0 / self.q)
        cif = top / (self.n * lq) if lq > 0 else math.inf
        return {"RE": re, "CC": cc, "CIF": cif, "SCIF": cif, "_grad": grad}


def evaluate_functionals(u, X, partition: GroupPartition, omega, T, T_prime=None,
                         q: int = 1) -> dict:
    """Values of the four defining ratios at ``u`` (cone membership not checked).

    The CIF and SCIF ratios coincide; they differ only in their domain.
    """
    s = _Setup(X, partition, omega, T, T_prime, q)
    vals = s.functionals(np.asarray(u, dtype=float))
    vals.pop("_grad")
    return vals


def constant_value(kind: str, u, X, partition: GroupPartition, omega, xi: float, T,
                   T_prime=None, q: int = 1) -> float:
    """Defining ratio of ``kind`` at ``u``; ``inf`` if ``u`` is not admissible."""
    s = _Setup(X, partition, omega, T, T_prime, q)
    return _value(s, _check_kind(kind), np.asarray(u, dtype=float), xi)


def _check_kind(kind):
    kind = kind.upper()
    if kind not in KINDS:
        raise InvalidArgumentError(f"unknown constant {kind!r}; expected one of {KINDS}")
    return kind


def _value(s: _Setup, kind, u, xi):
    if not s.in_cone(u, xi):
        return math.inf
    vals = s.functionals(u)
    if kind == "SCIF" and not np.all(s.sign_products(u, vals["_grad"])[~s.in_T] <= 0.0):
        return math.inf
    return vals[kind]


# ---------------------------------------------------------------- sampling

@dataclass
class _Raw:
    inside: np.ndarray   # supported on G_T
    outside: np.ndarray  # unit weighted mass outside T (or zero)
    t: float             # fraction of the cone boundary


def _sphere(rng, k):
    v = rng.standard_normal(k)
    nv = np.linalg.norm(v)
    return v / nv if nv > 0 else np.eye(k)[0]


def _raw_sample(s: _Setup, seed: int, index: int, p_extra: float = 0.5) -> _Raw:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))
    part = s.part
    inside = np.zeros(part.p)
    for j in s.T:
        inside[part.groups[j]] = rng.exponential() * _sphere(rng, part.sizes[j])
    outside = np.zeros(part.p)
    rest = np.flatnonzero(~s.in_T)
    extra = min(int(rng.geometric(p_extra)) - 1, rest.size)
    if extra > 0:
        chosen = rng.choice(rest, size=extra, replace=False)
        for j in chosen:
            outside[part.groups[j]] = rng.exponential() * _sphere(rng, part.sizes[j])
        mass = float(np.sum(s.omega * s.group_norms(outside)))
        outside /= mass
    t = 1.0 if rng.random() < 0.5 else float(rng.random())
    return _Raw(inside, outside, t)


def _materialize(s: _Setup, raw: _Raw, xi: float) -> np.ndarray:
    inside_mass, _ = s.masses(s.group_norms(raw.inside))
    return raw.inside + (xi * raw.t * inside_mass * _INTERIOR) * raw.outside


def _repair_sign(s: _Setup, u: np.ndarray, xi: float, passes: int = 5) -> np.ndarray:
    """Push ``u`` into the sign-restricted cone by flipping or shrinking outside groups."""
    u = u.copy()
    for _ in range(passes):
        prod = s.sign_products(u)
        bad = [j for j in np.flatnonzero(~s.in_T) if prod[j] > 0]
        if not bad:
            return u
        for j in bad:
            idx = s.part.groups[j]
            trial = u.copy()
            trial[idx] = -trial[idx]
            if s.sign_products(trial)[j] <= 0:
                u = trial
                continue
            for _ in range(10):
                trial[idx] *= 0.5
                if s.sign_products(trial)[j] <= 0:
                    break
            else:
                trial[idx] = 0.0
            u = trial
    return u


def sample_cone(X, partition: GroupPartition, omega, xi: float, T, budget: int,
                seed: int = 0, T_prime=None, q: int = 1) -> list:
    """Random cone directions with every functional evaluated at each.

    Sample ``i`` depends only on ``(seed, i)``. Samples repaired into the sign
    cone are returned alongside the raw ones.
    """
    s = _Setup(X, partition, omega, T, T_prime, q)
    _check_budget(budget)
    out = []
    for i in range(budget):
        u = _materialize(s, _raw_sample(s, seed, i), xi)
        for v in (u, _repair_sign(s, u, xi)):
            vals = s.functionals(v)
            grad = vals.pop("_grad")
            cone = s.in_cone(v, xi)
            sign = cone and bool(np.all(s.sign_products(v, grad)[~s.in_T] <= 0.0))
            out.append(ConeSample(v, cone, sign, vals))
    return out


def check_ordering(samples: Sequence[ConeSample], rtol: float = 1e-10) -> dict:
    """Pointwise ``RE^2 <= CC^2`` on cone samples and ``CC^2 <= SCIF_1`` on sign-cone samples.

    Only meaningful for ``T' = T`` and ``q = 1``.
    """
    n_cone = n_sign = v1 = v2 = 0
    for smp in samples:
        if not smp.in_cone:
            continue
        n_cone += 1
        re, cc = smp.values["RE"], smp.values["CC"]
        if re * re > cc * cc * (1 + rtol):
            v1 += 1
        if smp.in_sign_cone:
            n_sign += 1
            if cc * cc > smp.values["SCIF"] * (1 + rtol):
                v2 += 1
    return {"ok": v1 == 0 and v2 == 0, "cone_samples": n_cone, "sign_cone_samples": n_sign,
            "re_cc_violations": v1, "cc_scif_violations": v2}


def _check_budget(budget):
    if not isinstance(budget, (int, np.integer)) or budget < 1:
        raise InvalidArgumentError("budget must be a positive integer")


# ---------------------------------------------------------------- search

def _refine(s: _Setup, kind, u, val, xi, rng, max_sweeps):
    """Pattern search over per-group scalings and rotations, kept in the cone."""
    step = 0.5
    M = s.part.M
    for _ in range(max_sweeps):
        improved = False
        for j in range(M):
            idx = s.part.groups[j]
            for move in range(3):
                trial = u.copy()
                uj = trial[idx]
                nj = np.linalg.norm(uj)
                if move == 0:
                    if nj == 0:
                        continue
                    trial[idx] = uj * (1 + step)
                elif move == 1:
                    if nj == 0:
                        continue
                    trial[idx] = uj * (1 - step)
                else:
                    scale = nj if nj > 0 else step * np.linalg.norm(u) / math.sqrt(M)
                    trial[idx] = uj + step * scale * _sphere(rng, idx.size)
                trial = _project_cone(s, trial, xi)
                if trial is None:
                    continue
                tv = _value(s, kind, trial, xi)
                if tv < val:
                    u, val, improved = trial, tv, True
        if not improved:
            step *= 0.5
            if step < 1e-4:
                break
    return u, val


def _project_cone(s: _Setup, u, xi):
    norms = s.group_norms(u)
    inside, outside = s.masses(norms)
    if inside <= 0:
        return None
    if outside > xi * inside:
        mask = ~s.in_T[s.labels]
        u = u.copy()
        u[mask] *= xi * inside * _INTERIOR / outside
    return u


def estimate_path(kind: str, X, partition: GroupPartition, omega, xis: Sequence[float], T,
                  T_prime=None, q: int = 1, budget: int = 1000, seed: int = 0,
                  refine: bool = True, n_starts: int = 3,
                  max_sweeps: int = 50) -> list:
    """Upper bounds for a sequence of ``xi`` values sharing one sample pool.

    The cones are nested in ``xi``, so the best directions found at smaller
    ``xi`` remain admissible at larger ones; carrying them forward makes the
    returned bounds non-increasing in ``xi``. Results are listed in the order
    of ``xis``.
    """
    kind = _check_kind(kind)
    s = _Setup(X, partition, omega, T, T_prime, q)
    _check_budget(budget)
    xis = [float(x) for x in xis]
    if any(x < 0 for x in xis):
        raise InvalidArgumentError("xi must be non-negative")
    pool = [_raw_sample(s, seed, i) for i in range(budget)]
    carried = []
    results = {}
    for xi in sorted(set(xis)):
        cands = []
        for raw in pool:
            u = _materialize(s, raw, xi)
            if kind == "SCIF":
                u = _repair_sign(s, u, xi)
            v = _value(s, kind, u, xi)
            if math.isfinite(v):
                cands.append((v, u))
        n_feasible = len(cands)
        for u in carried:
            v = _value(s, kind, u, xi)
            if math.isfinite(v):
                cands.append((v, u))
        if not cands:
            warnings.warn(f"no admissible direction for {kind} within budget {budget}",
                          RuntimeWarning, stacklevel=2)
            results[xi] = ConstantEstimate(kind, math.inf, None, xi, q, s.T, s.T_prime,
                                           budget, 0)
            continue
        cands.sort(key=lambda c: c[0])
        best_v, best_u = cands[0]
        if refine:
            rng = np.random.Generator(np.random.Philox(
                np.random.SeedSequence([int(seed), budget, 7])))
            for v0, u0 in cands[:n_starts]:
                u1, v1 = _refine(s, kind, u0, v0, xi, rng, max_sweeps)
                if v1 < best_v:
                    best_v, best_u = v1, u1
        carried.append(best_u)
        # report the ratio recomputed at the stored direction
        results[xi] = ConstantEstimate(kind, _value(s, kind, best_u, xi), best_u.copy(), xi,
                                       q, s.T, s.T_prime, budget, n_feasible)
    return [results[x] for x in xis]


def estimate_constant(kind: str, X, partition: GroupPartition, omega, xi: float, T,
                      T_prime=None, q: int = 1, budget: int = 1000, seed: int = 0,
                      **kwargs) -> ConstantEstimate:
    """Certified upper bound on RE, CC, CIF_q or SCIF_q.

    Parameters
    ----------
    kind : {"RE", "CC", "CIF", "SCIF"}
    X : ndarray of shape (n, p)
    partition : GroupPartition
    omega : array of shape (M,)
        Positive group weights defining the cone.
    xi : float
        Cone aperture.
    T : iterable of int
        Zero-based ids of the groups that carry the cone's mass.
    T_prime : iterable of int or "all", optional
        Groups in the denominator of RE, CIF and SCIF; defaults to ``T``.
    q : {1, 2}
    budget : int
        Number of random cone directions.
    seed : int

    Returns
    -------
    ConstantEstimate
        ``upper_bound`` equals the ratio at ``argmin_u``. It is ``inf``, with
        a warning, when no admissible direction was found.
    """
    return estimate_path(kind, X, partition, omega, [xi], T, T_prime, q, budget, seed,
                         **kwargs)[0]


def grid_search(kind: str, X, partition: GroupPartition, omega, xi: float, T, points: int,
                seed: int = 0, T_prime=None, q: int = 1, chunk: int = 1 << 14) -> float:
    """Brute-force minimum of the ratio over ``points`` points of the unit sphere.

    The points are scrambled Sobol points pushed through the normal quantile
    function and normalized. An independent reference for small ``p``; the
    ratios are scale free, so the sphere covers the whole cone.
    """
    kind = _check_kind(kind)
    s = _Setup(X, partition, omega, T, T_prime, q)
    sobol = qmc.Sobol(d=s.part.p, scramble=True, seed=seed)
    chunk = 1 << max(int(chunk).bit_length() - 1, 0)
    best = math.inf
    X = s.X
    lab = s.labels
    M = s.part.M
    w = s.omega
    for start in range(0, points, chunk):
        m = min(chunk, points - start)
        U = stats.norm.ppf(sobol.random(chunk)[:m])
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        Xu = U @ X.T
        grad = Xu @ X
        onehot = np.eye(M)[lab]                       # p x M
        norms = np.sqrt((U * U) @ onehot)              # m x M
        gnorms = np.sqrt((grad * grad) @ onehot)
        inside = (norms[:, s.in_T] * w[s.in_T]).sum(axis=1)
        outside = (norms[:, ~s.in_T] * w[~s.in_T]).sum(axis=1)
        ok = (inside > 0) & (outside <= xi * inside)
        if kind == "SCIF":
            prod = (U * grad) @ onehot
            ok &= np.all(prod[:, ~s.in_T] <= 0, axis=1)
        fit = np.linalg.norm(Xu, axis=1)
        if kind == "RE":
            val = fit / (math.sqrt(s.n) * np.sqrt((norms[:, s.in_Tp] ** 2).sum(axis=1)))
        elif kind == "CC":
            val = fit * math.sqrt(s.wT2) / (math.sqrt(s.n) * inside)
        else:
            wp = w[s.in_Tp]
            lq = ((wp ** 2) * (norms[:, s.in_Tp] / wp) ** q).sum(axis=1) ** (1.0 / q)
            val = (gnorms / w).max(axis=1) * s.wT2 ** (1.0 / q) / (s.n * lq)
        if ok.any():
            best = min(best, float(val[ok].min()))
    return best
