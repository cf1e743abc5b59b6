"""Group structure, penalty weights and the problem container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class GroupPartition:
    """Disjoint variable groups covering ``0..p-1``.

    Groups need not be contiguous ranges. Indices are 0-based.
    """

    groups: tuple[np.ndarray, ...]
    p: int
    _membership: np.ndarray = field(repr=False, compare=False)

    def __init__(self, groups: Iterable[Sequence[int]]):
        blocks = []
        for g in groups:
            idx = np.asarray(sorted(int(i) for i in g), dtype=np.intp)
            if idx.size == 0:
                raise InvalidArgumentError("empty group in partition")
            if np.unique(idx).size != idx.size:
                raise InvalidArgumentError("duplicate index inside a group")
            idx.setflags(write=False)
            blocks.append(idx)
        if not blocks:
            raise InvalidArgumentError("partition has no groups")
        p = int(sum(b.size for b in blocks))
        membership = np.full(p, -1, dtype=np.intp)
        for j, b in enumerate(blocks):
            if b.min() < 0 or b.max() >= p:
                raise InvalidArgumentError(
                    f"group {j} has indices outside 0..{p - 1}")
            if np.any(membership[b] >= 0):
                raise InvalidArgumentError("groups overlap")
            membership[b] = j
        membership.setflags(write=False)
        object.__setattr__(self, "groups", tuple(blocks))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "_membership", membership)

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "GroupPartition":
        """Build from one group label per variable (groups ordered by label)."""
        labels = np.asarray(labels)
        if labels.ndim != 1 or labels.size == 0:
            raise InvalidArgumentError("labels must be a non-empty 1-d array")
        return cls([np.flatnonzero(labels == lab) for lab in np.unique(labels)])

    @classmethod
    def contiguous(cls, sizes: Sequence[int]) -> "GroupPartition":
        edges = np.concatenate([[0], np.cumsum(sizes)])
        return cls([range(a, b) for a, b in zip(edges[:-1], edges[1:])])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=np.intp)

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def membership(self) -> np.ndarray:
        """Group id of every variable."""
        return self._membership

    def labels(self) -> np.ndarray:
        return self._membership.copy()

    def union(self, group_ids: Iterable[int]) -> np.ndarray:
        ids = list(group_ids)
        if not ids:
            return np.zeros(0, dtype=np.intp)
        return np.sort(np.concatenate([self.groups[j] for j in ids]))


@dataclass(frozen=True)
class SparsityPattern:
    """Active groups of a strongly group-sparse coefficient vector."""

    active_groups: tuple[int, ...]
    partition: GroupPartition

    @property
    def g(self) -> int:
        return len(self.active_groups)

    @property
    def s(self) -> int:
        return int(sum(self.partition.groups[j].size for j in self.active_groups))

    def support(self) -> np.ndarray:
        return self.partition.union(self.active_groups)

    def contains(self, beta: np.ndarray, tol: float = 0.0) -> bool:
        outside = np.ones(self.partition.p, dtype=bool)
        outside[self.support()] = False
        return bool(np.all(np.abs(beta[outside]) <= tol))


@dataclass(frozen=True, eq=False)
class RegressionProblem:
    X: np.ndarray
    y: np.ndarray
    partition: GroupPartition
    weights: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        for a in (X, y, w):
            a.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "weights", w)
        problems = validate(self)
        hard = [d for d in problems if not d.startswith("degenerate column")]
        if hard:
            raise InvalidArgumentError("; ".join(hard))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_response(self, y: np.ndarray) -> "RegressionProblem":
        return RegressionProblem(self.X, y, self.partition, self.weights)

    def with_weights(self, weights: np.ndarray) -> "RegressionProblem":
        return RegressionProblem(self.X, self.y, self.partition, weights)


def validate(problem) -> list[str]:
    """Return a list of diagnostics; empty means the problem is well formed.

    Works on anything with ``X``, ``y``, ``partition`` and ``weights``
    attributes so it can be run before a :class:`RegressionProblem` exists.
    """
    out = []
    X = np.asarray(problem.X, dtype=float)
    y = np.asarray(problem.y, dtype=float).reshape(-1)
    w = np.asarray(problem.weights, dtype=float).reshape(-1)
    part = problem.partition
    if X.ndim != 2:
        return ["design must be a 2-d matrix"]
    n, p = X.shape
    if n < 1:
        out.append("design has no rows")
    if y.size != n:
        out.append(f"response length mismatch: {y.size} != {n}")
    if p != part.p:
        out.append(f"design column count {p} != partition size {part.p}")
    if w.size != part.M:
        out.append(f"weights length {w.size} != group count {part.M}")
    if not np.all(np.isfinite(X)):
        out.append("non-finite entries in design")
    if not np.all(np.isfinite(y)):
        out.append("non-finite entries in response")
    if w.size and (not np.all(np.isfinite(w)) or np.any(w <= 0)):
        out.append("non-positive weights")
    if X.size and np.all(np.isfinite(X)):
        zero = np.flatnonzero(~np.any(X != 0, axis=0))
        if zero.size:
            out.append(f"degenerate column(s): {zero.tolist()}")
    return out


def default_weights(partition: GroupPartition, n: int, M: int | None = None,
                    scale: float = 1.0, delta: float = 1.0) -> np.ndarray:
    """Groupwise penalty levels ``scale * (sqrt(d_j/n) + sqrt(2 log(M/delta)/n))``.

    ``delta = 1`` gives the plain ``sqrt(2 log M / n)`` term, which vanishes
    for a single group.
    """
    if M is None:
        M = partition.M
    if scale <= 0 or not math.isfinite(scale):
        raise InvalidArgumentError("scale must be positive")
    if n < 1 or M < 1:
        raise InvalidArgumentError("n and M must be at least 1")
    if not 0 < delta <= 1:
        raise InvalidArgumentError("delta must lie in (0, 1]")
    sizes = partition.sizes.astype(float)
    tail = math.sqrt(2.0 * math.log(M / delta) / n)
    return scale * (np.sqrt(sizes / n) + tail)
