"""Self-referential importance scores by power iteration.

Scores are a distribution over states and iterate as ``x <- x @ G`` (the
left eigenvector of the row-stochastic matrix ``G``), so "scores sum to one"
holds at every step. ``G`` is the damped matrix

    G = d * H' + (1 - d) * 1 teleport^T

where ``H'`` is ``H`` with dangling rows replaced per the dangling policy.
``G`` is applied implicitly; it is never materialized.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import ProbabilityVector, StochasticMatrix, l1_distance, row_normalize
from .errors import DanglingStateError, DimensionMismatchError, InvalidParameterError

DANGLING_POLICIES = ("uniform-teleport", "self-loop")


@dataclass(frozen=True)
class DampingConfig:
    d: float = 0.85
    dangling_policy: str = "uniform-teleport"
    teleport: ProbabilityVector = None  # None means uniform

    def __post_init__(self):
        if not 0 < self.d <= 1:
            raise InvalidParameterError(f"damping d must lie in (0, 1], got {self.d}")
        if self.dangling_policy not in DANGLING_POLICIES:
            raise InvalidParameterError(f"unknown dangling policy {self.dangling_policy!r}")
        if self.teleport is not None and not isinstance(self.teleport, ProbabilityVector):
            object.__setattr__(self, "teleport", ProbabilityVector(self.teleport))

    def to_dict(self):
        return {
            "d": self.d,
            "dangling_policy": self.dangling_policy,
            "teleport": None if self.teleport is None else self.teleport.values.tolist(),
        }


class GoogleMatrix:
    """Implicit damped stochastic matrix: sparse ``H`` plus a rank-one term."""

    def __init__(self, H, cfg=None):
        self.H = H
        self.cfg = cfg or DampingConfig()
        self.n = H.n
        if self.cfg.teleport is None:
            self.teleport = np.full(self.n, 1.0 / self.n) if self.n else np.zeros(0)
        else:
            if len(self.cfg.teleport) != self.n:
                raise DimensionMismatchError("teleport length must equal matrix size")
            self.teleport = self.cfg.teleport.values
        self.d = float(self.cfg.d)
        self._dangling = np.flatnonzero(H.dangling)

    def left_multiply(self, x):
        """``x @ G``."""
        x = np.asarray(x, dtype=np.float64)
        y = self.H.left_multiply(x)
        if self._dangling.size:
            if self.cfg.dangling_policy == "self-loop":
                y[self._dangling] += x[self._dangling]
            else:
                y += x[self._dangling].sum() * self.teleport
        return self.d * y + (1.0 - self.d) * x.sum() * self.teleport

    def row(self, i):
        row = self.H.row_dense(i)
        if self.H.dangling[i]:
            if self.cfg.dangling_policy == "self-loop":
                row[i] = 1.0
            else:
                row = self.teleport.copy()
        return self.d * row + (1.0 - self.d) * self.teleport

    def to_dense(self):
        """Explicit matrix, for tests and small inspections only."""
        return np.array([self.row(i) for i in range(self.n)])


def google_matrix(H, cfg=None):
    if H.sparse.shape[0] != H.sparse.shape[1]:
        raise DimensionMismatchError("H must be square")
    return GoogleMatrix(H, cfg)


@dataclass
class RankResult:
    scores: ProbabilityVector
    iterations: int
    final_residual: float
    converged: bool

    def to_dict(self):
        return {
            "format": "prespec/rank_result/1",
            "scores": self.scores.values.tolist(),
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "converged": self.converged,
        }


def _as_operator(G):
    if isinstance(G, GoogleMatrix):
        return G
    if isinstance(G, StochasticMatrix):
        if G.has_dangling:
            raise DanglingStateError(
                int(np.flatnonzero(G.dangling)[0]),
                "matrix has dangling rows; wrap it with google_matrix and a policy",
            )
        return GoogleMatrix(G, DampingConfig(d=1.0))
    raise TypeError(f"cannot iterate over {type(G).__name__}")


def power_iteration(G, tol=1e-10, max_iter=10_000, init=None):
    """Iterate ``x <- x @ G`` until the L1 step is below ``tol``.

    Running out of iterations is reported through ``converged=False``.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    if max_iter < 1:
        raise InvalidParameterError("max_iter must be at least 1")
    op = _as_operator(G)
    if init is None:
        x = np.full(op.n, 1.0 / op.n)
    else:
        x = np.array(init if not isinstance(init, ProbabilityVector) else init.values, float)
        if x.shape != (op.n,):
            raise DimensionMismatchError("init length must equal matrix size")
        ProbabilityVector(x)
    residual = float("inf")
    it = 0
    while it < max_iter:
        nxt = op.left_multiply(x)
        nxt /= nxt.sum()
        residual = l1_distance(nxt, x)
        x = nxt
        it += 1
        if residual < tol:
            break
    return RankResult(ProbabilityVector(x), it, residual, residual < tol)


def stationary_distribution(chain, tol=1e-10, max_iter=10_000, damping=None, init=None):
    """Fixed point of a chain's transition matrix.

    The walk starts from a point mass on state 0 (the first observed state)
    unless ``init`` is given, so a periodic chain keeps oscillating and comes
    back with ``converged=False``. Dangling rows need a ``damping`` config.
    """
    H = chain.matrix if hasattr(chain, "matrix") else chain
    if damping is None:
        if H.has_dangling:
            raise DanglingStateError(
                int(np.flatnonzero(H.dangling)[0]),
                "chain has dangling states; pass a DampingConfig to rank it",
            )
        damping = DampingConfig(d=1.0)
    if init is None:
        init = np.zeros(H.n)
        init[0] = 1.0
    return power_iteration(google_matrix(H, damping), tol, max_iter, init)


def rank_counts(counts, cfg=None, tol=1e-10, max_iter=10_000, init=None):
    """Convenience: row-normalize edge counts and rank them."""
    return power_iteration(google_matrix(row_normalize(counts), cfg), tol, max_iter, init)


class RankEntry(NamedTuple):
    rank: int
    index: int
    label: str
    score: float


def rank_report(result, labels, top_k=None):
    """Entries by descending score; equal scores keep ascending id order."""
    scores = result.scores.values if isinstance(result, RankResult) else np.asarray(result)
    labels = list(labels)
    if len(labels) != len(scores):
        raise DimensionMismatchError(
            f"{len(labels)} labels for {len(scores)} scores"
        )
    order = np.lexsort((np.arange(len(scores)), -scores))
    if top_k is not None:
        order = order[:top_k]
    return [
        RankEntry(r, int(i), labels[i], float(scores[i]))
        for r, i in enumerate(order, start=1)
    ]
