"""Root-cause ranking: random walk with restart over the learned graph,
plus the rank-stability score used to decide when to stop streaming."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError

logger = logging.getLogger(__name__)


def transition_matrix(adjacency: np.ndarray, beta: float = 1.0) -> np.ndarray:
    """Column-stochastic (times beta) walk matrix from effects toward causes.

    adjacency[j, i] holds the weight of cause i -> effect j, so walking
    against the edges means P[i, j] = beta * |A[j, i]| / sum_k |A[j, k]|.
    A node j with no incoming causes gets a uniform column.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if not np.all(np.isfinite(a)):
        raise ValueError("adjacency contains non-finite entries")
    mags = np.abs(a)
    row_sums = mags.sum(axis=1)
    n = a.shape[0]
    rows = np.where(
        row_sums[:, None] > 0.0,
        mags / np.where(row_sums[:, None] > 0.0, row_sums[:, None], 1.0),
        np.full((n, n), 1.0 / n),
    )
    return beta * rows.T


def rwr(
    p: np.ndarray,
    r0: np.ndarray,
    c: float = 0.15,
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> np.ndarray:
    """Power-iterate r <- (1-c) P r + c r0 until the L1 change is below tol."""
    p = np.asarray(p, dtype=np.float64)
    r = np.asarray(r0, dtype=np.float64).copy()
    if p.ndim != 2 or p.shape[0] != p.shape[1] or r.shape != (p.shape[0],):
        raise ValueError("rwr shapes are inconsistent")
    if not 0.0 < c < 1.0:
        raise ValueError("restart probability must lie in (0, 1)")
    restart = c * np.asarray(r0, dtype=np.float64)
    for _ in range(max_iter):
        nxt = (1.0 - c) * (p @ r) + restart
        residual = np.abs(nxt - r).sum()
        r = nxt
        if residual < tol:
            return r
    raise ConvergenceError(
        f"random walk did not converge in {max_iter} iterations "
        f"(last L1 residual {residual:.3e})"
    )


@dataclass(frozen=True)
class RankedCauses:
    """Scored root-cause candidates for one batch, KPI excluded."""

    batch_index: int
    entities: list[str]
    scores: list[float]

    def __post_init__(self):
        if len(self.entities) != len(self.scores):
            raise ValueError("entities and scores differ in length")

    def top(self, k: int) -> list[str]:
        return self.entities[:k]


def rank(
    scores: np.ndarray,
    nodes: Sequence[str],
    k: int,
    batch_index: int,
) -> RankedCauses:
    """Order non-KPI nodes by descending score; ties break by node index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(nodes),):
        raise ValueError("scores and nodes differ in length")
    n_candidates = len(nodes) - 1
    if k > n_candidates:
        logger.warning("k=%d exceeds %d candidates; clamping", k, n_candidates)
        k = n_candidates
    if k < 1:
        raise ValueError("k must be at least 1")
    order = sorted(range(n_candidates), key=lambda i: (-scores[i], i))
    chosen = order[:k]
    return RankedCauses(
        batch_index=batch_index,
        entities=[nodes[i] for i in chosen],
        scores=[float(scores[i]) for i in chosen],
    )


def rbo(prev: Sequence[str], cur: Sequence[str], p: float = 0.9) -> float:
    """Extrapolated rank-biased overlap of two rankings at their shared depth.

    gamma = (1-p) * sum_{d<=D} p^(d-1) X_d / d + p^D * X_D / D with
    D = min(len(prev), len(cur)) and X_d the size of the prefix overlap.
    """
    if len(set(prev)) != len(prev) or len(set(cur)) != len(cur):
        raise ValueError("rankings must not contain duplicates")
    if not 0.0 < p < 1.0:
        raise ValueError("persistence p must lie in (0, 1)")
    if not prev and not cur:
        return 1.0
    if not prev or not cur:
        return 0.0
    depth = min(len(prev), len(cur))
    if list(prev[:depth]) == list(cur[:depth]):
        return 1.0
    seen_prev: set[str] = set()
    seen_cur: set[str] = set()
    acc = 0.0
    overlap = 0
    for d in range(1, depth + 1):
        seen_prev.add(prev[d - 1])
        seen_cur.add(cur[d - 1])
        overlap = len(seen_prev & seen_cur)
        acc += p ** (d - 1) * overlap / d
    return (1.0 - p) * acc + p ** depth * overlap / depth


class StopTracker:
    """Stops once the ranking stays stable for `patience` consecutive batches."""

    def __init__(self, threshold: float = 0.9, patience: int = 3, p: float = 0.9):
        if patience < 1:
            raise ValueError("patience must be at least 1")
        self.threshold = threshold
        self.patience = patience
        self.p = p
        self._prev: list[str] | None = None
        self._recent: list[float] = []

    def update(self, ranking: Sequence[str]) -> float | None:
        """Record one batch's ranking; returns its stability score, or None
        for the first batch (nothing to compare against)."""
        current = list(ranking)
        if self._prev is None:
            self._prev = current
            return None
        gamma = rbo(self._prev, current, self.p)
        self._prev = current
        self._recent.append(gamma)
        if len(self._recent) > self.patience:
            self._recent.pop(0)
        return gamma

    def should_stop(self) -> bool:
        return (
            len(self._recent) == self.patience
            and all(g > self.threshold for g in self._recent)
        )
