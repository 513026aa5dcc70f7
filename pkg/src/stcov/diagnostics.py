"""Multivariate normality diagnostics and replicate-level covariance summaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .asymcov import SigmaMatrix
from .datasets import LagSet

# relative eigenvalue threshold below which the sample covariance counts as singular
_SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class ReplicateMatrix:
    """Monte Carlo sample of an estimate vector: one row per replicate.

    ``scale_n`` records the sample-size factor (series length or domain
    size) by which covariances are scaled in summaries.
    """

    rows: np.ndarray
    scale_n: int
    lag_set: LagSet | None = None

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-d array (replicates x coordinates)")
        if not np.all(np.isfinite(rows)):
            raise ValueError("non-finite entry in replicate matrix")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "scale_n", int(self.scale_n))

    @property
    def n_reps(self) -> int:
        return self.rows.shape[0]

    @property
    def m(self) -> int:
        return self.rows.shape[1]


def _standardize(sample: ReplicateMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Centered rows and the biased (divisor n) sample covariance inverse factor."""
    x = sample.rows
    n, p = x.shape
    if n <= p:
        raise ValueError(f"{n} replicates cannot support a {p}-variate covariance")
    d = x - x.mean(axis=0)
    s = d.T @ d / n
    w = np.linalg.eigvalsh(s)
    if w[0] <= _SINGULAR_TOL * max(w[-1], 1e-300):
        raise ValueError("singular sample covariance")
    return d, np.linalg.solve(s, d.T).T  # rows of d @ inv(s)


def mardia_skewness(sample: ReplicateMatrix, block: int = 512) -> float:
    """Multivariate skewness: mean cubed Mahalanobis inner product over all pairs.

    Zero in the limit for a multivariate normal sample.  The pairwise matrix
    is accumulated in row blocks to keep memory at ``block * n`` floats.
    """
    d, w = _standardize(sample)
    n = len(d)
    total = 0.0
    for lo in range(0, n, block):
        g = d[lo:lo + block] @ w.T
        total += float((g ** 3).sum())
    return total / n ** 2


def mardia_kurtosis(sample: ReplicateMatrix) -> float:
    """Multivariate kurtosis: mean squared Mahalanobis norm.

    Tends to ``p (p + 2)`` for a p-variate normal sample.
    """
    d, w = _standardize(sample)
    q = (d * w).sum(axis=1)
    return float((q ** 2).mean())


def replicate_cov(sample: ReplicateMatrix) -> SigmaMatrix:
    """Scaled empirical covariance of the replicate rows (divisor n - 1)."""
    if sample.n_reps < 2:
        raise ValueError("need at least 2 replicates")
    x = sample.rows
    d = x - x.mean(axis=0)
    cov = d.T @ d / (sample.n_reps - 1)
    return SigmaMatrix(values=sample.scale_n * cov, lag_set=sample.lag_set,
                       scaling=f"n={sample.scale_n}", method="empirical")
