"""Sample covariance estimators for the three sampling regimes.

Moment estimators average lagged products over the observed pair sets;
kernel estimators smooth over irregular spatial locations with a bandwidth
``lambda`` and normalize by the point-process intensity.  All estimators
assume a known zero mean; ``mean_correct`` wraps any of them with the
plug-in mean correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .datasets import (
    FULL_3D,
    SPACE_TIME,
    LatticeDataset,
    PointDataset,
    RegionSpec,
    SpaceTimeLag,
    StationDataset,
    lattice_pair_set,
    station_lag_pairs,
)

GAUSSIAN = "gaussian"
EPANECHNIKOV = "epanechnikov-product"

# analytic integral of the squared kernel density, by (kind, dimension)
_SQUARE_INTEGRALS = {
    (GAUSSIAN, 2): 1.0 / (4.0 * math.pi),
    (GAUSSIAN, 3): 1.0 / (8.0 * math.pi ** 1.5),
    (EPANECHNIKOV, 2): (3.0 / 5.0) ** 2,
    (EPANECHNIKOV, 3): (3.0 / 5.0) ** 3,
}


@dataclass(frozen=True)
class KernelSpec:
    """A smoothing kernel: bounded symmetric density with bandwidth ``lam``.

    ``gaussian`` is the standard normal product density; the Epanechnikov
    product has compact support ``[-1, 1]`` per coordinate.
    """

    kind: str
    dim: int
    lam: float

    def __post_init__(self):
        if (self.kind, self.dim) not in _SQUARE_INTEGRALS:
            raise ValueError(f"unsupported kernel {self.kind!r} in dimension {self.dim}")
        if not (self.lam > 0):
            raise ValueError("bandwidth must be > 0")

    @property
    def square_integral(self) -> float:
        return _SQUARE_INTEGRALS[(self.kind, self.dim)]

    def density(self, x: np.ndarray) -> np.ndarray:
        """The base density w evaluated at rows of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == GAUSSIAN:
            return np.exp(-0.5 * (x ** 2).sum(axis=1)) / (2.0 * math.pi) ** (self.dim / 2.0)
        inside = np.clip(1.0 - x ** 2, 0.0, None)
        return (0.75 ** self.dim) * inside.prod(axis=1)

    def weight(self, x: np.ndarray) -> np.ndarray:
        """Scaled weight ``w(x / lam) / lam^dim``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.density(x / self.lam) / self.lam ** self.dim

    @property
    def cutoff_radius(self) -> float:
        """Radius beyond which the weight is zero to double precision."""
        if self.kind == GAUSSIAN:
            return 8.5 * self.lam
        return self.lam * math.sqrt(self.dim)


@dataclass(frozen=True)
class CovEstimate:
    """One covariance estimate: lag, value, pair support and regime tag."""

    lag: object
    value: float
    pair_count: float
    regime: str

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("estimate is not finite")
        if self.pair_count < 0:
            raise ValueError("pair_count must be >= 0")


def moment_cov_lattice(data: LatticeDataset, lag: SpaceTimeLag) -> CovEstimate:
    """Average of lagged products over all lattice points whose translate is observed."""
    pairs = lattice_pair_set(data, lag)
    if not pairs:
        raise ValueError(f"no lattice pairs for lag {lag}")
    i = np.fromiter((p[0] for p in pairs), dtype=np.int64)
    j = np.fromiter((p[1] for p in pairs), dtype=np.int64)
    # fsum makes the average independent of pair order, so reflecting the lag
    # (which reverses every pair) reproduces the value bit for bit
    value = math.fsum(data.values[i] * data.values[j]) / len(pairs)
    return CovEstimate(lag=lag, value=value, pair_count=len(pairs), regime="lattice")


def moment_cov_station(data: StationDataset, lag, tol: float = 1e-9,
                       unbiased_divisor: bool = False) -> CovEstimate:
    """Fixed-station estimator: site pairs at the spatial lag, times 1..n-u.

    The sum of products is divided by ``|pairs| * n`` even though only
    ``n - u`` time terms exist; pass ``unbiased_divisor=True`` to divide by
    ``|pairs| * (n - u)`` instead.
    """
    u = lag.u
    if u < 0:
        raise ValueError("temporal lag must be >= 0")
    if u >= data.n:
        raise ValueError(f"temporal lag {u} >= series length {data.n}")
    pairs = station_lag_pairs(data.sites, lag, tol)
    if not pairs:
        raise ValueError(f"no site pairs realize lag {lag}")
    a = np.fromiter((p[0] for p in pairs), dtype=np.int64)
    b = np.fromiter((p[1] for p in pairs), dtype=np.int64)
    n = data.n
    head = data.values[a, : n - u if u else n]
    tail = data.values[b, u:]
    total = float((head * tail).sum())
    divisor = len(pairs) * ((n - u) if unbiased_divisor else n)
    return CovEstimate(lag=lag, value=total / divisor,
                       pair_count=len(pairs) * (n - u), regime="station")


@dataclass(frozen=True)
class MeanCorrectedEstimate:
    """A mean-corrected estimate plus its exact decomposition pieces.

    The correction satisfies ``raw - value == mean * m1_plus_m2 - mean**2``
    exactly (up to rounding), where ``m1_plus_m2`` is the sum of the lag-set
    averages of the field at the pair heads and tails.
    """

    estimate: CovEstimate
    raw_value: float
    mean: float
    m1_plus_m2: float

    @property
    def value(self) -> float:
        return self.estimate.value

    def decomposition_residual(self) -> float:
        predicted = self.mean * self.m1_plus_m2 - self.mean ** 2
        return (self.raw_value - self.estimate.value) - predicted


def mean_correct(raw, data) -> MeanCorrectedEstimate:
    """Apply the plug-in mean correction to any covariance estimator.

    ``raw`` maps a dataset to a ``CovEstimate``; the corrected value is the
    raw estimator evaluated on the centered field.  Because every estimator
    here is a weighted average of products, evaluating ``raw`` on the field
    shifted by one recovers the linear moments needed for the decomposition
    without access to the estimator's internals.
    """
    zbar = float(np.mean(data.values))
    base = raw(data)
    centered = raw(data.with_values(data.values - zbar))
    shifted = raw(data.with_values(data.values + 1.0))
    m1_plus_m2 = shifted.value - base.value - 1.0
    return MeanCorrectedEstimate(estimate=centered, raw_value=base.value,
                                 mean=zbar, m1_plus_m2=m1_plus_m2)


def estimate_intensity(data: PointDataset) -> float:
    """Points per unit measure: the natural intensity estimate.

    For space-time data the count is averaged over time slices and divided
    by the spatial area, so a pattern observed repeatedly at every time step
    still reports the spatial intensity.
    """
    if data.region.measure <= 0:
        raise ValueError("region measure must be positive")
    if data.mode == SPACE_TIME:
        return len(data) / data.region.n_time / data.region.measure
    return len(data) / data.region.measure


def default_bandwidth(region: RegionSpec, mode: str, c: float = 1.0) -> float:
    """Bandwidth shrinking slowly enough that the effective sample grows.

    Space-time: ``c * area**(-1/6)`` (so ``lam^2 * area`` grows like
    ``area**(2/3)``); full-3-d: ``c * volume**(-1/9)``.
    """
    if c <= 0:
        raise ValueError("c must be > 0")
    if mode == SPACE_TIME:
        return c * region.measure ** (-1.0 / 6.0)
    if mode == FULL_3D:
        return c * region.measure ** (-1.0 / 9.0)
    raise ValueError(f"unknown mode {mode!r}")


def _pair_weights(coords_a: np.ndarray, coords_b: np.ndarray, offset: np.ndarray,
                  kernel: KernelSpec, use_cutoff: bool):
    """Ordered pairs (i into a, j into b) with weights w_n(offset - a_i + b_j).

    With ``use_cutoff`` the candidate pairs come from a KD-tree ball query at
    the kernel's zero-to-double-precision radius, which leaves the sum
    unchanged for the Gaussian kernel and exact for compact kernels.
    """
    if use_cutoff:
        tree = cKDTree(coords_b)
        centers = coords_a - offset[None, :]
        neighbor_lists = tree.query_ball_point(centers, kernel.cutoff_radius)
        ii, jj = [], []
        for i, js in enumerate(neighbor_lists):
            for j in sorted(js):
                ii.append(i)
                jj.append(j)
        i_idx = np.array(ii, dtype=np.int64)
        j_idx = np.array(jj, dtype=np.int64)
    else:
        i_idx, j_idx = map(np.ravel, np.meshgrid(
            np.arange(len(coords_a)), np.arange(len(coords_b)), indexing="ij"))
    if len(i_idx) == 0:
        return i_idx, j_idx, np.array([])
    # grouping as offset + (b - a) keeps the argument exactly antisymmetric
    # under (offset, pair) reflection, so reflected estimates agree bit for bit
    args = offset[None, :] + (coords_b[j_idx] - coords_a[i_idx])
    return i_idx, j_idx, kernel.weight(args)


def kernel_cov_st(data: PointDataset, lag: SpaceTimeLag, kernel: KernelSpec,
                  nu: float | None = None, include_same_site: bool = False,
                  use_cutoff: bool = True) -> CovEstimate:
    """Kernel covariance for irregular spatial locations at integer times.

    Sums ``w_n(h - s1 + s2) Z(s1, t) Z(s2, t+u)`` over ordered pairs of
    distinct spatial locations and times ``1..n-u``, normalized by
    ``nu^2 * n * area``.  Same-site pairs are excluded regardless of ``u``
    unless ``include_same_site`` is set (which admits them only for u != 0).
    """
    if data.mode != SPACE_TIME:
        raise ValueError("kernel_cov_st needs space-time point data")
    if kernel.dim != 2:
        raise ValueError("space-time smoothing uses a 2-d kernel")
    u = lag.u
    if u < 0:
        raise ValueError("temporal lag must be >= 0")
    n = data.region.n_time
    if u >= n:
        raise ValueError(f"temporal lag {u} >= time range {n}")
    slices = data.time_slices()
    if sum(len(c) for c, _ in slices.values()) < 2:
        raise ValueError("need at least 2 points")
    if nu is None:
        nu = estimate_intensity(data)
    h = lag.h_array

    keys = sorted(slices)
    shared = len(keys) == n and all(
        np.array_equal(slices[k][0], slices[keys[0]][0]) for k in keys[1:]
    )
    partials: list[float] = []
    mass = 0.0
    if shared:
        coords = slices[keys[0]][0]
        vals = np.stack([slices[t][1] for t in keys], axis=1)  # (S, n)
        i_idx, j_idx, w = _pair_weights(coords, coords, h, kernel, use_cutoff)
        keep = _distinct_site_mask(coords, i_idx, j_idx, u, include_same_site)
        i_idx, j_idx, w = i_idx[keep], j_idx[keep], w[keep]
        if len(w):
            head = vals[i_idx, : n - u if u else n]
            tail = vals[j_idx, u:]
            prods = (head * tail).sum(axis=1)
            partials = [float(x) for x in w * prods]
            mass = float(w.sum()) * (n - u)
    else:
        for t in range(1, n - u + 1):
            if t not in slices or (t + u) not in slices:
                continue
            ca, va = slices[t]
            cb, vb = slices[t + u]
            if len(ca) == 0 or len(cb) == 0:
                continue
            i_idx, j_idx, w = _pair_weights(ca, cb, h, kernel, use_cutoff)
            keep = _distinct_mask(ca, cb, i_idx, j_idx, u, include_same_site)
            i_idx, j_idx, w = i_idx[keep], j_idx[keep], w[keep]
            if len(w):
                partials.append(float((w * (va[i_idx] * vb[j_idx])).sum()))
                mass += float(w.sum())
    total = math.fsum(partials)
    value = total / (nu ** 2 * n * data.region.measure)
    return CovEstimate(lag=lag, value=value, pair_count=mass, regime="kernel-st")


def _distinct_site_mask(coords, i_idx, j_idx, u, include_same_site):
    same = i_idx == j_idx
    if include_same_site and u != 0:
        return np.ones(len(i_idx), dtype=bool)
    return ~same


def _distinct_mask(ca, cb, i_idx, j_idx, u, include_same_site):
    if len(i_idx) == 0:
        return np.ones(0, dtype=bool)
    same = np.all(ca[i_idx] == cb[j_idx], axis=1)
    if include_same_site and u != 0:
        return np.ones(len(i_idx), dtype=bool)
    return ~same


def kernel_cov_r3(data: PointDataset, k, kernel: KernelSpec,
                  nu: float | None = None, use_cutoff: bool = True) -> CovEstimate:
    """Kernel covariance for a point pattern fully irregular in 3-d.

    Sums ``w_n(k - x1 + x2) Z(x1) Z(x2)`` over ordered pairs of distinct
    points, normalized by ``nu^2 * volume``.
    """
    if data.mode != FULL_3D:
        raise ValueError("kernel_cov_r3 needs full-3d point data")
    if kernel.dim != 3:
        raise ValueError("full-3d smoothing uses a 3-d kernel")
    if len(data) < 2:
        raise ValueError("need at least 2 points")
    if nu is None:
        nu = estimate_intensity(data)
    k = np.asarray(k, dtype=float).reshape(3)
    pts = data.points
    i_idx, j_idx, w = _pair_weights(pts, pts, k, kernel, use_cutoff)
    keep = i_idx != j_idx
    i_idx, j_idx, w = i_idx[keep], j_idx[keep], w[keep]
    # marks multiply first: the per-pair term is then invariant under pair
    # reversal, making the lag-reflection identity exact
    total = math.fsum(w * (data.values[i_idx] * data.values[j_idx]))
    value = total / (nu ** 2 * data.region.measure)
    return CovEstimate(lag=tuple(k), value=value, pair_count=float(w.sum()),
                       regime="kernel-3d")
