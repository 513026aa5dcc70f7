"""Asymptotic covariance matrices for vectors of sample covariance estimates.

Four routes are provided, one per estimation regime:

* a Gaussian closed form for fixed stations, built from the model's
  cross-covariances and summed over integer time offsets,
* a plug-in truncated-sum estimator for lattice data, built from empirical
  covariances of the lagged-product fields,
* the theoretical limits for the kernel estimators (space-time and full 3-d),
  which are sparse across the lag set: entries vanish unless the spatial
  lags match up to sign,
* a model-free block-subsampling estimator along the time axis.

Every matrix records the scaling its entries carry (which sample-size factor
multiplies the finite-sample covariance of the estimate vector).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import (
    LagSet,
    LatticeDataset,
    SpaceTimeLag,
    StationDataset,
    station_lag_pairs,
)
from .estimators import KernelSpec, moment_cov_lattice, moment_cov_station
from .simulate import GaussianFieldSpec, VarModelSpec, stationary_cov

TERM_TOL = 1e-12     # magnitude below which a tail term counts as negligible
TERM_RUN = 5         # consecutive negligible terms required to stop
R_CAP = 10_000       # hard cap on the truncation range


@dataclass(frozen=True)
class SigmaMatrix:
    """An m x m asymptotic covariance matrix over an ordered lag set."""

    values: np.ndarray
    lag_set: LagSet | None
    scaling: str
    method: str
    labels: tuple = field(default=None)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("values must be a square matrix")
        scale = max(1.0, float(np.max(np.abs(v))) if v.size else 1.0)
        if np.max(np.abs(v - v.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("matrix is not symmetric to tolerance")
        if self.lag_set is not None and len(self.lag_set) != v.shape[0]:
            raise ValueError("matrix size does not match lag set")
        labels = self.labels
        if labels is None:
            if self.lag_set is not None:
                labels = tuple(self.lag_set.labels())
            else:
                labels = tuple(f"c{i}" for i in range(v.shape[0]))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(labels))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.values)[0])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("lag," + ",".join(self.labels) + "\n")
            for lab, row in zip(self.labels, self.values):
                f.write(lab + "," + ",".join(f"{x!r}" for x in row) + "\n")


class CrossCovModel:
    """Cross-covariance evaluator ``c(i, j, u) = cov{Z(s_j, t), Z(s_i, t+u)}``.

    Negative time lags follow from ``c(i, j, -u) == c(j, i, u)``.  The
    ``decay`` field bounds the geometric rate at which the covariances die
    out and is only used to sanity-check truncation.
    """

    def __init__(self, matrix_fn, size: int, decay: float):
        if not (0.0 < decay < 1.0):
            raise ValueError("decay bound must lie in (0, 1)")
        self._matrix_fn = matrix_fn
        self.size = size
        self.decay = decay
        self._cache: dict[int, np.ndarray] = {}

    @classmethod
    def from_var(cls, model: VarModelSpec) -> "CrossCovModel":
        gamma = stationary_cov(model)
        r = model.R

        def matrix_fn(u: int) -> np.ndarray:
            return np.linalg.matrix_power(r, u) @ gamma

        rho = VarModelSpec.spectral_radius(r)
        return cls(matrix_fn, size=model.n_sites, decay=max(rho, 1e-6))

    @classmethod
    def white_noise(cls, size: int, variance: float = 1.0) -> "CrossCovModel":
        eye = variance * np.eye(size)
        zero = np.zeros((size, size))
        return cls(lambda u: eye if u == 0 else zero, size=size, decay=1e-6)

    def matrix(self, u: int) -> np.ndarray:
        """Matrix with entry (i, j) equal to ``c(i, j, u)``, for ``u >= 0``."""
        if u < 0:
            raise ValueError("matrix is defined for u >= 0")
        if u not in self._cache:
            self._cache[u] = np.asarray(self._matrix_fn(u), dtype=float)
        return self._cache[u]

    def cij(self, i: int, j: int, u: int) -> float:
        if u >= 0:
            return float(self.matrix(u)[i, j])
        return float(self.matrix(-u)[j, i])

    def gamma(self, r: int) -> np.ndarray:
        """Product-moment matrix ``g[x, y] = E[Z_x(t) Z_y(t + r)]``."""
        return self.matrix(r).T if r >= 0 else self.matrix(-r)


def _pair_term_matrix(model: CrossCovModel, pi, pj, u_i: int, u_j: int,
                      r: int) -> np.ndarray:
    """Offset-r contribution to the covariance between two pair estimators.

    ``pi``/``pj`` are (from, to) index arrays; the result has one entry per
    ordered combination of a pair from lag i with a pair from lag j.
    """
    a, b = pi
    c, d = pj
    g0 = model.gamma(r)
    g1 = model.gamma(r + u_j - u_i)
    g2 = model.gamma(r + u_j)
    g3 = model.gamma(r - u_i)
    return (g0[a[:, None], c[None, :]] * g1[b[:, None], d[None, :]]
            + g2[a[:, None], d[None, :]] * g3[b[:, None], c[None, :]])


def _truncated_sum(term_fn, r_max: int | None):
    """Sum term_fn(r) over integer offsets with automatic truncation.

    With ``r_max=None`` the sum extends until the term magnitude stays below
    ``TERM_TOL`` for ``TERM_RUN`` consecutive offsets on each side, capped at
    ``R_CAP``.  Returns (total, r_used).
    """
    total = np.asarray(term_fn(0), dtype=float).copy()
    if r_max is not None:
        for r in range(1, r_max + 1):
            total += term_fn(r) + term_fn(-r)
        return total, r_max
    runs = {+1: 0, -1: 0}
    r = 0
    while (runs[+1] < TERM_RUN or runs[-1] < TERM_RUN) and r < R_CAP:
        r += 1
        for sign in (+1, -1):
            if runs[sign] >= TERM_RUN:
                continue
            t = np.asarray(term_fn(sign * r), dtype=float)
            total += t
            runs[sign] = runs[sign] + 1 if np.max(np.abs(t)) < TERM_TOL else 0
    return total, r


def pair_product_cov(model: CrossCovModel, from_i: int, to_i: int, u_i: int,
                     from_j: int, to_j: int, u_j: int,
                     r_max: int | None = None) -> float:
    """Time-summed covariance between two lagged-product estimators.

    Estimator i averages ``Z(from_i, t) * Z(to_i, t + u_i)`` over t (and
    likewise for j).  For a zero-mean Gaussian series the covariance of the
    two averages, scaled by the series length, converges to a sum over
    integer offsets of products of cross-covariances; this returns that sum,
    truncated at ``r_max`` (automatic tail detection when ``None``).
    """
    pi = (np.array([from_i]), np.array([to_i]))
    pj = (np.array([from_j]), np.array([to_j]))
    total, _ = _truncated_sum(
        lambda r: _pair_term_matrix(model, pi, pj, u_i, u_j, r), r_max)
    return float(total[0, 0])


def _realized(sites, lag, tol):
    pairs = station_lag_pairs(sites, lag, tol)
    if not pairs:
        raise ValueError(f"no site pairs realize lag {lag}")
    a = np.fromiter((p[0] for p in pairs), dtype=np.int64)
    b = np.fromiter((p[1] for p in pairs), dtype=np.int64)
    return a, b


def sigma_station_gaussian(model: CrossCovModel, sites, lag_set: LagSet,
                           tol: float = 1e-9, r_max: int | None = None) -> SigmaMatrix:
    """Closed-form asymptotic covariance for fixed-station moment estimates.

    Entry (i, j) averages the pairwise product-estimator covariances over
    all ordered site pairs realizing lag i crossed with those realizing lag
    j; valid for zero-mean Gaussian fields, where fourth moments reduce to
    covariance products.  Scaled by the series length.
    """
    sites = np.asarray(sites, dtype=float)
    lags = list(lag_set)
    realized = [_realized(sites, lag, tol) for lag in lags]
    m = len(lags)
    out = np.empty((m, m))
    for i in range(m):
        for j in range(m):
            pi, pj = realized[i], realized[j]
            total, _ = _truncated_sum(
                lambda r: _pair_term_matrix(model, pi, pj, lags[i].u, lags[j].u, r),
                r_max)
            out[i, j] = total.sum() / (len(pi[0]) * len(pj[0]))
    asym = np.max(np.abs(out - out.T), initial=0.0)
    if asym > 1e-10 * max(1.0, np.max(np.abs(out))):
        raise AssertionError(f"aggregation produced asymmetry {asym:g}")
    out = (out + out.T) / 2.0
    return SigmaMatrix(values=out, lag_set=lag_set, scaling="|T_n|",
                       method="station-gaussian")


def sigma_lattice_plugin(data: LatticeDataset, lag_set: LagSet,
                         window: tuple[int, int] = (5, 5),
                         min_pairs: int = 30) -> SigmaMatrix:
    """Plug-in estimate of the lattice-regime asymptotic covariance.

    For each pair of lags, sums empirical covariances of the lagged-product
    fields ``Y_i(x) = Z(x) Z(x + k_i)`` over offsets inside the window,
    weighting each offset by its exact pair-count factor
    ``|D_n| * N(offset) / (|D_i| |D_j|)`` so the estimate targets the
    domain-size-scaled covariance of the estimate vector.
    """
    w_s, w_t = window
    dense, origin = _to_dense(data)
    n1, n2, nt = dense.shape
    if w_s >= max(n1, n2) or w_t >= nt:
        raise ValueError(f"window {window} exceeds lattice extent {dense.shape}")
    lags = list(lag_set)
    fields = []
    for lag in lags:
        if not isinstance(lag, SpaceTimeLag):
            raise ValueError("lattice plug-in needs vector lags")
        y = _product_field(dense, lag)
        cnt = int(np.sum(~np.isnan(y)))
        if cnt == 0:
            raise ValueError(f"no lattice pairs for lag {lag}")
        fields.append((y, np.nanmean(y), cnt))
    total_n = int(np.sum(~np.isnan(dense)))
    m = len(lags)
    out = np.zeros((m, m))
    for i in range(m):
        yi, mi, ni = fields[i]
        for j in range(i, m):
            yj, mj, nj = fields[j]
            acc = 0.0
            for ds1 in range(-w_s, w_s + 1):
                for ds2 in range(-w_s, w_s + 1):
                    for dt in range(-w_t, w_t + 1):
                        prod = _shift_product(yi, yj, (ds1, ds2, dt))
                        n_pos = int(np.sum(~np.isnan(prod)))
                        if n_pos == 0:
                            continue
                        if n_pos < min_pairs:
                            raise ValueError(
                                f"offset {(ds1, ds2, dt)} estimable from only "
                                f"{n_pos} pairs (< {min_pairs})")
                        cov_d = np.nanmean(prod) - mi * mj
                        acc += cov_d * (total_n * n_pos) / (ni * nj)
            out[i, j] = out[j, i] = acc
    return SigmaMatrix(values=out, lag_set=lag_set, scaling="|D_n|",
                       method="plugin-truncated")


def _to_dense(data: LatticeDataset):
    pts = data.points
    lo = pts.min(axis=0)
    shape = tuple((pts.max(axis=0) - lo + 1).tolist())
    dense = np.full(shape, np.nan)
    idx = pts - lo
    dense[idx[:, 0], idx[:, 1], idx[:, 2]] = data.values
    return dense, lo


def _product_field(dense: np.ndarray, lag: SpaceTimeLag) -> np.ndarray:
    shift = (int(round(lag.h[0])), int(round(lag.h[1])), lag.u)
    return dense * _shifted(dense, shift)


def _shifted(a: np.ndarray, shift) -> np.ndarray:
    """Array with entry x holding a[x + shift], NaN where out of range."""
    out = np.full(a.shape, np.nan)
    src = []
    dst = []
    for size, s in zip(a.shape, shift):
        lo_dst, hi_dst = max(0, -s), min(size, size - s)
        if lo_dst >= hi_dst:
            return out
        dst.append(slice(lo_dst, hi_dst))
        src.append(slice(lo_dst + s, hi_dst + s))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _shift_product(yi: np.ndarray, yj: np.ndarray, shift) -> np.ndarray:
    return yi * _shifted(yj, shift)


def sigma_kernel_theoretical(field: GaussianFieldSpec, lag_set,
                             kernel: KernelSpec, nu: float, mode: str,
                             t_max: int | None = None) -> SigmaMatrix:
    """Limiting covariance of kernel covariance estimates on a Gaussian field.

    ``lag_set`` holds space-time lags in space-time mode and plain 3-vectors
    in full-3-d mode.

    Entries vanish unless the spatial lags agree up to sign.  Space-time
    mode sums Gaussian fourth-moment products over integer time offsets
    (dropping the offset-independent product of the two estimated
    covariances, which cancels against the estimator means); full-3-d mode
    needs no sum and uses ``E{Z^2(0) Z^2(k)} = C(0)^2 + 2 C(k)^2`` directly.
    """
    if not isinstance(field, GaussianFieldSpec):
        raise ValueError("closed form requires a Gaussian field spec")
    lags = list(lag_set)
    m = len(lags)
    out = np.zeros((m, m))
    const = kernel.square_integral / nu ** 2
    if mode == "space-time":
        if kernel.dim != 2:
            raise ValueError("space-time mode uses a 2-d kernel")
        for i in range(m):
            for j in range(m):
                hi, ui = np.array(lags[i].h), lags[i].u
                hj, uj = np.array(lags[j].h), lags[j].u
                val = 0.0
                if np.allclose(hi, hj, atol=1e-9):
                    s, _ = _truncated_sum(
                        lambda t: _st_term_equal(field, hi, ui, uj, t), t_max)
                    val += float(s)
                if np.allclose(hi, -hj, atol=1e-9):
                    s, _ = _truncated_sum(
                        lambda t: _st_term_mirror(field, hi, ui, uj, t), t_max)
                    val += float(s)
                out[i, j] = const * val
    elif mode == "full-3d":
        if kernel.dim != 3:
            raise ValueError("full-3d mode uses a 3-d kernel")
        ks = [np.asarray(lag, dtype=float).reshape(3) for lag in lags]
        for i in range(m):
            moment = field.sigma2 ** 2 + 2.0 * field.cov_lag3(ks[i]) ** 2
            for j in range(m):
                val = 0.0
                if np.allclose(ks[i], ks[j], atol=1e-9):
                    val += moment
                if np.allclose(ks[i], -ks[j], atol=1e-9):
                    val += moment
                out[i, j] = const * val
    else:
        raise ValueError(f"unknown mode {mode!r}")
    out = (out + out.T) / 2.0
    return SigmaMatrix(values=out, lag_set=None, scaling=
                       "|T_n||S_n|lam^2" if mode == "space-time" else "lam^3|D_n|",
                       method="kernel-theoretical",
                       labels=tuple(_kernel_label(lag) for lag in lags))


def _kernel_label(lag) -> str:
    if isinstance(lag, SpaceTimeLag):
        return lag.label()
    k = np.asarray(lag, dtype=float).reshape(-1)
    return "k=(" + ",".join(f"{x:g}" for x in k) + ")"


def _st_term_equal(field, h, ui, uj, t):
    zero = np.zeros(2)
    return (field.cov(zero, t) * field.cov(zero, t + uj - ui)
            + field.cov(h, t + uj) * field.cov(-h, t - ui))


def _st_term_mirror(field, h, ui, uj, t):
    zero = np.zeros(2)
    return (field.cov(h, t) * field.cov(-h, t + uj - ui)
            + field.cov(zero, t + uj) * field.cov(zero, t - ui))


def fourth_cumulant(fourth_moment, cov, x1, x2, x3) -> float:
    """Deviation of a fourth moment from its Gaussian pairing expansion.

    ``fourth_moment(x1, x2, x3)`` is ``E{Z(0) Z(x1) Z(x2) Z(x3)}`` and
    ``cov`` evaluates the covariance at a lag vector.  Identically zero when
    both oracles describe the same Gaussian field.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    x3 = np.asarray(x3, dtype=float)
    # the expansion accumulates in the same order as gaussian_fourth_moment,
    # so a matching Gaussian oracle cancels it exactly
    expansion = (float(cov(x1)) * float(cov(x3 - x2))
                 + float(cov(x2)) * float(cov(x3 - x1))
                 + float(cov(x3)) * float(cov(x2 - x1)))
    return float(fourth_moment(x1, x2, x3)) - expansion


def gaussian_fourth_moment(cov):
    """Fourth-moment oracle for a zero-mean Gaussian field with covariance ``cov``."""

    def m4(x1, x2, x3):
        return (cov(x1) * cov(np.asarray(x3) - np.asarray(x2))
                + cov(x2) * cov(np.asarray(x3) - np.asarray(x1))
                + cov(x3) * cov(np.asarray(x2) - np.asarray(x1)))

    return m4


def sigma_block_subsample(data, lag_set: LagSet, block_len: int,
                          tol: float = 1e-9) -> SigmaMatrix:
    """Model-free covariance estimate from non-overlapping temporal blocks.

    Computes the estimate vector on each complete block and returns
    ``block_len`` times the across-block sample covariance.  Needs blocks
    long relative to the largest temporal lag and at least 8 of them.
    """
    max_u = max(lag.u for lag in lag_set)
    if block_len < max_u + 10:
        raise ValueError(f"block_len must be >= max temporal lag + 10 = {max_u + 10}")
    rows = []
    if isinstance(data, StationDataset):
        n_blocks = data.n // block_len
        if n_blocks < 8:
            raise ValueError(f"only {n_blocks} complete blocks; need >= 8")
        for b in range(n_blocks):
            sub = StationDataset(data.sites, data.values[:, b * block_len:(b + 1) * block_len])
            rows.append([moment_cov_station(sub, lag, tol).value for lag in lag_set])
    elif isinstance(data, LatticeDataset):
        t = data.points[:, 2]
        t0 = int(t.min())
        n_blocks = (int(t.max()) - t0 + 1) // block_len
        if n_blocks < 8:
            raise ValueError(f"only {n_blocks} complete blocks; need >= 8")
        for b in range(n_blocks):
            sel = (t >= t0 + b * block_len) & (t < t0 + (b + 1) * block_len)
            sub = LatticeDataset(data.points[sel], data.values[sel])
            rows.append([moment_cov_lattice(sub, lag).value for lag in lag_set])
    else:
        raise TypeError("block subsampling needs station or lattice data")
    rows = np.asarray(rows)
    centered = rows - rows.mean(axis=0)
    cov = centered.T @ centered / (len(rows) - 1)
    return SigmaMatrix(values=block_len * cov, lag_set=lag_set,
                       scaling="|T_n|", method="block-subsample")
