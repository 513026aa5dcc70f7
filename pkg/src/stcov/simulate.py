"""Synthetic field generators: spatial VAR(1) series, Poisson point patterns
and Gaussian random fields at irregular locations.

All samplers are deterministic functions of their seed.  Gaussian draws use
``numpy.random.Generator`` (PCG64) with ``standard_normal``, so identical
(spec, seed) inputs reproduce bit-identical output across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .datasets import FULL_3D, SPACE_TIME, PointDataset, RegionSpec, StationDataset

# relative eigenvalue floor accepted before clamping a covariance factorization
PSD_TOL = 1e-10


def _vec(a: np.ndarray) -> np.ndarray:
    return a.flatten(order="F")


def _unvec(v: np.ndarray, shape) -> np.ndarray:
    return v.reshape(shape, order="F")


def psd_factor(k: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Lower-triangular-like factor L with L @ L.T == k for symmetric PSD k.

    Tries Cholesky first; falls back to an eigenvalue factorization with
    negative eigenvalues clamped to zero provided the most negative one is
    above ``-tol * max_eigenvalue`` (rounding noise from near-duplicate
    points), and raises otherwise.
    """
    k = np.asarray(k, dtype=float)
    try:
        return np.linalg.cholesky(k)
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh((k + k.T) / 2.0)
    if w[-1] <= 0:
        if np.all(np.abs(w) == 0.0):
            return np.zeros_like(k)
        raise np.linalg.LinAlgError("matrix is negative or indefinite")
    if w[0] < -tol * w[-1]:
        raise np.linalg.LinAlgError(
            f"matrix is not positive semidefinite (eigenvalue range [{w[0]:g}, {w[-1]:g}])"
        )
    return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass(frozen=True)
class VarModelSpec:
    """A first-order vector autoregression on a fixed site set.

    ``Z_t = R Z_{t-1} + eps_t`` with ``eps_t ~ N(0, sigma_eps)`` i.i.d.
    Stationarity requires the spectral radius of ``R`` to be below one.
    """

    sites: np.ndarray
    R: np.ndarray
    sigma_eps: np.ndarray
    phi: float

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float)
        R = np.asarray(self.R, dtype=float)
        se = np.asarray(self.sigma_eps, dtype=float)
        s = len(sites)
        if R.shape != (s, s) or se.shape != (s, s):
            raise ValueError("R and sigma_eps must be SxS for S sites")
        if not np.allclose(se, se.T, atol=1e-12):
            raise ValueError("sigma_eps must be symmetric")
        rho = self.spectral_radius(R)
        if rho >= 1.0:
            raise ValueError(f"spectral radius of R is {rho:.6f} >= 1 (non-stationary)")
        for name, a in (("sites", sites), ("R", R), ("sigma_eps", se)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "phi", float(self.phi))

    @staticmethod
    def spectral_radius(R: np.ndarray) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(R))))

    @property
    def n_sites(self) -> int:
        return len(self.sites)


def build_var_model(grid_side: int, phi: float, self_coef: float,
                    neighbor_coef: float) -> VarModelSpec:
    """Spatial VAR(1) on a unit-spaced square grid.

    The autoregression couples each site to itself with ``self_coef`` and to
    its unit-distance neighbors with ``neighbor_coef``; innovations have the
    isotropic exponential covariance ``exp(-d/phi)`` with unit diagonal.
    """
    if grid_side < 2:
        raise ValueError("grid_side must be >= 2")
    if phi <= 0:
        raise ValueError("phi must be > 0")
    sites = np.array([(x, y) for y in range(grid_side) for x in range(grid_side)],
                     dtype=float)
    d = cdist(sites, sites)
    R = np.where(np.eye(len(sites), dtype=bool), float(self_coef),
                 np.where(np.abs(d - 1.0) < 1e-12, float(neighbor_coef), 0.0))
    sigma_eps = np.exp(-d / phi)
    return VarModelSpec(sites=sites, R=R, sigma_eps=sigma_eps, phi=phi)


def stationary_cov(model: VarModelSpec) -> np.ndarray:
    """Stationary covariance of the VAR state, solving G = R G R' + sigma_eps.

    The solve vectorizes the fixed-point equation into
    ``(I - kron(R, R)) vec(G) = vec(sigma_eps)``.
    """
    s = model.n_sites
    a = np.eye(s * s) - np.kron(model.R, model.R)
    try:
        g = np.linalg.solve(a, _vec(model.sigma_eps))
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular system: model is not stationary") from None
    gamma = _unvec(g, (s, s))
    return (gamma + gamma.T) / 2.0


def cross_cov(model: VarModelSpec, tau: int, gamma: np.ndarray | None = None) -> np.ndarray:
    """Lagged state covariance ``cov(Z_{t+tau}, Z_t) = R^tau G`` for ``tau >= 0``.

    Entry (i, j) is ``cov{Z(s_j, t), Z(s_i, t + tau)}``; negative lags follow
    from the transpose convention ``C(-tau) = C(tau)'`` and are the caller's
    responsibility.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0; use the transpose for negative lags")
    if gamma is None:
        gamma = stationary_cov(model)
    return np.linalg.matrix_power(model.R, tau) @ gamma


def simulate_var(model: VarModelSpec, n: int, seed: int) -> StationDataset:
    """One trajectory of length ``n``, started exactly in the stationary law.

    ``Z_1 ~ N(0, G)`` via a symmetric factorization of the stationary
    covariance (no burn-in), then the recursion is iterated with fresh
    Gaussian innovations.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = stationary_cov(model)
    lg = psd_factor(gamma)
    le = psd_factor(model.sigma_eps)
    rng = np.random.default_rng(seed)
    s = model.n_sites
    values = np.empty((s, n))
    values[:, 0] = lg @ rng.standard_normal(s)
    if n > 1:
        eps = le @ rng.standard_normal((s, n - 1))
        for t in range(1, n):
            values[:, t] = model.R @ values[:, t - 1] + eps[:, t - 1]
    return StationDataset(model.sites, values)


def simulate_var_batch(model: VarModelSpec, n: int, seeds) -> np.ndarray:
    """Trajectories for several seeds at once; returns (S, n, len(seeds)).

    Each replicate draws from its own generator in the same order as
    ``simulate_var``; only the time recursion is vectorized across columns.
    """
    gamma = stationary_cov(model)
    lg = psd_factor(gamma)
    le = psd_factor(model.sigma_eps)
    s = model.n_sites
    seeds = list(seeds)
    z = np.empty((s, n, len(seeds)))
    for r, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        z[:, 0, r] = rng.standard_normal(s)
        if n > 1:
            z[:, 1:, r] = rng.standard_normal((s, n - 1))
    z[:, 0, :] = lg @ z[:, 0, :]
    for t in range(1, n):
        z[:, t, :] = model.R @ z[:, t - 1, :] + le @ z[:, t, :]
    return z


def sample_poisson(region: RegionSpec, nu: float, seed: int) -> np.ndarray:
    """Homogeneous Poisson pattern on the region's box, intensity ``nu``.

    The point count is Poisson(nu * measure) and locations are i.i.d.
    uniform over the box; returns an (N, dim) array.
    """
    if nu < 0:
        raise ValueError("nu must be >= 0")
    rng = np.random.default_rng(seed)
    count = rng.poisson(nu * region.measure)
    lo = np.array(region.lower)
    hi = np.array(region.upper)
    return lo + (hi - lo) * rng.random((count, region.dim))


@dataclass(frozen=True)
class GaussianFieldSpec:
    """Zero-mean Gaussian field with separable exponential covariance.

    ``C(h, u) = sigma2 * exp(-|h|/phi_s) * exp(-|u|/phi_t)`` for spatial lag
    ``h`` and time lag ``u``.  In full-3-d data the third coordinate plays
    the role of ``u``.
    """

    sigma2: float = 1.0
    phi_s: float = 1.0
    phi_t: float = 1.0

    def __post_init__(self):
        if self.sigma2 < 0 or self.phi_s <= 0 or self.phi_t <= 0:
            raise ValueError("sigma2 must be >= 0 and ranges positive")

    def cov(self, h, u) -> float | np.ndarray:
        """Covariance at spatial lag vector(s) ``h`` and time lag(s) ``u``."""
        h = np.asarray(h, dtype=float)
        hn = np.linalg.norm(h, axis=-1) if h.ndim else np.abs(h)
        return self.sigma2 * np.exp(-hn / self.phi_s) * np.exp(-np.abs(u) / self.phi_t)

    def cov_lag3(self, k) -> float | np.ndarray:
        """Covariance at full 3-d lag vectors ``k = (k1, k2, k3)``."""
        k = np.atleast_2d(np.asarray(k, dtype=float))
        out = self.sigma2 * np.exp(
            -np.linalg.norm(k[:, :2], axis=1) / self.phi_s
        ) * np.exp(-np.abs(k[:, 2]) / self.phi_t)
        return out if out.size > 1 else float(out[0])

    def covariance_matrix(self, locations: np.ndarray) -> np.ndarray:
        locations = np.asarray(locations, dtype=float)
        expo = cdist(locations[:, :2], locations[:, :2]) / self.phi_s
        expo += np.abs(locations[:, 2][:, None] - locations[:, 2][None, :]) / self.phi_t
        np.negative(expo, out=expo)
        np.exp(expo, out=expo)
        expo *= self.sigma2
        return expo


def simulate_gaussian_field(spec: GaussianFieldSpec, locations, region: RegionSpec,
                            seed: int, mode: str = FULL_3D) -> PointDataset:
    """Jointly Gaussian marks at the given locations, exact covariance.

    Marks are drawn from ``N(0, K)`` with ``K[a,b] = C(loc_a - loc_b)`` via a
    symmetric factorization; duplicate locations make ``K`` singular and are
    rejected.
    """
    locations = np.asarray(locations, dtype=float).reshape(-1, 3)
    if len(np.unique(locations, axis=0)) != len(locations):
        raise ValueError("duplicate locations (singular covariance)")
    rng = np.random.default_rng(seed)
    if len(locations) == 0:
        return PointDataset(mode, locations, np.array([]), region)
    k = spec.covariance_matrix(locations)
    factor = psd_factor(k)
    marks = factor @ rng.standard_normal(len(locations))
    return PointDataset(mode, locations, marks, region)


def simulate_separable_field_st(spec: GaussianFieldSpec, sites: np.ndarray,
                                region: RegionSpec, seed: int) -> PointDataset:
    """Space-time field on a fixed spatial pattern observed at all times.

    Exploits the separable covariance: with spatial factor ``Ls`` and
    temporal factor ``Lt``, the (S, n) mark matrix ``Ls @ G @ Lt'`` has
    exactly the covariance ``C(h, u)`` across all site/time pairs.  Same
    distribution as the dense route, at matrix-factor cost.
    """
    if region.n_time is None:
        raise ValueError("region must carry n_time")
    sites = np.asarray(sites, dtype=float)
    n = region.n_time
    ks = np.exp(-cdist(sites, sites) / spec.phi_s)
    times = np.arange(1, n + 1, dtype=float)
    kt = np.exp(-np.abs(times[:, None] - times[None, :]) / spec.phi_t)
    ls = psd_factor(ks)
    lt = psd_factor(kt)
    rng = np.random.default_rng(seed)
    marks = np.sqrt(spec.sigma2) * (ls @ rng.standard_normal((len(sites), n)) @ lt.T)
    pts = np.column_stack([
        np.repeat(sites, n, axis=0),
        np.tile(times, len(sites)),
    ])
    return PointDataset(SPACE_TIME, pts, marks.reshape(-1), region)
