"""Domain types for the three sampling regimes, lag bookkeeping and CSV ingestion.

Three kinds of data are supported:

* fixed monitoring sites observed at regular integer times (``StationDataset``),
* integer-lattice observations in space and time (``LatticeDataset``),
* marked point patterns at irregular locations (``PointDataset``), either with
  continuous 2-d space plus integer time, or fully irregular in 3-d.

All types are immutable after construction; the operations in this module are
pure functions and safe to call concurrently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

SPACE_TIME = "space-time"
FULL_3D = "full-3d"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpaceTimeLag:
    """A space-time lag: 2-d spatial offset ``h`` and integer time offset ``u``."""

    h: tuple[float, float]
    u: int

    def __post_init__(self):
        h = (float(self.h[0]), float(self.h[1]))
        if len(self.h) != 2 or not all(math.isfinite(x) for x in h):
            raise ValueError(f"spatial lag must be a finite 2-vector, got {self.h!r}")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "u", int(self.u))

    def __neg__(self) -> "SpaceTimeLag":
        return SpaceTimeLag((-self.h[0], -self.h[1]), -self.u)

    @property
    def h_array(self) -> np.ndarray:
        return np.array(self.h, dtype=float)

    def label(self) -> str:
        return f"h=({self.h[0]:g},{self.h[1]:g}),u={self.u}"


@dataclass(frozen=True)
class IsotropicLag:
    """A lag class: all spatial lags with Euclidean norm ``radius``, time lag ``u``.

    The class is realized on a site set as the ordered site pairs whose
    difference vector has the given norm and points into the half-plane
    ``h1 > 0 or (h1 == 0 and h2 > 0)``.  One representative per +-direction
    pair keeps the time orientation of the lagged products intact; including
    both orientations would average products over reversed time and change
    the sampling variance of the estimator at ``u != 0``.
    """

    radius: float
    u: int

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be positive and finite, got {self.radius!r}")
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "u", int(self.u))

    def label(self) -> str:
        return f"|h|={self.radius:g},u={self.u}"


StationLag = SpaceTimeLag | IsotropicLag


@dataclass(frozen=True)
class LagSet:
    """An ordered, duplicate-free set of lags.

    The order is fixed and defines the coordinate order of the estimated
    covariance vector and the rows/columns of every asymptotic covariance
    matrix built from it.
    """

    lags: tuple

    def __init__(self, lags):
        lags = tuple(lags)
        if len(lags) < 1:
            raise ValueError("lag set must contain at least one lag")
        if len(set(lags)) != len(lags):
            raise ValueError("duplicate lags in lag set")
        object.__setattr__(self, "lags", lags)

    def __len__(self) -> int:
        return len(self.lags)

    def __iter__(self):
        return iter(self.lags)

    def __getitem__(self, i):
        return self.lags[i]

    def labels(self) -> list[str]:
        return [lag.label() for lag in self.lags]


@dataclass(frozen=True)
class RegionSpec:
    """An axis-aligned box region with its Lebesgue measure.

    ``n_time`` is set only for space-time point data, where the box is the
    2-d spatial window and time runs over the integers ``1..n_time``.
    """

    lower: tuple
    upper: tuple
    n_time: int | None = None
    kind: str = "box"
    measure: float = field(init=False)

    def __post_init__(self):
        lower = tuple(float(x) for x in self.lower)
        upper = tuple(float(x) for x in self.upper)
        if len(lower) != len(upper) or len(lower) not in (2, 3):
            raise ValueError("region corners must both be 2- or 3-vectors")
        sides = [u - l for l, u in zip(lower, upper)]
        if any(s <= 0 for s in sides):
            raise ValueError(f"region has non-positive side length: {sides}")
        if self.n_time is not None and int(self.n_time) < 1:
            raise ValueError("n_time must be >= 1")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "n_time", None if self.n_time is None else int(self.n_time))
        object.__setattr__(self, "measure", float(np.prod(sides)))

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Closed-box membership for an (N, dim) array of locations."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        return np.all((pts >= lo) & (pts <= hi), axis=1)


class StationDataset:
    """Values on a fixed set of spatial sites at times ``1..n``.

    ``sites`` is (S, 2); ``values`` is (S, n), column ``t-1`` holding time ``t``.
    """

    def __init__(self, sites, values):
        sites = np.asarray(sites, dtype=float)
        values = np.asarray(values, dtype=float)
        if sites.ndim != 2 or sites.shape[1] != 2:
            raise ValueError("sites must be an (S, 2) array")
        if values.ndim != 2 or values.shape[0] != sites.shape[0]:
            raise ValueError("values must be an (S, n) array matching sites")
        if len(np.unique(sites, axis=0)) != len(sites):
            raise ValueError("duplicate sites")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite value in dataset")
        self.sites = _frozen(sites)
        self.values = _frozen(values)
        self.n = values.shape[1]

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def with_values(self, values) -> "StationDataset":
        return StationDataset(self.sites, values)

    def __eq__(self, other):
        return (
            isinstance(other, StationDataset)
            and np.array_equal(self.sites, other.sites)
            and np.array_equal(self.values, other.values)
        )


class LatticeDataset:
    """Observations on a finite subset of the integer lattice Z^2 x Z."""

    def __init__(self, points, values):
        points = np.asarray(points, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError("points must be an (N, 3) integer array (s1, s2, t)")
        if values.shape != (len(points),):
            raise ValueError("values must be a length-N vector matching points")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite value in dataset")
        order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
        points = points[order]
        values = values[order]
        if len(points) > 1 and np.any(np.all(points[1:] == points[:-1], axis=1)):
            raise ValueError("duplicate lattice points")
        self.points = _frozen(points)
        self.values = _frozen(values)
        self._index = {tuple(p): i for i, p in enumerate(points)}

    @classmethod
    def from_grid(cls, values_3d, origin=(0, 0, 1)) -> "LatticeDataset":
        """Build a full-box dataset from a dense (n1, n2, nt) value array."""
        values_3d = np.asarray(values_3d, dtype=float)
        if values_3d.ndim != 3:
            raise ValueError("expected a 3-d value array")
        n1, n2, nt = values_3d.shape
        grid = np.stack(
            np.meshgrid(np.arange(n1), np.arange(n2), np.arange(nt), indexing="ij"),
            axis=-1,
        ).reshape(-1, 3)
        grid = grid + np.asarray(origin, dtype=np.int64)
        return cls(grid, values_3d.reshape(-1))

    def __len__(self) -> int:
        return len(self.points)

    def index_of(self, point) -> int | None:
        return self._index.get(tuple(int(x) for x in point))

    def with_values(self, values) -> "LatticeDataset":
        return LatticeDataset(self.points, values)

    def __eq__(self, other):
        return (
            isinstance(other, LatticeDataset)
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.values, other.values)
        )


class PointDataset:
    """Marked points at irregular locations inside a box region.

    In ``space-time`` mode rows are ``(x, y, t)`` with integer ``t`` in
    ``1..region.n_time``; in ``full-3d`` mode rows are ``(x, y, z)``.
    Row order is preserved.
    """

    def __init__(self, mode, points, values, region: RegionSpec):
        if mode not in (SPACE_TIME, FULL_3D):
            raise ValueError(f"unknown mode {mode!r}")
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        values = np.asarray(values, dtype=float).reshape(-1)
        if len(points) != len(values):
            raise ValueError("points and values length mismatch")
        if len(values) and not np.all(np.isfinite(values)):
            raise ValueError("non-finite mark value")
        if mode == SPACE_TIME:
            if region.n_time is None or region.dim != 2:
                raise ValueError("space-time mode needs a 2-d region with n_time")
            t = points[:, 2]
            if len(points) and (
                np.any(t != np.round(t)) or np.any(t < 1) or np.any(t > region.n_time)
            ):
                raise ValueError("time coordinates must be integers in 1..n_time")
            inside = region.contains(points[:, :2]) if len(points) else np.array([], bool)
        else:
            if region.dim != 3:
                raise ValueError("full-3d mode needs a 3-d region")
            inside = region.contains(points) if len(points) else np.array([], bool)
        if len(points) and not np.all(inside):
            bad = int(np.argmin(inside))
            raise ValueError(f"point {points[bad]} lies outside the region")
        self.mode = mode
        self.points = _frozen(points)
        self.values = _frozen(values)
        self.region = region

    def __len__(self) -> int:
        return len(self.points)

    def with_values(self, values) -> "PointDataset":
        return PointDataset(self.mode, self.points, values, self.region)

    def time_slices(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Group space-time rows by integer time: ``t -> (coords, marks)``."""
        if self.mode != SPACE_TIME:
            raise ValueError("time_slices only applies to space-time data")
        out: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        t = self.points[:, 2].astype(np.int64)
        for ti in np.unique(t):
            sel = t == ti
            out[int(ti)] = (self.points[sel, :2], self.values[sel])
        return out

    def __eq__(self, other):
        return (
            isinstance(other, PointDataset)
            and self.mode == other.mode
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.values, other.values)
            and self.region == other.region
        )


# ---------------------------------------------------------------------------
# pair enumeration


def spatial_pairs(sites, h, tol: float = 1e-9) -> list[tuple[int, int]]:
    """All ordered site-index pairs ``(k, k')`` with ``site_k + h ~ site_k'``.

    Matching is within Euclidean distance ``tol``; the list of first elements
    realizes the set of sites whose ``h``-translate is also a site.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    sites = np.asarray(sites, dtype=float)
    target = sites + np.asarray(h, dtype=float)
    d = np.linalg.norm(target[:, None, :] - sites[None, :, :], axis=-1)
    ks, kps = np.nonzero(d <= tol)
    return list(zip(ks.tolist(), kps.tolist()))


def station_lag_pairs(sites, lag: StationLag, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Ordered site pairs realizing a vector lag or an isotropic lag class."""
    sites = np.asarray(sites, dtype=float)
    if isinstance(lag, SpaceTimeLag):
        return spatial_pairs(sites, lag.h_array, tol)
    diff = sites[None, :, :] - sites[:, None, :]  # diff[a, b] = s_b - s_a
    norms = np.linalg.norm(diff, axis=-1)
    positive = (diff[..., 0] > tol) | (
        (np.abs(diff[..., 0]) <= tol) & (diff[..., 1] > tol)
    )
    a, b = np.nonzero((np.abs(norms - lag.radius) <= tol) & positive)
    return list(zip(a.tolist(), b.tolist()))


def lattice_pair_set(data: LatticeDataset, lag: SpaceTimeLag) -> list[tuple[int, int]]:
    """Index pairs ``(i, j)`` with ``point_j = point_i + (h, u)``, both observed."""
    h = lag.h_array
    if np.any(h != np.round(h)):
        raise ValueError(f"lattice lag must have integer spatial components, got {lag.h}")
    shift = np.array([int(round(h[0])), int(round(h[1])), lag.u], dtype=np.int64)
    out = []
    for i, p in enumerate(data.points):
        j = data.index_of(p + shift)
        if j is not None:
            out.append((i, j))
    return out


# ---------------------------------------------------------------------------
# CSV ingestion

STATION_HEADER = ["site_id", "x", "y", "t", "value"]


def load_station_csv(path) -> StationDataset:
    """Read long-format station data with header ``site_id,x,y,t,value``.

    Sites are ordered by first appearance.  Times must form the contiguous
    range ``1..n`` for every site; missing or duplicate cells are errors.
    """
    site_order: list = []
    site_xy: dict = {}
    cells: dict = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != STATION_HEADER:
            raise ValueError(f"expected header {','.join(STATION_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(row)}")
            try:
                sid = row[0].strip()
                x, y = float(row[1]), float(row[2])
                t = int(row[3])
                v = float(row[4])
            except ValueError as e:
                raise ValueError(f"line {lineno}: malformed row: {e}") from None
            if not math.isfinite(v):
                raise ValueError(f"line {lineno}: non-finite value")
            if sid not in site_xy:
                site_order.append(sid)
                site_xy[sid] = (x, y)
            elif site_xy[sid] != (x, y):
                raise ValueError(f"line {lineno}: site {sid} changed coordinates")
            if (sid, t) in cells:
                raise ValueError(f"line {lineno}: duplicate cell (site {sid}, t {t})")
            cells[(sid, t)] = v
    if not cells:
        raise ValueError("empty station file")
    times = sorted({t for _, t in cells})
    n = times[-1]
    if times[0] != 1 or times != list(range(1, n + 1)):
        raise ValueError(f"times must form the contiguous range 1..n, got {times[:5]}...")
    values = np.empty((len(site_order), n))
    for i, sid in enumerate(site_order):
        for t in range(1, n + 1):
            if (sid, t) not in cells:
                raise ValueError(f"missing cell (site {sid}, t {t})")
            values[i, t - 1] = cells[(sid, t)]
    sites = np.array([site_xy[sid] for sid in site_order], dtype=float)
    return StationDataset(sites, values)


def save_station_csv(data: StationDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(STATION_HEADER)
        for i, (x, y) in enumerate(data.sites):
            for t in range(1, data.n + 1):
                writer.writerow([i, repr(float(x)), repr(float(y)), t,
                                 repr(float(data.values[i, t - 1]))])


def load_point_csv(path, mode: str, region: RegionSpec) -> PointDataset:
    """Read marked points with header ``x,y,t,value`` or ``x,y,z,value``.

    Every location must lie inside ``region`` (closed box); order is kept.
    """
    expected = ["x", "y", "t", "value"] if mode == SPACE_TIME else ["x", "y", "z", "value"]
    pts = []
    vals = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != expected:
            raise ValueError(f"expected header {','.join(expected)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"line {lineno}: expected 4 fields, got {len(row)}")
            try:
                pts.append([float(row[0]), float(row[1]), float(row[2])])
                vals.append(float(row[3]))
            except ValueError as e:
                raise ValueError(f"line {lineno}: malformed row: {e}") from None
    pts_arr = np.array(pts, dtype=float).reshape(-1, 3)
    return PointDataset(mode, pts_arr, np.array(vals, dtype=float), region)


def save_point_csv(data: PointDataset, path) -> None:
    header = ["x", "y", "t", "value"] if data.mode == SPACE_TIME else ["x", "y", "z", "value"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for p, v in zip(data.points, data.values):
            writer.writerow([repr(float(p[0])), repr(float(p[1])),
                             int(p[2]) if data.mode == SPACE_TIME else repr(float(p[2])),
                             repr(float(v))])


def station_to_lattice(data: StationDataset) -> LatticeDataset:
    """Reinterpret station data on an integer grid as a lattice dataset."""
    sites = data.sites
    if np.any(sites != np.round(sites)):
        raise ValueError("sites are not on an integer grid")
    pts = []
    vals = []
    for i, (x, y) in enumerate(sites.astype(np.int64)):
        for t in range(1, data.n + 1):
            pts.append((x, y, t))
            vals.append(data.values[i, t - 1])
    return LatticeDataset(np.array(pts), np.array(vals))
