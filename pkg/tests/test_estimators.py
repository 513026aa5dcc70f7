import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from stcov import (
    FULL_3D,
    SPACE_TIME,
    IsotropicLag,
    KernelSpec,
    LatticeDataset,
    PointDataset,
    RegionSpec,
    SpaceTimeLag,
    StationDataset,
    build_var_model,
    default_bandwidth,
    estimate_intensity,
    kernel_cov_r3,
    kernel_cov_st,
    mean_correct,
    moment_cov_lattice,
    moment_cov_station,
    sample_poisson,
    simulate_var,
)


def cube_dataset():
    vals = np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")
    return LatticeDataset.from_grid(vals)


def full_lattice(rng, shape=(4, 4, 6)):
    return LatticeDataset.from_grid(rng.standard_normal(shape))


# ---------------------------------------------------------------------------
# lattice moment estimator


def test_lattice_constant_field():
    data = LatticeDataset.from_grid(np.full((3, 3, 3), 2.5))
    for lag in [SpaceTimeLag((1, 0), 0), SpaceTimeLag((0, 1), 1), SpaceTimeLag((0, 0), 2)]:
        assert moment_cov_lattice(data, lag).value == pytest.approx(6.25, abs=1e-12)


def test_lattice_cube_hand_value():
    # values 1..8 laid out so the four (1,0,0)-pairs multiply consecutive values
    data = cube_dataset()
    est = moment_cov_lattice(data, SpaceTimeLag((1, 0), 0))
    assert est.value == pytest.approx((1 * 2 + 3 * 4 + 5 * 6 + 7 * 8) / 4, abs=1e-12)
    assert est.pair_count == 4


def test_lattice_zero_lag_is_mean_square(rng):
    data = full_lattice(rng)
    est = moment_cov_lattice(data, SpaceTimeLag((0, 0), 0))
    assert est.value == pytest.approx(np.mean(data.values ** 2), rel=1e-12)
    assert est.value >= 0.0


def test_lattice_out_of_range_lag_errors():
    with pytest.raises(ValueError, match="no lattice pairs"):
        moment_cov_lattice(cube_dataset(), SpaceTimeLag((5, 0), 0))


def test_lattice_reflection_identity_exact(rng):
    data = full_lattice(rng)
    for lag in [SpaceTimeLag((1, 0), 0), SpaceTimeLag((1, -1), 2), SpaceTimeLag((0, 2), 1)]:
        fwd = moment_cov_lattice(data, lag).value
        rev = moment_cov_lattice(data, -lag).value
        assert fwd == rev  # bit-exact by pair reversal and exact summation


# ---------------------------------------------------------------------------
# station moment estimator


def test_station_all_zero():
    ds = StationDataset([[0, 0], [1, 0]], np.zeros((2, 5)))
    assert moment_cov_station(ds, SpaceTimeLag((1, 0), 1)).value == 0.0


def test_station_single_site_hand_value():
    ds = StationDataset([[0.0, 0.0]], [[1.0, 2.0, 3.0]])
    est = moment_cov_station(ds, SpaceTimeLag((0, 0), 1))
    assert est.value == pytest.approx((1 * 2 + 2 * 3) / 3.0, abs=1e-14)
    assert est.pair_count == 2
    unbiased = moment_cov_station(ds, SpaceTimeLag((0, 0), 1), unbiased_divisor=True)
    assert unbiased.value == pytest.approx((1 * 2 + 2 * 3) / 2.0, abs=1e-14)
    zero = moment_cov_station(ds, SpaceTimeLag((0, 0), 0))
    assert zero.value == pytest.approx((1 + 4 + 9) / 3.0, abs=1e-14)
    assert zero.value >= 0.0


def test_station_constant_field_zero_time_lag():
    sites = np.array([(x, y) for y in range(3) for x in range(3)], dtype=float)
    ds = StationDataset(sites, np.full((9, 7), 3.0))
    est = moment_cov_station(ds, SpaceTimeLag((1, 0), 0))
    assert est.value == pytest.approx(9.0, abs=1e-12)
    iso = moment_cov_station(ds, IsotropicLag(1.0, 0))
    assert iso.value == pytest.approx(9.0, abs=1e-12)


def test_station_errors():
    ds = StationDataset([[0, 0], [1, 0]], np.ones((2, 3)))
    with pytest.raises(ValueError, match="temporal lag"):
        moment_cov_station(ds, SpaceTimeLag((1, 0), 3))
    with pytest.raises(ValueError, match="no site pairs"):
        moment_cov_station(ds, SpaceTimeLag((5, 5), 0))
    with pytest.raises(ValueError):
        moment_cov_station(ds, SpaceTimeLag((1, 0), -1))


def test_station_isotropic_class_averages_directions(var_model):
    ds = simulate_var(var_model, 200, seed=21)
    iso = moment_cov_station(ds, IsotropicLag(1.0, 1)).value
    v1 = moment_cov_station(ds, SpaceTimeLag((1, 0), 1)).value
    v2 = moment_cov_station(ds, SpaceTimeLag((0, 1), 1)).value
    assert iso == pytest.approx((v1 + v2) / 2.0, rel=1e-12)


# ---------------------------------------------------------------------------
# mean correction


def test_mean_correct_zero_mean_data_unchanged():
    vals = np.array([[1.0, -1.0, 2.0, -2.0]])
    ds = StationDataset([[0.0, 0.0]], vals)
    raw = lambda d: moment_cov_station(d, SpaceTimeLag((0, 0), 1))
    mc = mean_correct(raw, ds)
    assert mc.value == raw(ds).value
    assert mc.mean == 0.0


def test_mean_correct_translation_invariance(rng):
    data = full_lattice(rng, shape=(3, 3, 8))
    lag = SpaceTimeLag((1, 0), 1)
    raw = lambda d: moment_cov_lattice(d, lag)
    base = mean_correct(raw, data).value
    shifted = mean_correct(raw, data.with_values(data.values + 17.3)).value
    assert abs(base - shifted) < 1e-12


def test_mean_correct_decomposition_identity(rng):
    data = full_lattice(rng, shape=(4, 3, 7))
    for lag in [SpaceTimeLag((1, 0), 0), SpaceTimeLag((0, 1), 2)]:
        mc = mean_correct(lambda d, lag=lag: moment_cov_lattice(d, lag), data)
        assert abs(mc.decomposition_residual()) < 1e-12


def test_mean_correct_difference_shrinks_with_n(var_model):
    lag = IsotropicLag(1.0, 0)
    diffs = {}
    for n in (100, 1000):
        gaps = []
        for rep in range(40):
            ds = simulate_var(var_model, n, seed=1000 + rep)
            shifted = ds.with_values(ds.values + 0.5)  # nonzero mean field
            mc = mean_correct(lambda d: moment_cov_station(d, lag), shifted)
            gaps.append(abs(mc.raw_value - mc.value))
        diffs[n] = np.mean(gaps)
    assert diffs[1000] < diffs[100]


# ---------------------------------------------------------------------------
# kernels


def test_kernel_square_integrals_analytic():
    assert KernelSpec("gaussian", 2, 1.0).square_integral == pytest.approx(
        1.0 / (4 * math.pi), abs=1e-15)
    assert KernelSpec("gaussian", 3, 1.0).square_integral == pytest.approx(
        1.0 / (8 * math.pi ** 1.5), abs=1e-15)
    assert KernelSpec("epanechnikov-product", 2, 1.0).square_integral == pytest.approx(
        0.36, abs=1e-15)
    assert KernelSpec("epanechnikov-product", 3, 1.0).square_integral == pytest.approx(
        0.216, abs=1e-15)


@pytest.mark.parametrize("kind", ["gaussian", "epanechnikov-product"])
def test_kernel_density_quadrature_oracle(kind):
    # the kernels are product densities, so the 2-d/3-d integrals factor into
    # 1-d ones that a fine trapezoid evaluates to high accuracy
    kern2 = KernelSpec(kind, 2, 1.0)
    g = np.linspace(-8.0, 8.0, 160_001)
    if kind == "gaussian":
        w1 = np.exp(-0.5 * g ** 2) / math.sqrt(2 * math.pi)
    else:
        w1 = 0.75 * np.clip(1.0 - g ** 2, 0.0, None)
    mass1 = np.trapezoid(w1, g)
    sq1 = np.trapezoid(w1 ** 2, g)
    assert mass1 == pytest.approx(1.0, abs=1e-8)
    assert sq1 ** 2 == pytest.approx(kern2.square_integral, abs=1e-8)
    assert sq1 ** 3 == pytest.approx(KernelSpec(kind, 3, 1.0).square_integral, abs=1e-8)
    # the multivariate density really is the product of the univariate factors
    sample = np.array([[0.3, -0.4], [1.2, 0.1], [0.0, 0.0]])
    def f1(x):
        if kind == "gaussian":
            return np.exp(-0.5 * x ** 2) / math.sqrt(2 * math.pi)
        return 0.75 * np.clip(1.0 - x ** 2, 0.0, None)
    assert_allclose(kern2.density(sample), f1(sample[:, 0]) * f1(sample[:, 1]),
                    rtol=1e-12)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 4, 1.0)
    with pytest.raises(ValueError):
        KernelSpec("gaussian", 2, 0.0)


# ---------------------------------------------------------------------------
# space-time kernel estimator


def st_two_site_data(za, zb):
    region = RegionSpec((0.0, 0.0), (2.0, 1.0), n_time=1)
    pts = [[0.0, 0.5, 1.0], [1.0, 0.5, 1.0]]
    return PointDataset(SPACE_TIME, pts, [za, zb], region)


def test_kernel_st_zero_marks():
    data = st_two_site_data(0.0, 0.0)
    kern = KernelSpec("gaussian", 2, 0.5)
    assert kernel_cov_st(data, SpaceTimeLag((1.0, 0.0), 0), kern, nu=1.0).value == 0.0


def test_kernel_st_two_site_hand_value():
    # both ordered pairs evaluated explicitly with their kernel weights
    za, zb = 1.3, -0.7
    lam = 0.5
    data = st_two_site_data(za, zb)
    kern = KernelSpec("gaussian", 2, lam)
    h = np.array([1.0, 0.0])
    a = np.array([0.0, 0.5])
    b = np.array([1.0, 0.5])

    def w_n(x):
        return math.exp(-0.5 * (x @ x) / lam ** 2) / (2 * math.pi * lam ** 2)

    expected = (w_n(h - a + b) * za * zb + w_n(h - b + a) * zb * za) / (1.0 ** 2 * 1 * 2.0)
    est = kernel_cov_st(data, SpaceTimeLag((1.0, 0.0), 0), kern, nu=1.0)
    assert est.value == pytest.approx(expected, rel=1e-12)


def test_kernel_st_mark_scaling_is_quadratic():
    rng = np.random.default_rng(3)
    region = RegionSpec((0.0, 0.0), (4.0, 4.0), n_time=3)
    sites = sample_poisson(RegionSpec((0.0, 0.0), (4.0, 4.0), n_time=1), 2.0, seed=8)
    pts = np.column_stack([np.repeat(sites, 3, axis=0), np.tile([1, 2, 3], len(sites))])
    vals = rng.standard_normal(len(pts))
    data = PointDataset(SPACE_TIME, pts, vals, region)
    kern = KernelSpec("gaussian", 2, 0.6)
    lag = SpaceTimeLag((1.0, 0.0), 1)
    v1 = kernel_cov_st(data, lag, kern, nu=2.0).value
    v3 = kernel_cov_st(data.with_values(3.0 * vals), lag, kern, nu=2.0).value
    assert v3 == pytest.approx(9.0 * v1, rel=1e-12)


def test_kernel_st_cutoff_matches_brute_force():
    rng = np.random.default_rng(5)
    region = RegionSpec((0.0, 0.0), (6.0, 6.0), n_time=2)
    sites = sample_poisson(RegionSpec((0.0, 0.0), (6.0, 6.0), n_time=1), 1.5, seed=10)
    pts = np.column_stack([np.repeat(sites, 2, axis=0), np.tile([1, 2], len(sites))])
    data = PointDataset(SPACE_TIME, pts, rng.standard_normal(len(pts)), region)
    for kind in ("gaussian", "epanechnikov-product"):
        kern = KernelSpec(kind, 2, 0.7)
        lag = SpaceTimeLag((1.0, 0.5), 1)
        fast = kernel_cov_st(data, lag, kern, nu=1.5, use_cutoff=True).value
        slow = kernel_cov_st(data, lag, kern, nu=1.5, use_cutoff=False).value
        assert fast == pytest.approx(slow, rel=1e-12, abs=1e-15)


def test_kernel_st_same_site_flag():
    region = RegionSpec((0.0, 0.0), (2.0, 2.0), n_time=2)
    pts = [[1.0, 1.0, 1.0], [1.0, 1.0, 2.0], [1.5, 1.0, 1.0], [1.5, 1.0, 2.0]]
    data = PointDataset(SPACE_TIME, pts, [1.0, 2.0, 3.0, 4.0], region)
    kern = KernelSpec("gaussian", 2, 0.5)
    lag = SpaceTimeLag((0.0, 0.0), 1)
    excl = kernel_cov_st(data, lag, kern, nu=1.0)
    incl = kernel_cov_st(data, lag, kern, nu=1.0, include_same_site=True)
    assert incl.value != excl.value
    assert incl.pair_count > excl.pair_count
    # at u = 0 the same-site exclusion always applies
    lag0 = SpaceTimeLag((0.0, 0.0), 0)
    excl0 = kernel_cov_st(data, lag0, kern, nu=1.0)
    incl0 = kernel_cov_st(data, lag0, kern, nu=1.0, include_same_site=True)
    assert incl0.value == excl0.value


def test_kernel_st_per_time_patterns_brute_force():
    # point sets that differ across time slices exercise the general path;
    # oracle: explicit double sum over ordered cross-slice pairs
    region = RegionSpec((0.0, 0.0), (3.0, 3.0), n_time=2)
    slice1 = np.array([[0.5, 0.5], [2.0, 1.0], [1.0, 2.5]])
    slice2 = np.array([[1.5, 0.5], [0.7, 1.8]])
    pts = np.vstack([
        np.column_stack([slice1, np.ones(len(slice1))]),
        np.column_stack([slice2, np.full(len(slice2), 2.0)]),
    ])
    rng = np.random.default_rng(12)
    vals = rng.standard_normal(len(pts))
    data = PointDataset(SPACE_TIME, pts, vals, region)
    lam = 0.6
    kern = KernelSpec("gaussian", 2, lam)
    h = np.array([1.0, 0.0])
    u = 1
    nu = 0.8

    def w_n(x):
        return math.exp(-0.5 * (x @ x) / lam ** 2) / (2 * math.pi * lam ** 2)

    expected = 0.0
    for i in range(3):        # slice at t=1
        for j in range(2):    # slice at t=2
            expected += w_n(h - slice1[i] + slice2[j]) * vals[i] * vals[3 + j]
    expected /= nu ** 2 * 2 * 9.0
    est = kernel_cov_st(data, SpaceTimeLag((1.0, 0.0), u), kern, nu=nu)
    assert est.value == pytest.approx(expected, rel=1e-10)


def test_kernel_st_needs_two_points():
    region = RegionSpec((0.0, 0.0), (1.0, 1.0), n_time=1)
    data = PointDataset(SPACE_TIME, [[0.5, 0.5, 1.0]], [1.0], region)
    with pytest.raises(ValueError, match="2 points"):
        kernel_cov_st(data, SpaceTimeLag((0.1, 0.0), 0), KernelSpec("gaussian", 2, 0.5),
                      nu=1.0)


# ---------------------------------------------------------------------------
# full-3d kernel estimator


def test_kernel_r3_zero_marks():
    region = RegionSpec((0, 0, 0), (2, 2, 2))
    data = PointDataset(FULL_3D, [[0.5, 0.5, 0.5], [1.5, 1.5, 1.5]], [0.0, 0.0], region)
    kern = KernelSpec("gaussian", 3, 0.4)
    assert kernel_cov_r3(data, (1, 1, 1), kern, nu=1.0).value == 0.0


def test_kernel_r3_two_point_hand_value():
    region = RegionSpec((0, 0, 0), (3.0, 2.0, 2.0))
    x1 = np.array([0.5, 1.0, 1.0])
    x2 = np.array([1.7, 1.2, 0.6])
    z1, z2 = 0.9, 1.4
    lam = 0.8
    data = PointDataset(FULL_3D, [x1, x2], [z1, z2], region)
    kern = KernelSpec("gaussian", 3, lam)
    k = np.array([1.0, 0.0, -0.5])

    def w_n(x):
        return math.exp(-0.5 * (x @ x) / lam ** 2) / ((2 * math.pi) ** 1.5 * lam ** 3)

    expected = (w_n(k - x1 + x2) * z1 * z2 + w_n(k - x2 + x1) * z2 * z1) / (12.0)
    est = kernel_cov_r3(data, k, kern, nu=1.0)
    assert est.value == pytest.approx(expected, rel=1e-12)


def test_kernel_r3_reflection_exact():
    region = RegionSpec((0, 0, 0), (4, 4, 4))
    pts = sample_poisson(region, 1.0, seed=77)
    rng = np.random.default_rng(1)
    data = PointDataset(FULL_3D, pts, rng.standard_normal(len(pts)), region)
    kern = KernelSpec("gaussian", 3, 0.5)
    k = np.array([0.8, -0.2, 0.4])
    assert kernel_cov_r3(data, k, kern, nu=1.0).value == \
        kernel_cov_r3(data, -k, kern, nu=1.0).value


# ---------------------------------------------------------------------------
# intensity and bandwidth


def test_estimate_intensity_cases():
    region = RegionSpec((0, 0), (10, 10), n_time=1)
    empty = PointDataset(SPACE_TIME, np.empty((0, 3)), [], region)
    assert estimate_intensity(empty) == 0.0
    pts = np.column_stack([np.linspace(0.1, 9.9, 50), np.linspace(0.1, 9.9, 50),
                           np.ones(50)])
    data = PointDataset(SPACE_TIME, pts, np.ones(50), region)
    assert estimate_intensity(data) == pytest.approx(0.5)


def test_estimate_intensity_counts_pattern_once_per_slice():
    region = RegionSpec((0, 0), (5, 5), n_time=4)
    sites = sample_poisson(RegionSpec((0, 0), (5, 5), n_time=1), 1.0, seed=2)
    pts = np.column_stack([np.repeat(sites, 4, axis=0), np.tile([1, 2, 3, 4], len(sites))])
    data = PointDataset(SPACE_TIME, pts, np.zeros(len(pts)), region)
    assert estimate_intensity(data) == pytest.approx(len(sites) / 25.0)


def test_estimate_intensity_poisson_mc():
    region = RegionSpec((0, 0, 0), (4, 4, 4))
    vals = []
    for s in range(1000):
        pts = sample_poisson(region, 2.0, seed=40_000 + s)
        data = PointDataset(FULL_3D, pts, np.zeros(len(pts)), region)
        vals.append(estimate_intensity(data))
    se = np.sqrt(2.0 / region.measure / len(vals))
    assert abs(np.mean(vals) - 2.0) <= 3.0 * se


def test_default_bandwidth_powers():
    st_region = RegionSpec((0, 0), (1, 1), n_time=5)
    assert default_bandwidth(st_region, SPACE_TIME, 1.0) == 1.0
    st64 = RegionSpec((0, 0), (8, 8), n_time=5)
    assert default_bandwidth(st64, SPACE_TIME, 1.0) == pytest.approx(0.5)
    r3 = RegionSpec((0, 0, 0), (8, 8, 8))
    assert default_bandwidth(r3, FULL_3D, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        default_bandwidth(r3, FULL_3D, 0.0)


# ---------------------------------------------------------------------------
# properties


@settings(max_examples=20, deadline=None)
@given(scale=st.floats(-3.0, 3.0), seed=st.integers(0, 100))
def test_lattice_estimator_scales_quadratically(scale, seed):
    data = full_lattice(np.random.default_rng(seed), shape=(3, 3, 4))
    lag = SpaceTimeLag((1, 0), 1)
    base = moment_cov_lattice(data, lag).value
    scaled = moment_cov_lattice(data.with_values(scale * data.values), lag).value
    assert scaled == pytest.approx(scale ** 2 * base, rel=1e-9, abs=1e-12)
