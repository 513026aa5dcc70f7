"""Experiment orchestration: the joint-normality convergence table, kernel
consistency runs, and report emission.

Replicates are deterministic in the configured seed: replicate ``r`` of the
``k``-th series length draws from generator seed ``seed + k * n_reps + r``.
Work is split into fixed-size replicate chunks; the parallelism degree only
distributes chunks across threads, so results are identical for any worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .asymcov import CrossCovModel, sigma_station_gaussian
from .datasets import (
    SPACE_TIME,
    IsotropicLag,
    LagSet,
    RegionSpec,
    SpaceTimeLag,
    station_lag_pairs,
)
from .diagnostics import ReplicateMatrix, mardia_kurtosis, mardia_skewness, replicate_cov
from .estimators import KernelSpec, default_bandwidth, kernel_cov_st
from .simulate import (
    GaussianFieldSpec,
    VarModelSpec,
    build_var_model,
    sample_poisson,
    simulate_separable_field_st,
    simulate_var_batch,
)

CHUNK = 256  # replicates per work unit; fixed so results never depend on workers

DEFAULT_N_LIST = (3, 10, 20, 50, 70, 100, 150, 200, 500, 1000, 5000)


@dataclass(frozen=True)
class ExperimentConfig:
    """Configuration of the convergence experiment."""

    grid_side: int = 3
    phi: float = 1.0
    self_coef: float = 0.2
    neighbor_coef: float = 0.1
    n_list: tuple = DEFAULT_N_LIST
    n_reps: int = 5000
    lag_set: LagSet = field(default_factory=lambda: LagSet(
        (IsotropicLag(1.0, 0), IsotropicLag(1.0, 1))))
    seed: int = 12345
    workers: int = 1

    def __post_init__(self):
        if self.n_reps < 2:
            raise ValueError("n_reps must be >= 2")
        max_u = max(lag.u for lag in self.lag_set)
        bad = [n for n in self.n_list if n <= max_u]
        if bad:
            raise ValueError(f"series lengths {bad} do not exceed the max temporal lag {max_u}")
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))


@dataclass(frozen=True)
class Report:
    """A rectangular result table with fixed column order."""

    title: str
    columns: tuple
    rows: tuple

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))


def _format_cell(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6g}"


def emit_report(report: Report, fmt: str = "csv", path=None, plot=None) -> str:
    """Render a report as CSV or markdown; optionally write a trend plot.

    CSV output is byte-stable for a fixed report: fixed column order, six
    significant digits.
    """
    if not report.rows:
        raise ValueError("empty report")
    if fmt == "csv":
        lines = [",".join(report.columns)]
        lines += [",".join(_format_cell(v) for v in row) for row in report.rows]
        text = "\n".join(lines) + "\n"
    elif fmt == "markdown":
        header = "| " + " | ".join(report.columns) + " |"
        sep = "| " + " | ".join("---" for _ in report.columns) + " |"
        body = ["| " + " | ".join(_format_cell(v) for v in row) + " |"
                for row in report.rows]
        text = "\n".join([header, sep] + body) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    if plot is not None:
        _plot_diagnostics(report, plot)
    return text


def _plot_diagnostics(report: Report, path) -> None:
    cols = list(report.columns)
    if "b1" not in cols or "b2" not in cols:
        raise ValueError("report has no diagnostic columns to plot")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    i_n, i_b1, i_b2 = cols.index("n"), cols.index("b1"), cols.index("b2")
    rows = [r for r in report.rows if not isinstance(r[i_n], str)]
    ns = [r[i_n] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ns, [r[i_b1] for r in rows], "o-", label="skewness b1")
    ax.plot(ns, [r[i_b2] for r in rows], "s-", label="kurtosis b2")
    ax.axhline(8.0, color="gray", lw=0.8, ls="--")
    ax.set_xscale("log")
    ax.set_xlabel("series length n")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _chunks(n_reps: int):
    return [(lo, min(lo + CHUNK, n_reps)) for lo in range(0, n_reps, CHUNK)]


def station_ghat_replicates(model: VarModelSpec, lag_set: LagSet, n: int,
                            n_reps: int, seed_base: int, tol: float = 1e-9,
                            workers: int = 1) -> np.ndarray:
    """Monte Carlo sample of the station estimate vector: (n_reps, m)."""
    realized = []
    for lag in lag_set:
        pairs = station_lag_pairs(model.sites, lag, tol)
        if not pairs:
            raise ValueError(f"no site pairs realize lag {lag}")
        a = np.fromiter((p[0] for p in pairs), dtype=np.int64)
        b = np.fromiter((p[1] for p in pairs), dtype=np.int64)
        realized.append((a, b, lag.u))
    out = np.empty((n_reps, len(realized)))

    def work(bounds):
        lo, hi = bounds
        z = simulate_var_batch(model, n, range(seed_base + lo, seed_base + hi))
        block = np.empty((hi - lo, len(realized)))
        for col, (a, b, u) in enumerate(realized):
            acc = np.zeros(hi - lo)
            for ai, bi in zip(a, b):
                head = z[ai, : n - u, :] if u else z[ai]
                acc += np.einsum("tr,tr->r", head, z[bi, u:, :])
            block[:, col] = acc / (len(a) * n)
        return lo, block

    _run_chunks(work, _chunks(n_reps), workers, out)
    return out


def _run_chunks(work, chunks, workers, out) -> None:
    if workers <= 1:
        for bounds in chunks:
            lo, block = work(bounds)
            out[lo:lo + len(block)] = block
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for lo, block in pool.map(work, chunks):
                out[lo:lo + len(block)] = block


def run_table1(config: ExperimentConfig) -> Report:
    """The convergence table: normality diagnostics and scaled (co)variances
    of the two-lag estimate vector for each series length, plus the
    closed-form limit row.
    """
    model = build_var_model(config.grid_side, config.phi, config.self_coef,
                            config.neighbor_coef)
    m = len(config.lag_set)
    if m != 2:
        raise ValueError("the convergence table expects exactly two lags")
    rows = []
    for k, n in enumerate(config.n_list):
        ghat = station_ghat_replicates(model, config.lag_set, n, config.n_reps,
                                       seed_base=config.seed + k * config.n_reps,
                                       workers=config.workers)
        sample = ReplicateMatrix(ghat, scale_n=n, lag_set=config.lag_set)
        cov = replicate_cov(sample).values
        rows.append((n, mardia_skewness(sample), mardia_kurtosis(sample),
                     cov[0, 1], cov[0, 0], cov[1, 1]))
    theory = sigma_station_gaussian(CrossCovModel.from_var(model), model.sites,
                                    config.lag_set)
    rows.append(("inf", 0.0, float(m * (m + 2)),
                 theory.values[0, 1], theory.values[0, 0], theory.values[1, 1]))
    return Report(title="joint normality of covariance estimates vs series length",
                  columns=("n", "b1", "b2", "n_cov", "n_var1", "n_var2"),
                  rows=rows)


def run_kernel_consistency(field: GaussianFieldSpec, sizes, nu: float,
                           kernel_kind: str = "gaussian", bandwidth_c: float = 1.0,
                           reps: int = 200, seed: int = 12345,
                           lags=(SpaceTimeLag((0.5, 0.0), 0), SpaceTimeLag((0.5, 0.0), 1)),
                           n_time: int = 20, workers: int = 1) -> Report:
    """Bias of the space-time kernel estimator across growing spatial windows.

    For each window side, averages the kernel estimate over Poisson-sampled
    Gaussian fields at each lag and reports the mean estimate, the target
    covariance, the absolute bias and the Monte Carlo standard error.
    """
    sizes = [float(s) for s in sizes]
    if len(sizes) < 2:
        raise ValueError("need at least two window sizes")
    rows = []
    for si, side in enumerate(sizes):
        region = RegionSpec((0.0, 0.0), (side, side), n_time=n_time)
        lam = default_bandwidth(region, SPACE_TIME, bandwidth_c)
        kernel = KernelSpec("gaussian" if kernel_kind == "gaussian" else kernel_kind,
                            2, lam)
        est = np.empty((reps, len(lags)))

        def work(bounds, si=si, region=region, kernel=kernel):
            lo, hi = bounds
            block = np.empty((hi - lo, len(lags)))
            for r in range(lo, hi):
                base = seed + 2 * (si * reps + r)
                pts = sample_poisson(region, nu, base)
                while len(pts) < 2:
                    base += 10_000_019
                    pts = sample_poisson(region, nu, base)
                data = simulate_separable_field_st(field, pts, region, base + 1)
                for col, lag in enumerate(lags):
                    block[r - lo, col] = kernel_cov_st(data, lag, kernel, nu=nu).value
            return lo, block

        _run_chunks(work, _chunks(reps), workers, est)
        for col, lag in enumerate(lags):
            true = float(field.cov(np.array(lag.h), lag.u))
            mean = float(est[:, col].mean())
            se = float(est[:, col].std(ddof=1) / math.sqrt(reps))
            rows.append((f"{side:g}x{side:g}", lag.label(), true, mean,
                         abs(mean - true), se))
    return Report(title="kernel estimator bias vs window size",
                  columns=("window", "lag", "true_cov", "mean_estimate",
                           "abs_bias", "mc_stderr"),
                  rows=rows)
