"""Command-line interface.

Subcommands: ``table1`` (the convergence experiment), ``kernel-consistency``,
``sigma`` (asymptotic covariance matrices), ``estimate`` (covariance
estimates on a dataset) and ``simulate`` (data generation).

Any flag may also be set from a config file of ``key=value`` lines via
``--config``; explicit flags override the file.  The environment variable
``STCOV_SEED`` overrides the built-in default seed.
"""

from __future__ import annotations

import os
import sys

import click

from . import asymcov, datasets, estimators, harness, simulate

DEFAULT_SEED = 12345


def _read_config(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise click.ClickException(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(ctx_params: dict, config_path, casts: dict) -> dict:
    """Merge defaults, config-file values and explicit flags.

    Click stores flag values in ``ctx_params``; entries that are None fall
    back to the config file (cast per ``casts``) and then to the command
    defaults supplied by the caller.
    """
    merged = dict(ctx_params)
    if config_path:
        cfg = _read_config(config_path)
        for key, raw in cfg.items():
            if key not in casts:
                raise click.ClickException(f"unknown config key {key!r}")
            if merged.get(key) is None:
                merged[key] = casts[key](raw)
    return merged


def _default_seed() -> int:
    env = os.environ.get("STCOV_SEED")
    return int(env) if env else DEFAULT_SEED


def _int_list(raw: str) -> tuple:
    return tuple(int(x) for x in str(raw).replace(",", " ").split())


def _float_list(raw: str) -> tuple:
    return tuple(float(x) for x in str(raw).replace(",", " ").split())


def _parse_lags(vector_lags, iso_lags) -> datasets.LagSet:
    lags = []
    for spec in vector_lags:
        parts = [float(x) for x in spec.split(",")]
        if len(parts) != 3:
            raise click.ClickException(f"--lag expects h1,h2,u, got {spec!r}")
        lags.append(datasets.SpaceTimeLag((parts[0], parts[1]), int(parts[2])))
    for spec in iso_lags:
        parts = [float(x) for x in spec.split(",")]
        if len(parts) != 2:
            raise click.ClickException(f"--iso-lag expects radius,u, got {spec!r}")
        lags.append(datasets.IsotropicLag(parts[0], int(parts[1])))
    if not lags:
        lags = [datasets.IsotropicLag(1.0, 0), datasets.IsotropicLag(1.0, 1)]
    return datasets.LagSet(lags)


@click.group()
def main():
    """Space-time covariance estimation and asymptotic diagnostics."""


@main.command("table1")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="key=value file supplying any flag below")
@click.option("--grid-side", type=int, default=None)
@click.option("--phi", type=float, default=None)
@click.option("--self-coef", type=float, default=None)
@click.option("--neighbor-coef", type=float, default=None)
@click.option("--n-list", type=str, default=None, help="comma-separated series lengths")
@click.option("--reps", type=int, default=None, help="replicates per series length")
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default=None, help="output file")
@click.option("--format", "fmt", type=click.Choice(["csv", "markdown"]), default=None)
@click.option("--plot", type=click.Path(), default=None, help="diagnostic trend plot (png)")
def table1_cmd(config_path, **params):
    """Run the joint-normality convergence experiment."""
    casts = {"grid_side": int, "phi": float, "self_coef": float,
             "neighbor_coef": float, "n_list": _int_list, "reps": int,
             "seed": int, "workers": int, "out": str, "fmt": str, "plot": str}
    p = _resolve(params, config_path, casts)
    if isinstance(p.get("n_list"), str):
        p["n_list"] = _int_list(p["n_list"])
    config = harness.ExperimentConfig(
        grid_side=p["grid_side"] if p["grid_side"] is not None else 3,
        phi=p["phi"] if p["phi"] is not None else 1.0,
        self_coef=p["self_coef"] if p["self_coef"] is not None else 0.2,
        neighbor_coef=p["neighbor_coef"] if p["neighbor_coef"] is not None else 0.1,
        n_list=p["n_list"] if p["n_list"] is not None else harness.DEFAULT_N_LIST,
        n_reps=p["reps"] if p["reps"] is not None else 5000,
        seed=p["seed"] if p["seed"] is not None else _default_seed(),
        workers=p["workers"] if p["workers"] is not None else 1,
    )
    report = harness.run_table1(config)
    text = harness.emit_report(report, fmt=p["fmt"] or "csv", path=p["out"],
                               plot=p["plot"])
    click.echo(text, nl=False)


@main.command("kernel-consistency")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--sizes", type=str, default=None, help="comma-separated window sides")
@click.option("--nu", type=float, default=None, help="point intensity")
@click.option("--sigma2", type=float, default=None)
@click.option("--phi-s", type=float, default=None)
@click.option("--phi-t", type=float, default=None)
@click.option("--bandwidth-c", type=float, default=None)
@click.option("--n-time", type=int, default=None)
@click.option("--reps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "markdown"]), default=None)
def kernel_consistency_cmd(config_path, **params):
    """Check that kernel covariance estimates approach the model covariance."""
    casts = {"sizes": _float_list, "nu": float, "sigma2": float, "phi_s": float,
             "phi_t": float, "bandwidth_c": float, "n_time": int, "reps": int,
             "seed": int, "workers": int, "out": str, "fmt": str}
    p = _resolve(params, config_path, casts)
    if isinstance(p.get("sizes"), str):
        p["sizes"] = _float_list(p["sizes"])
    field = simulate.GaussianFieldSpec(
        sigma2=p["sigma2"] if p["sigma2"] is not None else 1.0,
        phi_s=p["phi_s"] if p["phi_s"] is not None else 1.0,
        phi_t=p["phi_t"] if p["phi_t"] is not None else 1.0,
    )
    report = harness.run_kernel_consistency(
        field,
        sizes=p["sizes"] if p["sizes"] is not None else (8.0, 16.0, 32.0),
        nu=p["nu"] if p["nu"] is not None else 1.0,
        bandwidth_c=p["bandwidth_c"] if p["bandwidth_c"] is not None else 1.0,
        reps=p["reps"] if p["reps"] is not None else 200,
        seed=p["seed"] if p["seed"] is not None else _default_seed(),
        n_time=p["n_time"] if p["n_time"] is not None else 20,
        workers=p["workers"] if p["workers"] is not None else 1,
    )
    text = harness.emit_report(report, fmt=p["fmt"] or "csv", path=p["out"])
    click.echo(text, nl=False)


@main.command("sigma")
@click.option("--method", type=click.Choice(["station-gaussian", "block", "plugin",
                                             "kernel"]), required=True)
@click.option("--data", "data_path", type=click.Path(exists=True), default=None,
              help="station CSV (block and plugin methods)")
@click.option("--grid-side", type=int, default=3)
@click.option("--phi", type=float, default=1.0)
@click.option("--self-coef", type=float, default=0.2)
@click.option("--neighbor-coef", type=float, default=0.1)
@click.option("--lag", "vector_lags", multiple=True, help="vector lag h1,h2,u")
@click.option("--iso-lag", "iso_lags", multiple=True, help="isotropic lag radius,u")
@click.option("--block-len", type=int, default=100)
@click.option("--window", type=str, default="5,5", help="plugin window w_s,w_t")
@click.option("--mode", type=click.Choice(["space-time", "full-3d"]),
              default="space-time", help="kernel method sampling regime")
@click.option("--sigma2", type=float, default=1.0, help="kernel method field variance")
@click.option("--phi-s", type=float, default=1.0)
@click.option("--phi-t", type=float, default=1.0)
@click.option("--bandwidth", type=float, default=0.5)
@click.option("--nu", type=float, default=1.0)
@click.option("--out", type=click.Path(), default=None)
def sigma_cmd(method, data_path, grid_side, phi, self_coef, neighbor_coef,
              vector_lags, iso_lags, block_len, window, mode, sigma2, phi_s,
              phi_t, bandwidth, nu, out):
    """Compute an asymptotic covariance matrix."""
    lag_set = _parse_lags(vector_lags, iso_lags)
    if method == "station-gaussian":
        model = simulate.build_var_model(grid_side, phi, self_coef, neighbor_coef)
        sigma = asymcov.sigma_station_gaussian(
            asymcov.CrossCovModel.from_var(model), model.sites, lag_set)
    elif method == "block":
        if data_path is None:
            raise click.ClickException("--data is required for the block method")
        data = datasets.load_station_csv(data_path)
        sigma = asymcov.sigma_block_subsample(data, lag_set, block_len)
    elif method == "kernel":
        field = simulate.GaussianFieldSpec(sigma2=sigma2, phi_s=phi_s, phi_t=phi_t)
        for lag in lag_set:
            if not isinstance(lag, datasets.SpaceTimeLag):
                raise click.ClickException("kernel method needs vector lags")
        if mode == "space-time":
            kern = estimators.KernelSpec("gaussian", 2, bandwidth)
            sigma = asymcov.sigma_kernel_theoretical(field, lag_set, kern, nu=nu,
                                                     mode=mode)
        else:
            kern = estimators.KernelSpec("gaussian", 3, bandwidth)
            ks = [(lag.h[0], lag.h[1], float(lag.u)) for lag in lag_set]
            sigma = asymcov.sigma_kernel_theoretical(field, ks, kern, nu=nu,
                                                     mode=mode)
    else:
        if data_path is None:
            raise click.ClickException("--data is required for the plugin method")
        lattice = datasets.station_to_lattice(datasets.load_station_csv(data_path))
        ws, wt = (int(x) for x in window.split(","))
        sigma = asymcov.sigma_lattice_plugin(lattice, lag_set, window=(ws, wt))
    click.echo(f"# method={sigma.method} scaling={sigma.scaling} "
               f"min_eigenvalue={sigma.min_eigenvalue():.6g}")
    lines = ["lag," + ",".join(sigma.labels)]
    for lab, row in zip(sigma.labels, sigma.values):
        lines.append(lab + "," + ",".join(f"{x:.6g}" for x in row))
    click.echo("\n".join(lines))
    if out:
        sigma.to_csv(out)


@main.command("estimate")
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--regime", type=click.Choice(["station", "lattice", "kernel-st", "kernel-3d"]),
              required=True)
@click.option("--lag", "vector_lags", multiple=True, help="vector lag h1,h2,u (or k1,k2,k3)")
@click.option("--iso-lag", "iso_lags", multiple=True, help="isotropic lag radius,u")
@click.option("--region", type=str, default=None,
              help="box as x0,y0,x1,y1[,n_time] or x0,y0,z0,x1,y1,z1 (point data)")
@click.option("--bandwidth", type=float, default=None)
@click.option("--bandwidth-c", type=float, default=1.0)
@click.option("--kernel", "kernel_kind", type=click.Choice(["gaussian", "epanechnikov-product"]),
              default="gaussian")
@click.option("--nu", type=float, default=None, help="intensity; estimated when omitted")
@click.option("--mean-corrected", is_flag=True, default=False)
def estimate_cmd(data_path, regime, vector_lags, iso_lags, region, bandwidth,
                 bandwidth_c, kernel_kind, nu, mean_corrected):
    """Estimate covariances at the given lags and print lag,value,pair_count."""
    lag_set = _parse_lags(vector_lags, iso_lags)
    rows = []
    if regime in ("station", "lattice"):
        station = datasets.load_station_csv(data_path)
        data = station if regime == "station" else datasets.station_to_lattice(station)
        for lag in lag_set:
            if regime == "station":
                fn = lambda d, lag=lag: estimators.moment_cov_station(d, lag)
            else:
                fn = lambda d, lag=lag: estimators.moment_cov_lattice(d, lag)
            est = estimators.mean_correct(fn, data).estimate if mean_corrected else fn(data)
            rows.append((lag.label(), est.value, est.pair_count))
    else:
        if region is None:
            raise click.ClickException("--region is required for point data")
        parts = [float(x) for x in region.split(",")]
        if regime == "kernel-st":
            if len(parts) not in (4, 5):
                raise click.ClickException("space-time region needs x0,y0,x1,y1[,n_time]")
            n_time = int(parts[4]) if len(parts) == 5 else None
            reg = datasets.RegionSpec(parts[0:2], parts[2:4], n_time=n_time or 1)
            data = datasets.load_point_csv(data_path, datasets.SPACE_TIME, reg)
            if n_time is None:
                n_time = int(data.points[:, 2].max()) if len(data) else 1
                reg = datasets.RegionSpec(parts[0:2], parts[2:4], n_time=n_time)
                data = datasets.load_point_csv(data_path, datasets.SPACE_TIME, reg)
            lam = bandwidth or estimators.default_bandwidth(reg, datasets.SPACE_TIME,
                                                            bandwidth_c)
            kern = estimators.KernelSpec(kernel_kind, 2, lam)
            for lag in lag_set:
                if not isinstance(lag, datasets.SpaceTimeLag):
                    raise click.ClickException("kernel regimes need vector lags")
                est = estimators.kernel_cov_st(data, lag, kern, nu=nu)
                rows.append((lag.label(), est.value, est.pair_count))
        else:
            if len(parts) != 6:
                raise click.ClickException("3-d region needs x0,y0,z0,x1,y1,z1")
            reg = datasets.RegionSpec(parts[0:3], parts[3:6])
            data = datasets.load_point_csv(data_path, datasets.FULL_3D, reg)
            lam = bandwidth or estimators.default_bandwidth(reg, datasets.FULL_3D,
                                                            bandwidth_c)
            kern = estimators.KernelSpec(kernel_kind, 3, lam)
            for lag in lag_set:
                if not isinstance(lag, datasets.SpaceTimeLag):
                    raise click.ClickException("kernel regimes need vector lags")
                k3 = (lag.h[0], lag.h[1], float(lag.u))
                est = estimators.kernel_cov_r3(data, k3, kern, nu=nu)
                rows.append((lag.label(), est.value, est.pair_count))
    click.echo("lag,value,pair_count")
    for lab, value, count in rows:
        click.echo(f"{lab},{value:.6g},{count:.6g}")


@main.command("simulate")
@click.option("--kind", type=click.Choice(["var", "poisson-gaussian"]), required=True)
@click.option("--grid-side", type=int, default=3)
@click.option("--phi", type=float, default=1.0)
@click.option("--self-coef", type=float, default=0.2)
@click.option("--neighbor-coef", type=float, default=0.1)
@click.option("--n", "n_time", type=int, default=100)
@click.option("--side", type=float, default=8.0, help="spatial window side (point data)")
@click.option("--nu", type=float, default=1.0)
@click.option("--sigma2", type=float, default=1.0)
@click.option("--phi-s", type=float, default=1.0)
@click.option("--phi-t", type=float, default=1.0)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
def simulate_cmd(kind, grid_side, phi, self_coef, neighbor_coef, n_time, side,
                 nu, sigma2, phi_s, phi_t, seed, out):
    """Generate a dataset and write it as CSV."""
    seed = seed if seed is not None else _default_seed()
    if kind == "var":
        model = simulate.build_var_model(grid_side, phi, self_coef, neighbor_coef)
        data = simulate.simulate_var(model, n_time, seed)
        datasets.save_station_csv(data, out)
        click.echo(f"wrote {data.n_sites} sites x {data.n} times to {out}")
    else:
        region = datasets.RegionSpec((0.0, 0.0), (side, side), n_time=n_time)
        pts = simulate.sample_poisson(region, nu, seed)
        field = simulate.GaussianFieldSpec(sigma2=sigma2, phi_s=phi_s, phi_t=phi_t)
        data = simulate.simulate_separable_field_st(field, pts, region, seed + 1)
        datasets.save_point_csv(data, out)
        click.echo(f"wrote {len(data)} marked points to {out}")


def run(args=None) -> int:
    try:
        main(args=args, standalone_mode=False)
    except click.ClickException as e:
        click.echo(f"error: {e.format_message()}", err=True)
        return 1
    except click.exceptions.Abort:
        return 130
    except Exception as e:  # estimator/config errors surface as one line
        click.echo(f"error: {e}", err=True)
        return 1
    return 0


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
