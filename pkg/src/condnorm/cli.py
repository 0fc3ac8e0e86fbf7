"""Command-line front end.

    condnorm <clean|normalize|impute|ccf|lagtime|synth> --config PATH
             [--seed N] [--threads N] [--out DIR]

Exit codes: 0 success, 2 input/schema error, 3 fit/estimation error,
4 bootstrap failure. All outputs are plain CSV (plot-ready; no graphics
dependencies here).
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click
import numpy as np

from . import io
from .ar import TimeSeriesImputer
from .basis import BasisSpec, fourier_terms
from .config import RunConfig, apply_overrides, load_config
from .crosscorr import conditional_ccf, estimate_lag_time, evaluate_lag_time, sieve_bootstrap_ci
from .errors import (
    AlignmentError,
    BootstrapError,
    CondnormError,
    SchemaError,
)
from .gam import corr_link_inv
from .normalize import ConditionalNormalizer
from .series import (
    CovariateSet,
    aggregate,
    linear_interpolate,
    remove_range_flagged,
    remove_wiper_anomalies,
)
from .simulate import SimSpec, simulate

Z95 = 1.959963984540054


def _fail(message: str, code: int):
    click.echo(f"condnorm: error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        fn()
    except (SchemaError, AlignmentError, OSError) as exc:
        _fail(str(exc), 2)
    except BootstrapError as exc:
        _fail(str(exc), 4)
    except (CondnormError, ValueError) as exc:
        _fail(str(exc), 3)


def _config_options(fn):
    fn = click.option("--config", "config_path", required=True, type=click.Path())(fn)
    fn = click.option("--seed", type=int, default=None, help="override the configured seed")(fn)
    fn = click.option("--threads", type=int, default=None, help="worker threads for bootstrap")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="output directory")(fn)
    return fn


def _load_config(config_path, seed, threads, out) -> RunConfig:
    config = load_config(config_path)
    return apply_overrides(config, seed=seed, threads=threads, out=out, env=os.environ)


def _outdir(config: RunConfig) -> Path:
    path = Path(config.output)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _require(config: RunConfig, *fields):
    for name in fields:
        if not getattr(config, name):
            raise SchemaError(f"config is missing the {name!r} setting")


def _covariates_and_specs(config: RunConfig, table: CovariateSet):
    """Covariate set in role order plus resolved basis specs.

    When harmonic terms are configured, sin/cos columns of the time index
    are appended as unpenalized linear terms.
    """
    _require(config, "covariates")
    Z = table.select(list(config.covariates))
    specs = config.basis_specs(config.covariates)
    if config.fourier_period_seconds:
        steps = config.fourier_period_seconds / Z.delta
        t = (Z.timestamps - Z.timestamps[0]) / Z.delta
        terms = fourier_terms(t, steps, config.fourier_pairs)
        Z = CovariateSet(
            timestamps=Z.timestamps,
            names=tuple(Z.names) + terms.column_names,
            values=np.column_stack([Z.values, terms.matrix]),
            mask=np.column_stack([Z.mask, np.zeros(terms.matrix.shape, dtype=bool)]),
            delta=Z.delta,
        )
        specs = specs + [BasisSpec(kind="linear")] * terms.matrix.shape[1]
    return Z, specs


def _load_table(config: RunConfig) -> CovariateSet:
    _require(config, "data")
    return io.load_covariates(config.data, delta=config.delta_seconds)


@click.group()
def main():
    """Conditional normalization toolkit for sensor time series."""


@main.command()
@_config_options
def clean(config_path, seed, threads, out):
    """Apply range flags, wiper removal, aggregation and interpolation."""

    def run():
        config = _load_config(config_path, seed, threads, out)
        outdir = _outdir(config)
        table = _load_table(config)
        flag_records = io.load_flags(config.flags) if config.flags else {}
        report = []
        for name in table.names:
            series = table.column(name)
            if config.range_flags and flag_records:
                flags = io.flags_for_series(series, flag_records, name)
                before = series.n_missing
                series = remove_range_flagged(series, flags)
                report.append((name, "range_flag", series.n_missing - before))
            if name in config.wiper_variables:
                before = series.n_missing
                series = remove_wiper_anomalies(series, config.wiper_period, config.wiper_phase)
                report.append((name, "wiper", series.n_missing - before))
            if config.aggregate_seconds:
                series = aggregate(series, config.aggregate_seconds)
            if config.interpolate_covariates and name in config.covariates:
                series, filled = linear_interpolate(series)
                report.append((name, "interpolated", int(filled.sum())))
            report.append((name, "missing_after", series.n_missing))
            io.write_series(outdir / f"clean_{name}.csv", series)
        io.write_csv(
            outdir / "cleaning_report.csv",
            ["variable", "rule", "count"],
            [(v, r, str(c)) for v, r, c in report],
        )
        click.echo(f"wrote cleaned series for {len(table.names)} variables to {outdir}")

    _guarded(run)


@main.command()
@_config_options
def normalize(config_path, seed, threads, out):
    """Fit mean/variance models and write the normalized response."""

    def run():
        config = _load_config(config_path, seed, threads, out)
        _require(config, "response")
        outdir = _outdir(config)
        table = _load_table(config)
        y = table.column(config.response)
        Z, specs = _covariates_and_specs(config, table)
        normalizer = ConditionalNormalizer(specs=specs).fit(y, Z)
        result = normalizer.transform(y, Z)
        io.write_csv(
            outdir / "normalized.csv",
            ["timestamp", "y_star", "mean_hat", "var_hat"],
            [
                (
                    io.format_timestamp(ts),
                    "" if result.mask[i] else io.format_value(result.values[i]),
                    io.format_value(result.mean[i]),
                    io.format_value(result.variance[i]),
                )
                for i, ts in enumerate(result.series.timestamps)
            ],
        )
        normalizer.mean_model_.save(outdir / "mean_model.json")
        normalizer.var_model_.save(outdir / "var_model.json")
        click.echo(f"wrote normalized series and models to {outdir}")

    _guarded(run)


@main.command()
@_config_options
def impute(config_path, seed, threads, out):
    """Fill masked response values through the normalize/AR/smooth pipeline."""

    def run():
        config = _load_config(config_path, seed, threads, out)
        _require(config, "response")
        outdir = _outdir(config)
        table = _load_table(config)
        y = table.column(config.response)
        Z, specs = _covariates_and_specs(config, table)
        result = TimeSeriesImputer(
            specs=specs, max_order=config.impute_max_order, nonnegative=config.nonnegative
        ).fit_transform(y, Z)
        series = result.series
        io.write_csv(
            outdir / "imputed.csv",
            ["timestamp", "value", "imputed_flag", "lo95", "hi95"],
            [
                (
                    io.format_timestamp(ts),
                    "" if series.mask[i] else io.format_value(series.values[i]),
                    str(int(result.imputed[i])),
                    io.format_value(result.lower95[i]),
                    io.format_value(result.upper95[i]),
                )
                for i, ts in enumerate(series.timestamps)
            ],
        )
        click.echo(
            f"imputed {int(result.imputed.sum())} values "
            f"(order {result.ar_model.order} autoregression); wrote {outdir / 'imputed.csv'}"
        )

    _guarded(run)


def _fit_ccf(config: RunConfig, table: CovariateSet):
    _require(config, "upstream", "downstream")
    x = table.column(config.upstream)
    y = table.column(config.downstream)
    Z, specs = _covariates_and_specs(config, table)
    x_star = ConditionalNormalizer(specs=specs).fit(x, Z).transform(x, Z)
    y_star = ConditionalNormalizer(specs=specs).fit(y, Z).transform(y, Z)
    models = conditional_ccf(
        x_star, y_star, Z, max_lag=config.max_lag, specs=specs, threads=config.threads
    )
    return x_star, y_star, Z, models


def _write_correlation_matrix(path, timestamps, rows, matrix, lags, extra=None):
    header = ["timestamp"] + ([extra[0]] if extra else []) + [f"lag_{k}" for k in lags]
    body = []
    for i, r in enumerate(rows):
        rec = [io.format_timestamp(timestamps[r])]
        if extra:
            rec.append(io.format_value(extra[1][i]))
        rec += [io.format_value(v) for v in matrix[i]]
        body.append(rec)
    io.write_csv(path, header, body)


@main.command()
@_config_options
@click.option("--lag", "term_lag", type=int, default=1, help="lag for the smooth-term tables")
def ccf(config_path, seed, threads, out, term_lag):
    """Fit per-lag conditional cross-correlation models."""

    def run():
        config = _load_config(config_path, seed, threads, out)
        outdir = _outdir(config)
        table = _load_table(config)
        x_star, y_star, Z, models = _fit_ccf(config, table)
        rows = np.flatnonzero(~Z.any_missing)
        matrix = models.correlation_matrix(Z.values[rows, :])
        _write_correlation_matrix(
            outdir / "ccf_correlations.csv", Z.timestamps, rows, matrix, models.lags
        )
        for skipped_lag, reason in models.skipped.items():
            click.echo(f"lag {skipped_lag} skipped: {reason}", err=True)

        by_lag = {m.lag: m for m in models.models}
        if term_lag in by_lag:
            model = by_lag[term_lag].model
            obs = Z.values[rows, :]
            medians = np.median(obs, axis=0)
            for j, cov_name in enumerate(Z.names):
                if model.terms_[j].dropped:
                    continue
                grid = np.linspace(obs[:, j].min(), obs[:, j].max(), 100)
                zq = np.tile(medians, (grid.size, 1))
                zq[:, j] = grid
                eta, se = model.predict_link(zq, se=True)
                io.write_csv(
                    outdir / f"ccf_terms_lag{term_lag}_{cov_name}.csv",
                    [cov_name, "link", "se_link", "lo95_link", "hi95_link", "correlation"],
                    [
                        (
                            io.format_value(grid[i]),
                            io.format_value(eta[i]),
                            io.format_value(se[i]),
                            io.format_value(eta[i] - Z95 * se[i]),
                            io.format_value(eta[i] + Z95 * se[i]),
                            io.format_value(corr_link_inv(eta[i])),
                        )
                        for i in range(grid.size)
                    ],
                )
        click.echo(f"fit {len(models.models)} lag models; wrote tables to {outdir}")

    _guarded(run)


def _interval_columns(estimate, levels):
    cols = []
    for level in levels:
        pct = round((1.0 - level) * 100)
        lo, hi = estimate.intervals[float(level)]
        cols.append((f"lo{pct}", lo))
        cols.append((f"hi{pct}", hi))
    return cols


@main.command()
@_config_options
@click.option(
    "--profile",
    type=click.Choice(["median"]),
    default=None,
    help="also estimate lag time along each covariate, others held at medians",
)
def lagtime(config_path, seed, threads, out, profile):
    """Estimate per-time lag times with sieve-bootstrap intervals."""

    def run():
        config = _load_config(config_path, seed, threads, out)
        outdir = _outdir(config)
        table = _load_table(config)
        x_star, y_star, Z, models = _fit_ccf(config, table)

        estimate = sieve_bootstrap_ci(
            models,
            Z,
            replicates=config.replicates,
            levels=config.levels,
            seed=config.seed,
            threads=config.threads,
        )
        rows = estimate.row_indices
        interval_cols = _interval_columns(estimate, config.levels)
        io.write_csv(
            outdir / "lagtime.csv",
            ["timestamp", "d_t", "c_max"] + [name for name, _ in interval_cols],
            [
                [
                    io.format_timestamp(Z.timestamps[r]),
                    str(int(estimate.lags[i])),
                    io.format_value(estimate.max_correlation[i]),
                ]
                + [str(int(col[i])) for _, col in interval_cols]
                for i, r in enumerate(rows)
            ],
        )

        evaluation = evaluate_lag_time(x_star, y_star, Z, estimate, models)
        io.write_csv(
            outdir / "lagtime_evaluation.csv",
            ["fraction", "fraction_pairwise", "fraction_excluding_selected", "n_rows", "n_dropped"],
            [
                (
                    io.format_value(evaluation.fraction),
                    io.format_value(evaluation.fraction_pairwise),
                    io.format_value(evaluation.fraction_excluding_selected),
                    str(evaluation.row_indices.size),
                    str(estimate.n_dropped),
                )
            ],
        )
        _write_correlation_matrix(
            outdir / "lagtime_correlations.csv",
            Z.timestamps,
            evaluation.row_indices,
            evaluation.per_lag,
            evaluation.lags,
            extra=("c_dt", evaluation.fitted_best),
        )

        if profile == "median":
            obs = Z.values[~Z.any_missing, :]
            medians = np.median(obs, axis=0)
            for j, cov_name in enumerate(Z.names):
                if cov_name.startswith(("sin_", "cos_")):
                    continue
                grid = np.linspace(obs[:, j].min(), obs[:, j].max(), 100)
                zq = np.tile(medians, (grid.size, 1))
                zq[:, j] = grid
                prof = sieve_bootstrap_ci(
                    models,
                    zq,
                    replicates=config.replicates,
                    levels=config.levels,
                    seed=config.seed,
                    threads=config.threads,
                )
                prof_cols = _interval_columns(prof, config.levels)
                io.write_csv(
                    outdir / f"lagtime_profile_{cov_name}.csv",
                    [cov_name, "d_t", "c_max"] + [name for name, _ in prof_cols],
                    [
                        [
                            io.format_value(grid[i]),
                            str(int(prof.lags[i])),
                            io.format_value(prof.max_correlation[i]),
                        ]
                        + [str(int(col[i])) for _, col in prof_cols]
                        for i in range(grid.size)
                    ],
                )
        click.echo(
            f"lag-time estimates for {rows.size} rows "
            f"(evaluation fraction {evaluation.fraction:.3f}); wrote {outdir / 'lagtime.csv'}"
        )

    _guarded(run)


@main.command()
@_config_options
def synth(config_path, seed, threads, out):
    """Generate a synthetic dataset from the config's synth section."""

    def run():
        config = _load_config(config_path, seed, threads, out)
        outdir = _outdir(config)
        params = dict(config.synth)
        if not params:
            raise SchemaError("config is missing the 'synth' section")
        if seed is not None:
            params["seed"] = seed
        params.setdefault("seed", config.seed)
        for key in ("ar_coefficients", "lag_values"):
            if key in params:
                params[key] = tuple(params[key])
        try:
            spec = SimSpec(**params)
        except TypeError as exc:
            raise SchemaError(f"bad synth settings: {exc}") from None
        x, y, Z, truth = simulate(spec)

        names = ["y"] + list(Z.names) + (["x"] if x is not None else [])
        header = ["timestamp"] + names
        body = []
        for i, ts in enumerate(y.timestamps):
            rec = [io.format_timestamp(ts), "" if y.mask[i] else io.format_value(y.values[i])]
            rec += [io.format_value(v) for v in Z.values[i]]
            if x is not None:
                rec.append(io.format_value(x.values[i]))
            body.append(rec)
        io.write_csv(outdir / "synth_data.csv", header, body)

        truth_header = ["timestamp", "mean", "variance", "noise", "y_full"]
        if truth.lag is not None:
            truth_header.append("lag")
        truth_body = []
        for i, ts in enumerate(y.timestamps):
            rec = [
                io.format_timestamp(ts),
                io.format_value(truth.mean[i]),
                io.format_value(truth.variance[i]),
                io.format_value(truth.noise[i]),
                io.format_value(truth.y_full[i]),
            ]
            if truth.lag is not None:
                rec.append(str(int(truth.lag[i])))
            truth_body.append(rec)
        io.write_csv(outdir / "synth_truth.csv", truth_header, truth_body)
        click.echo(f"wrote synthetic dataset ({spec.n} rows) to {outdir}")

    _guarded(run)


if __name__ == "__main__":
    main()
