"""Command line interface sequencing the pipeline.

Subcommands: fit, predict, adjust, diagnose, simulate, export-basis. Every
option can also be set through environment variables prefixed FIELDCAST_
(for example FIELDCAST_FIT_HORIZON). Failures exit nonzero and print a
machine-readable error record as JSON on stderr.
"""

import csv
import functools
import json
import logging
import os
import sys
import tempfile
from datetime import timedelta

import click
import numpy as np

from fieldcast import __version__, artifact, diagnostics, get_backend, pca, predict
from fieldcast.config import PipelineConfig
from fieldcast.errors import FieldcastError
from fieldcast.panel import ingest, write_panel
from fieldcast.pipeline import fit_model
from fieldcast.simulate import simulation_config_from_dict, simulate_panel

logger = logging.getLogger(__name__)


def _fail(exc: Exception) -> None:
    record = {"error": type(exc).__name__, "message": str(exc)}
    click.echo(json.dumps(record), err=True)
    sys.exit(2)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FieldcastError as exc:
            _fail(exc)
        except OSError as exc:
            _fail(exc)
    return wrapper


def _atomic_write(path, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _load_config(config_path, **overrides) -> PipelineConfig:
    cfg = PipelineConfig.from_file(config_path) if config_path else PipelineConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


@click.group()
@click.version_option(__version__)
def cli():
    """Model spatiotemporal forecast errors and bias-correct forecasts."""


@cli.command("fit")
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Panel table: date,city_id,city_name,longitude,latitude,"
                   "horizon_days,forecast_F,actual_F.")
@click.option("--out", required=True, type=click.Path(), help="Artifact directory.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Pipeline config JSON.")
@click.option("--horizon", type=click.IntRange(0, 6), default=None,
              help="Forecast horizon in days.")
@click.option("--k", type=int, default=None, help="Number of spatial basis functions.")
@click.option("--seed", type=int, default=None, help="Seed recorded in the config snapshot.")
@_guarded
def fit_cmd(data, out, config_path, horizon, k, seed):
    """Fit the full model on a panel and save the artifact."""
    cfg = _load_config(config_path, horizon=horizon, k=k, seed=seed)
    panel = ingest(data, cfg.horizon)
    model = fit_model(panel, cfg)
    artifact.save_model(model, out)
    ev = model.spatial.explained_variance[:cfg.k]
    click.echo(f"fitted {model.beta.values.shape[0]} days at horizon {cfg.horizon} "
               f"with k={cfg.k} (backend: {get_backend()})")
    click.echo(f"explained variance: first={ev[0]:.3f} last={ev[-1]:.3f} "
               f"total={ev.sum():.3f}")
    click.echo(f"sigma2={model.sigma2:.4f}; artifact written to {out}")


@cli.command("predict")
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Panel table providing locations and any days newer than "
                   "the artifact state.")
@click.option("--out", required=True, type=click.Path(),
              help="Output CSV: city_id,longitude,latitude,predicted_error,predictive_sd.")
@_guarded
def predict_cmd(model_dir, data, out):
    """Predict the next day's error field after the newest available day."""
    model = artifact.load_model(model_dir)
    panel = ingest(data, model.config.horizon)
    state = model.state
    lons, lats = panel.lons, panel.lats
    design = pca.eval_basis(model.spatial, lons, lats)
    mean_at = model.spatial.mean.evaluate(model.spatial.spline, lons, lats)
    for i, d in enumerate(panel.dates):
        if d <= state.date:
            continue
        gap = (d - state.date).days - 1
        for _ in range(max(gap, 0)):
            state = predict.advance_state(state, model.garch_fits,
                                          state.date + timedelta(days=1), None)
        try:
            beta, _, _ = predict.project_day(model.spatial, lons, lats, panel.errors[i],
                                             design=design, mean_at=mean_at)
        except FieldcastError:
            beta = None
        state = predict.advance_state(state, model.garch_fits, d, beta)
    target = state.date + timedelta(days=1)
    yhat, var = predict.predict_error_field(model.spatial, model.garch_fits,
                                            model.sigma2, state, lons, lats,
                                            design=design, mean_at=mean_at)
    rows = [[loc.city_id, repr(loc.lon), repr(loc.lat), repr(float(yhat[j])),
             repr(float(np.sqrt(var[j])))] for j, loc in enumerate(panel.locations)]
    _atomic_write(out, _csv_text(
        ["city_id", "longitude", "latitude", "predicted_error", "predictive_sd"], rows))
    click.echo(f"predicted error field for {target.isoformat()} "
               f"({len(rows)} locations) written to {out}")


@cli.command("adjust")
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Panel table with raw forecasts to adjust.")
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--mode", type=click.Choice(["filtered", "walkforward"]), default=None,
              help="Rolling evaluation protocol (default from config).")
@_guarded
def adjust_cmd(model_dir, data, out, mode):
    """Adjust forecasts one day ahead over a panel and summarize the errors."""
    model = artifact.load_model(model_dir)
    panel = ingest(data, model.config.horizon)
    mode = mode or model.config.mode
    records, summary = predict.evaluate_panel(
        model, panel, mode=mode,
        min_train_days=model.config.min_train_days,
        refit_every=model.config.refit_every)
    os.makedirs(out, exist_ok=True)
    rows = [[r.date.isoformat(), r.city_id, repr(r.raw_forecast),
             repr(r.predicted_error), repr(r.adjusted_forecast),
             "" if r.actual is None else repr(r.actual),
             "" if r.raw_error is None else repr(r.raw_error),
             "" if r.adjusted_error is None else repr(r.adjusted_error),
             repr(r.predictive_sd)] for r in records]
    _atomic_write(os.path.join(out, "adjusted.csv"), _csv_text(
        ["date", "city_id", "raw_forecast", "predicted_error", "adjusted_forecast",
         "actual", "raw_error", "adjusted_error", "predictive_sd"], rows))
    _atomic_write(os.path.join(out, "summary.json"),
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")
    raw, adj = summary["raw_error"], summary["adjusted_error"]
    click.echo(f"{len(records)} adjusted forecasts ({mode} mode) written to {out}")
    if raw["n"]:
        click.echo(f"raw error: mean={raw['mean']:.3f} sd={raw['sd']:.3f}; "
                   f"adjusted: mean={adj['mean']:.3f} sd={adj['sd']:.3f}")


@cli.command("diagnose")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--model", "model_dir", type=click.Path(exists=True),
              help="Artifact whose basis defines the residuals; when absent a "
                   "basis is fit from the panel.")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--horizon", type=click.IntRange(0, 6), default=None)
@click.option("--k-values", default="0,1,2,5,10,20",
              help="Comma-separated K values for the basis-count curve.")
@_guarded
def diagnose_cmd(data, out, model_dir, config_path, horizon, k_values):
    """Write correlation matrices, correlograms, and the K-selection curve."""
    ks = [int(v) for v in k_values.split(",") if v.strip() != ""]
    if model_dir:
        model = artifact.load_model(model_dir)
        cfg = model.config
        panel = ingest(data, cfg.horizon)
        spatial = model.spatial
    else:
        cfg = _load_config(config_path, horizon=horizon)
        cfg.k = max(max(ks, default=1), 1)
        panel = ingest(data, cfg.horizon)
        from fieldcast.pipeline import make_tensor_basis
        from fieldcast.pca import build_basis
        from fieldcast.surface import estimate_mean, fit_all_days

        basis = make_tensor_basis(cfg.lon_min, cfg.lon_max, cfg.lat_min, cfg.lat_max,
                                  cfg.n_interior_lon, cfg.n_interior_lat)
        coeffs = fit_all_days(basis, panel, rtol=cfg.svd_rtol,
                              min_obs=cfg.min_obs_per_day)
        mean = estimate_mean(panel, coeffs)
        spatial = build_basis(coeffs, mean, cfg.k, basis)

    os.makedirs(out, exist_ok=True)
    before = diagnostics.spatial_correlation(
        panel.errors, panel.locations, kind="before",
        mode=cfg.correlation_mode, min_days=cfg.min_pair_days)
    _write_correlation(os.path.join(out, "correlation_before.csv"), before)
    _write_correlogram(os.path.join(out, "correlogram_before.csv"), before)

    from fieldcast.projection import project_all

    _, residuals = project_all(spatial.truncate(min(cfg.k, spatial.k)), panel)
    after = diagnostics.spatial_correlation(
        residuals.values, panel.locations, kind="after",
        mode=cfg.correlation_mode, min_days=cfg.min_pair_days)
    _write_correlation(os.path.join(out, "correlation_after.csv"), after)
    _write_correlogram(os.path.join(out, "correlogram_after.csv"), after)

    ks_valid = [k for k in ks if k <= spatial.k]
    curve = diagnostics.frobenius_curve(panel, spatial, ks_valid,
                                        mode=cfg.correlation_mode,
                                        min_days=cfg.min_pair_days)
    _atomic_write(os.path.join(out, "frobenius.csv"), _csv_text(
        ["k", "sum_squared_correlation"], [[k, repr(v)] for k, v in curve]))
    click.echo(f"diagnostics written to {out} "
               f"(before max off-diag {before.max_off_diagonal():.3f}, "
               f"after {after.max_off_diagonal():.3f})")


def _write_correlation(path, corr) -> None:
    ids = [loc.city_id for loc in corr.locations]
    rows = [[ids[i]] + [("" if not np.isfinite(v) else repr(float(v)))
                        for v in corr.matrix[i]] for i in range(corr.n_cities)]
    _atomic_write(path, _csv_text(["city_id"] + ids, rows))


def _write_correlogram(path, corr) -> None:
    pairs = diagnostics.correlogram(corr)
    rows = [[repr(float(d)), repr(float(c))] for d, c in pairs]
    _atomic_write(path, _csv_text(["distance_km", "correlation"], rows))


@cli.command("simulate")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="Simulation config JSON.")
@click.option("--out", required=True, type=click.Path(), help="Output panel CSV.")
@click.option("--truth-dir", type=click.Path(), help="Directory for ground truth files.")
@click.option("--seed", type=int, default=None, help="Seed override.")
@_guarded
def simulate_cmd(config_path, out, truth_dir, seed):
    """Generate a synthetic panel (and optionally its ground truth)."""
    with open(config_path) as fh:
        data = json.load(fh)
    if seed is not None:
        data["seed"] = seed
    cfg = simulation_config_from_dict(data)
    panel, truth = simulate_panel(cfg)
    write_panel(panel, out)
    click.echo(f"simulated {panel.n_days} days x {panel.n_locations} cities "
               f"(seed {cfg.seed}) to {out}")
    if truth_dir:
        os.makedirs(truth_dir, exist_ok=True)
        beta_rows = [[panel.dates[i].isoformat(), k + 1, repr(float(truth.beta[i, k]))]
                     for i in range(panel.n_days) for k in range(truth.beta.shape[1])]
        _atomic_write(os.path.join(truth_dir, "beta_true.csv"),
                      _csv_text(["date", "k", "value"], beta_rows))
        load_rows = [[j] + [repr(float(v)) for v in row]
                     for j, row in enumerate(truth.loadings)]
        _atomic_write(os.path.join(truth_dir, "loadings_true.csv"), _csv_text(
            ["basis_index"] + [f"component_{k + 1}"
                               for k in range(truth.loadings.shape[1])], load_rows))
        _atomic_write(os.path.join(truth_dir, "meta.json"), json.dumps(
            {"mean_level": truth.mean_level, "sigma": cfg.sigma,
             "missing_rate": cfg.missing_rate, "seed": cfg.seed}, indent=2,
            sort_keys=True) + "\n")
        click.echo(f"ground truth written to {truth_dir}")


@cli.command("export-basis")
@click.option("--model", "model_dir", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="Output directory.")
@click.option("--k", "k_index", type=int, default=None,
              help="Single basis surface to export (1-based); default all.")
@click.option("--resolution", type=int, default=100, show_default=True,
              help="Grid points per axis.")
@_guarded
def export_basis_cmd(model_dir, out, k_index, resolution):
    """Export basis surfaces on a regular grid as (lon, lat, value) CSVs."""
    model = artifact.load_model(model_dir)
    spatial = model.spatial
    indices = [k_index] if k_index else range(1, spatial.k + 1)
    os.makedirs(out, exist_ok=True)
    for k in indices:
        lon_axis, lat_axis, grid = pca.export_basis_grid(spatial, k, resolution, resolution)
        rows = [[repr(float(lon_axis[i])), repr(float(lat_axis[j])),
                 repr(float(grid[i, j]))]
                for i in range(lon_axis.size) for j in range(lat_axis.size)]
        _atomic_write(os.path.join(out, f"basis_{k:02d}.csv"),
                      _csv_text(["lon", "lat", "value"], rows))
    click.echo(f"exported {len(list(indices))} basis grids at {resolution}x{resolution} to {out}")


def main():
    logging.basicConfig(level=os.environ.get("FIELDCAST_LOG_LEVEL", "WARNING"))
    cli(auto_envvar_prefix="FIELDCAST")


if __name__ == "__main__":
    main()
