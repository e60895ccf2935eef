"""Model persistence: a directory of CSV matrices plus a JSON manifest.

Every float is written with ``repr`` so values round-trip exactly; loading
rebuilds the spline basis from the config snapshot and replays the
deterministic AR+GARCH filter over the stored coefficient series, so a
loaded model reproduces the saved one bit for bit. File hashes in the
manifest guard against silent corruption.
"""

import csv
import hashlib
import json
import os
import tempfile
from datetime import date as Date

import numpy as np

from fieldcast import argarch
from fieldcast.config import PipelineConfig
from fieldcast.errors import ArtifactError
from fieldcast.pca import SpatialBasis
from fieldcast.pipeline import FittedModel
from fieldcast.predict import PredictionState
from fieldcast.projection import BetaSeries
from fieldcast.splines import make_tensor_basis
from fieldcast.surface import MeanField

FORMAT_VERSION = 1

MANIFEST = "manifest.json"
LOADINGS = "loadings.csv"
SINGULAR = "singular_values.csv"
MEAN_COEFFS = "mean_coeffs.csv"
BETA = "beta.csv"


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list, rows) -> str:
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _fit_summary(fit) -> dict:
    return {
        "params": dict(zip(argarch.PARAM_NAMES, map(float, fit.params.to_array()))),
        "std_errors": fit.std_errors,
        "t_ratios": fit.t_ratios,
        "p_values": fit.p_values,
        "log_likelihood": fit.log_likelihood,
        "n_obs": fit.n_obs,
        "converged": fit.converged,
        "boundary_flags": list(fit.boundary_flags),
        "gradient_norm": fit.gradient_norm,
        "final_state": {
            "u": float(fit.innovations[-1]),
            "eta_sq": float(fit.cond_scales_sq[-1]),
        },
    }


def save_model(model: FittedModel, directory) -> None:
    """Write the model artifact into ``directory`` (created if needed)."""
    os.makedirs(directory, exist_ok=True)
    spatial = model.spatial

    loadings_rows = [[j] + [repr(float(v)) for v in row]
                     for j, row in enumerate(spatial.loadings)]
    loadings_text = _csv_text(
        ["basis_index"] + [f"component_{k + 1}" for k in range(spatial.k)], loadings_rows)

    singular_rows = [[i + 1, repr(float(s)), repr(float(e))]
                     for i, (s, e) in enumerate(zip(spatial.singular_values,
                                                    spatial.explained_variance))]
    singular_text = _csv_text(["component", "singular_value", "explained_variance"],
                              singular_rows)

    mean_rows = [[j, repr(float(v))] for j, v in enumerate(spatial.mean.mean_coeffs)]
    mean_text = _csv_text(["basis_index", "value"], mean_rows)

    beta_rows = []
    for i, d in enumerate(model.beta.dates):
        for k in range(model.beta.k):
            beta_rows.append([d.isoformat(), k + 1, repr(float(model.beta.values[i, k]))])
    beta_text = _csv_text(["date", "k", "value"], beta_rows)

    files = {LOADINGS: loadings_text, SINGULAR: singular_text,
             MEAN_COEFFS: mean_text, BETA: beta_text}
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "k": spatial.k,
        "n_spline_basis": spatial.spline.n_basis,
        "grand_mean": model.spatial.mean.grand_mean,
        "sigma2": model.sigma2,
        "garch_fits": [_fit_summary(f) for f in model.garch_fits],
        "state": {
            "date": model.state.date.isoformat(),
            "beta": [repr(float(v)) for v in model.state.beta],
            "u": [repr(float(v)) for v in model.state.u],
            "eta_sq": [repr(float(v)) for v in model.state.eta_sq],
        },
        "beta_residual_norms": [repr(float(v)) for v in model.beta.residual_norms],
        "beta_ranks": model.beta.ranks.tolist(),
        "skipped_days": [[d.isoformat(), reason] for d, reason in model.skipped_days],
        "data_fingerprint": model.data_fingerprint,
        "file_hashes": {name: _sha256(text) for name, text in files.items()},
    }
    for name, text in files.items():
        _atomic_write_text(os.path.join(directory, name), text)
    _atomic_write_text(os.path.join(directory, MANIFEST),
                       json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_file(directory, name, expected_hash) -> list:
    path = os.path.join(directory, name)
    if not os.path.exists(path):
        raise ArtifactError(f"artifact file missing: {name}")
    with open(path, newline="") as fh:
        text = fh.read()
    if _sha256(text) != expected_hash:
        raise ArtifactError(f"artifact file corrupted (hash mismatch): {name}")
    rows = list(csv.reader(text.splitlines()))
    return rows[1:]  # drop header


def load_model(directory) -> FittedModel:
    """Load a model artifact saved by ``save_model``.

    Raises ``ArtifactError`` for missing files, hash mismatches, or
    internal inconsistencies.
    """
    manifest_path = os.path.join(directory, MANIFEST)
    if not os.path.exists(manifest_path):
        raise ArtifactError(f"no manifest at {manifest_path}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(f"unsupported artifact version {manifest.get('format_version')}")

    config = PipelineConfig.from_dict(manifest["config"])
    basis = make_tensor_basis(config.lon_min, config.lon_max, config.lat_min,
                              config.lat_max, config.n_interior_lon, config.n_interior_lat)
    k = int(manifest["k"])
    if basis.n_basis != int(manifest["n_spline_basis"]):
        raise ArtifactError("config snapshot does not reproduce the stored basis size")

    hashes = manifest["file_hashes"]
    loadings_rows = _read_file(directory, LOADINGS, hashes[LOADINGS])
    loadings = np.array([[float(v) for v in row[1:]] for row in loadings_rows])
    if loadings.shape != (basis.n_basis, k):
        raise ArtifactError(f"loadings shape {loadings.shape} does not match "
                            f"basis {basis.n_basis} x k {k}")

    singular_rows = _read_file(directory, SINGULAR, hashes[SINGULAR])
    singular = np.array([float(r[1]) for r in singular_rows])
    explained = np.array([float(r[2]) for r in singular_rows])

    mean_rows = _read_file(directory, MEAN_COEFFS, hashes[MEAN_COEFFS])
    mean_coeffs = np.array([float(r[1]) for r in mean_rows])
    if mean_coeffs.size != basis.n_basis:
        raise ArtifactError("mean coefficient length does not match the basis")
    mean = MeanField(grand_mean=float(manifest["grand_mean"]), mean_coeffs=mean_coeffs)

    beta_rows = _read_file(directory, BETA, hashes[BETA])
    by_date: dict = {}
    for date_s, k_s, v_s in beta_rows:
        by_date.setdefault(Date.fromisoformat(date_s), {})[int(k_s)] = float(v_s)
    dates = sorted(by_date)
    values = np.array([[by_date[d][kk + 1] for kk in range(k)] for d in dates])
    beta = BetaSeries(
        dates=dates, values=values,
        residual_norms=np.array([float(v) for v in manifest["beta_residual_norms"]]),
        ranks=np.array(manifest["beta_ranks"], dtype=np.int64),
        skipped=[],
    )

    spatial = SpatialBasis(spline=basis, mean=mean, loadings=loadings,
                           singular_values=singular, explained_variance=explained)

    fits = []
    for entry in manifest["garch_fits"]:
        params = argarch.GarchParams(**entry["params"])
        fits.append(argarch.GarchFit(
            params=params,
            std_errors=entry["std_errors"],
            t_ratios=entry["t_ratios"],
            p_values=entry["p_values"],
            innovations=np.empty(0),
            cond_scales_sq=np.empty(0),
            log_likelihood=entry["log_likelihood"],
            n_obs=entry["n_obs"],
            converged=entry["converged"],
            boundary_flags=list(entry["boundary_flags"]),
            gradient_norm=entry["gradient_norm"],
        ))
    # Replay the deterministic filter so the stored series and states line up.
    for col, fit in enumerate(fits):
        u, eta2 = argarch.filter_series(fit.params, values[:, col])
        fit.innovations = u
        fit.cond_scales_sq = eta2
        stored = manifest["garch_fits"][col]["final_state"]
        if not (np.isclose(u[-1], float(stored["u"]), rtol=1e-12, atol=1e-12)
                and np.isclose(eta2[-1], float(stored["eta_sq"]), rtol=1e-12, atol=1e-12)):
            raise ArtifactError(f"replayed filter state disagrees with the stored "
                                f"state for component {col + 1}")

    st = manifest["state"]
    state = PredictionState(
        date=Date.fromisoformat(st["date"]),
        beta=np.array([float(v) for v in st["beta"]]),
        u=np.array([float(v) for v in st["u"]]),
        eta_sq=np.array([float(v) for v in st["eta_sq"]]),
    )
    return FittedModel(
        config=config,
        spatial=spatial,
        beta=beta,
        garch_fits=fits,
        sigma2=float(manifest["sigma2"]),
        state=state,
        data_fingerprint=manifest["data_fingerprint"],
        skipped_days=[(Date.fromisoformat(d), reason)
                      for d, reason in manifest["skipped_days"]],
    )
