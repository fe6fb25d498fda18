"""Serialization of calibration results: plot-ready CSV files and a JSON summary.

Every number in the summary is wrapped as ``{"value": ..., "stage": ...}`` where
``stage`` names the pipeline step that produced it.  Non-finite numbers are
written as null.  A full result is stored as ``summary.json`` plus
``result.npz`` (paths and curves) so that reports can be rendered later.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from .calibration import CalibrationResult
from .carma import check_stationarity, kappa
from .errors import DataError

__all__ = [
    "FORMAT",
    "ReportData",
    "tag",
    "summary_dict",
    "report_data",
    "save_result",
    "load_result",
    "load_summary",
    "write_summary",
    "emit_report",
    "untag",
    "REPORT_FILES",
]

FORMAT = "carmaspot-summary/1"
REPORT_FILES = {
    "z": "z_path.csv",
    "states": "filtered_states.csv",
    "premium": "premium_curve.csv",
    "errors": "error_function.csv",
    "summary": "summary.json",
}


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    return x if math.isfinite(x) else None


def tag(value, stage: str) -> dict:
    """Wrap a number or a sequence of numbers with the stage that produced it."""
    if isinstance(value, (list, tuple, np.ndarray)):
        value = [_num(v) for v in np.asarray(value).ravel().tolist()]
    else:
        value = _num(value)
    return {"value": value, "stage": stage}


def untag(node):
    """Strip stage tags, returning plain values (NaN for nulls)."""
    if isinstance(node, dict):
        if set(node) == {"value", "stage"}:
            v = node["value"]
            if isinstance(v, list):
                return [float("nan") if x is None else x for x in v]
            return float("nan") if v is None else v
        return {k: untag(v) for k, v in node.items()}
    if isinstance(node, list):
        return [untag(v) for v in node]
    return node


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _stable(p, stage):
    if p is None:
        return None
    return {k: tag(getattr(p, k), stage) for k in ("alpha", "beta", "gamma", "mu")}


def summary_dict(result: CalibrationResult, origin=None) -> dict:
    """All estimated parameters of a calibration, each tagged with its stage."""
    cfg = result.config
    fin = result.final
    lam = check_stationarity(fin.carma).eigenvalues
    nig = result.nig
    mc = result.measure_change
    diag = result.diagnostics
    out = {
        "format": FORMAT,
        "provenance": {
            "package": "carmaspot",
            "version": _version(),
            "mode": cfg.mode,
            "origin": None if origin is None else str(np.datetime64(origin, "D")),
        },
        "config": {k: tag(getattr(cfg, k), "config") for k in ("v", "M_f", "u_star_min", "u_star_max", "h",
                                                               "seed", "rng_streams", "ma_lags", "min_quotes")},
        "methods": {
            "stable_sweep": cfg.stable_method,
            "stable_final": cfg.final_stable_method,
            "regression": cfg.regression_method,
            "seasonality": cfg.seasonality_method,
            "ar": fin.ar_method,
        },
        "seasonality": {"mode": result.seasonality.mode, "c": tag(result.seasonality.c, "seasonality")},
        "threshold": {
            "u_star_hat": tag(result.u_star_hat, "threshold_sweep"),
            "error": tag(fin.error, "premium"),
            "skipped_u": tag(fin.skipped, "premium"),
            "n_thresholds": tag(len(result.bundles), "threshold_sweep"),
            "n_failed": tag(int(sum(not b.ok for b in result.bundles)), "threshold_sweep"),
        },
        "regression": {
            "C": tag(fin.C, "regression"),
            "eq_Z1": tag(fin.eq_Z1, "regression"),
            "n_quotes": tag(fin.n_regression, "regression"),
        },
        "carma": {
            "a": tag(fin.carma.a, "carma"),
            "b": tag(fin.carma.b, "carma"),
            "phi": tag(fin.phi, "carma"),
            "eigenvalues_real": tag(lam.real, "carma"),
            "eigenvalues_imag": tag(lam.imag, "carma"),
            "kappa": tag(kappa(fin.carma).real, "carma"),
        },
        "noise": _stable(fin.eps_stable, "stable"),
        "driver": _stable(fin.stable, "stable"),
        "filter": {"burn_in": tag(fin.burn_in, "states")},
        "nig": None if nig is None else {k: tag(getattr(nig, k), "nig")
                                         for k in ("alpha_Z", "beta_Z", "delta_Z", "mu_Z")},
        "measure_change": None if mc is None else {
            "theta_Z": tag(mc.theta_Z, "theta_Z"),
            "theta_L": tag(mc.theta_L, "theta_L"),
            "eq_Z1": tag(mc.eq_Z1, "regression"),
            "eq_L1": tag(mc.eq_L1, "states"),
            "c_const": tag(mc.c_const, "regression"),
        },
        "diagnostics": {
            "failed_thresholds": {str(k): v for k, v in diag.get("failed_thresholds", {}).items()},
            "theta_Z": diag.get("theta_Z"),
            "theta_L": diag.get("theta_L"),
            "boundary": list(diag.get("boundary", [])),
            "n_quotes_total": tag(diag.get("n_quotes", 0), "prepare"),
            "seasonality_objective": tag(diag.get("seasonality_objective", []), "seasonality"),
        },
    }
    return out


def write_summary(summary: dict, path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def load_summary(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise DataError(f"{path}: not a {FORMAT} file")
    return data


@dataclass
class ReportData:
    """Everything needed to render the CSV report of one calibration."""

    summary: dict
    t: np.ndarray
    z: np.ndarray
    z_filled: np.ndarray
    y: np.ndarray
    states: np.ndarray
    burn_in: int
    u_grid: np.ndarray
    empirical: np.ndarray
    theoretical: np.ndarray
    counts: np.ndarray
    thresholds: np.ndarray
    errors: np.ndarray
    status: list

    @property
    def u_star_hat(self) -> int:
        return int(self.summary["threshold"]["u_star_hat"]["value"])


def report_data(result: CalibrationResult, origin=None) -> ReportData:
    fin = result.final
    n = fin.z.size
    return ReportData(
        summary=summary_dict(result, origin),
        t=np.arange(n),
        z=fin.z,
        z_filled=fin.z_filled,
        y=fin.y,
        states=fin.filtered.states,
        burn_in=fin.burn_in,
        u_grid=result.config.u_grid,
        empirical=fin.empirical,
        theoretical=fin.theoretical,
        counts=fin.counts,
        thresholds=result.thresholds,
        errors=result.errors,
        status=["ok" if b.ok else f"failed at {b.stage}: {b.message}" for b in result.bundles],
    )


_ARRAYS = ("t", "z", "z_filled", "y", "states", "u_grid", "empirical", "theoretical", "counts",
           "thresholds", "errors")


def save_result(result: CalibrationResult | ReportData, out_dir, origin=None) -> ReportData:
    """Store a calibration as summary.json plus result.npz in ``out_dir``."""
    data = result if isinstance(result, ReportData) else report_data(result, origin)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_summary(data.summary, out / REPORT_FILES["summary"])
    np.savez(out / "result.npz", burn_in=data.burn_in, status=np.array(data.status, dtype=str),
             **{k: getattr(data, k) for k in _ARRAYS})
    return data


def load_result(out_dir) -> ReportData:
    out = Path(out_dir)
    summary = load_summary(out / REPORT_FILES["summary"])
    try:
        with np.load(out / "result.npz") as f:
            arrays = {k: f[k] for k in _ARRAYS}
            burn_in = int(f["burn_in"])
            status = [str(s) for s in f["status"]]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"cannot read {out / 'result.npz'}: {exc}") from exc
    return ReportData(summary=summary, burn_in=burn_in, status=status, **arrays)


def _fmt(x):
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def _dates(summary, t):
    origin = summary["provenance"].get("origin")
    if origin is None:
        return None
    origin = np.datetime64(origin, "D")
    if summary["provenance"]["mode"] == "peak":
        return np.busday_offset(origin, t, roll="forward")
    return origin + t.astype("timedelta64[D]")


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def emit_report(result: CalibrationResult | ReportData, out_dir, origin=None) -> dict:
    """Write the CSV report and the JSON summary; returns {kind: path}."""
    data = result if isinstance(result, ReportData) else report_data(result, origin)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in REPORT_FILES.items()}
    dates = _dates(data.summary, data.t)
    lead = (lambda i: [str(dates[i])]) if dates is not None else (lambda i: [])
    date_col = ["date"] if dates is not None else []

    _write_rows(paths["z"], ["t", *date_col, "z", "filled"],
                ([int(data.t[i]), *lead(i), _fmt(data.z[i]), int(bool(data.z_filled[i]))]
                 for i in range(data.t.size)))
    p = data.states.shape[1]
    _write_rows(paths["states"], ["t", *date_col, *[f"x{j + 1}" for j in range(p)], "y", "burn_in"],
                ([int(data.t[i]), *lead(i), *[_fmt(v) for v in data.states[i]], _fmt(data.y[i]),
                  int(data.t[i] < data.burn_in)] for i in range(data.t.size)))
    _write_rows(paths["premium"], ["u", "empirical", "theoretical"],
                ([int(u), _fmt(e), _fmt(th)] for u, e, th in zip(data.u_grid, data.empirical, data.theoretical)))
    _write_rows(paths["errors"], ["u_star", "error", "status"],
                ([int(u), _fmt(e), s] for u, e, s in zip(data.thresholds, data.errors, data.status)))
    write_summary(data.summary, paths["summary"])
    return paths
