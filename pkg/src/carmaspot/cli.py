"""Command-line interface.

Subcommands: simulate, fit-seasonality, calibrate, price, premium,
filter-states, report.  Each accepts --config, --seed and --out.  Exit codes:
0 success, 2 data error, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import calibrate_threshold, estimate_all, prepare
from .carma import CarmaParams
from .config import load_config
from .errors import CarmaSpotError, DataError, DomainError, EstimationError
from .market import SPOT_HEADER, _read_csv, day_index, load_market, save_market
from .pricing import MarketSnapshot, MeasureChange, swap_price
from .report import (REPORT_FILES, emit_report, load_result, save_result, tag, untag,
                     write_summary)
from .seasonality import SeasonalityParams, fit_seasonality
from .synthetic import default_truth, generate_synthetic_market, truth_from_dict, truth_to_dict

log = logging.getLogger("carmaspot")

EXIT_OK, EXIT_DATA, EXIT_ESTIMATION = 0, 2, 3
OUT_ENV = "CARMASPOT_OUT"


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args):
    return load_config(args.config, mode=getattr(args, "mode", None), seed=args.seed)


def _market(args, config):
    if not args.spot or not args.futures:
        raise DataError("--spot and --futures are required")
    return load_market(args.spot, args.futures, config.mode)


def _date(s):
    try:
        return np.datetime64(s, "D")
    except ValueError as exc:
        raise DataError(f"invalid date {s!r}") from exc


def cmd_simulate(args) -> int:
    config = _config(args)
    if args.truth:
        try:
            truth = truth_from_dict(json.loads(Path(args.truth).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DataError(f"cannot read truth file {args.truth}: {exc}") from exc
    else:
        truth = default_truth(config.mode)
    if truth.mode != config.mode:
        raise DataError(f"truth mode {truth.mode!r} differs from config mode {config.mode!r}")
    stream = np.random.SeedSequence(config.seed).spawn(max(config.rng_streams, 1))[0]
    syn = generate_synthetic_market(truth, args.start, args.days, np.random.default_rng(stream),
                                    max_u=config.M_f, fine_step=args.fine_step)
    out = _out_dir(args)
    save_market(syn.market, out / "spot.csv", out / "futures.csv")
    (out / "truth.json").write_text(json.dumps(truth_to_dict(truth), indent=2) + "\n", encoding="utf-8")
    print(f"wrote {syn.market.spot_dates.size} spot rows and {syn.market.trade_dates.size} futures rows to {out}")
    return EXIT_OK


def cmd_fit_seasonality(args) -> int:
    config = _config(args)
    if not args.spot:
        raise DataError("--spot is required")
    market = load_market(args.spot, args.futures, config.mode) if args.futures else None
    if market is None:
        rows = _read_csv(args.spot, SPOT_HEADER)
        if not rows:
            raise DataError(f"{args.spot}: no spot rows")
        dates = np.array([r[0] for r in rows])
        price = np.array([r[1] for r in rows])
        t = day_index(dates, dates[0], config.mode)
    else:
        t, price = market.spot_t, market.spot_price
    params, fit = fit_seasonality(t, price, config.mode, config.seasonality_method)
    summary = {"mode": params.mode, "c": tag(params.c, "seasonality"),
               "scale": tag(fit.scale, "seasonality"), "n_iter": tag(fit.n_iter, "seasonality")}
    out = _out_dir(args)
    write_summary(summary, out / "seasonality.json")
    print(" ".join(f"c{j + 1}={v:.6g}" for j, v in enumerate(params.c)))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    config = _config(args)
    market = _market(args, config)
    if args.fast:
        config = replace(config, final_stable_method=config.stable_method)

    def progress(b):
        log.info("u*=%d %s error=%.6g", b.u_star, "ok" if b.ok else f"failed ({b.stage})", b.error)

    result = calibrate_threshold(market, config, progress=progress)
    out = _out_dir(args)
    data = save_result(result, out, origin=market.origin)
    emit_report(data, out)
    mc = result.measure_change
    print(f"u*={result.u_star_hat} C={mc.c_const:.6g} E_Q[Z(1)]={mc.eq_Z1:.6g} E_Q[L(1)]={mc.eq_L1:.6g} "
          f"theta_Z={mc.theta_Z:.6g} theta_L={mc.theta_L:.6g}")
    return EXIT_OK


def _model_from_summary(summary):
    s = untag(summary)
    carma = CarmaParams(s["carma"]["a"], s["carma"]["b"])
    seas = SeasonalityParams(s["seasonality"]["mode"], s["seasonality"]["c"])
    m = s["measure_change"]
    mc = MeasureChange(m["theta_Z"], m["theta_L"] if np.isfinite(m["theta_L"]) else 0.0,
                       m["eq_Z1"], m["eq_L1"], m["c_const"])
    return carma, seas, mc


def cmd_price(args) -> int:
    if not args.report:
        raise DataError("--report (a calibrate output directory) is required")
    data = load_result(args.report)
    carma, seas, mc = _model_from_summary(data.summary)
    prov = data.summary["provenance"]
    if prov.get("origin") is None:
        raise DataError("the report carries no date origin")
    origin, mode = np.datetime64(prov["origin"], "D"), prov["mode"]
    if not args.delivery_start or not args.delivery_end:
        raise DataError("--delivery-start and --delivery-end are required")
    t = int(data.t[-1]) if args.trade_date is None else int(day_index(_date(args.trade_date), origin, mode))
    if not 0 <= t < data.t.size:
        raise DataError(f"trade date index {t} is outside the calibrated sample")
    T1 = int(day_index(_date(args.delivery_start), origin, mode))
    T2 = int(day_index(_date(args.delivery_end) + np.timedelta64(1, "D"), origin, mode))
    snap = MarketSnapshot(t, float(data.z[t]), data.states[t], seas)
    try:
        price = swap_price(snap, T1, T2, carma, mc)
    except DomainError as exc:
        raise DataError(str(exc)) from exc
    out = _out_dir(args)
    write_summary({"t": tag(t, "input"), "T1": tag(T1, "input"), "T2": tag(T2, "input"),
                   "price": tag(price, "pricing")}, out / "price.json")
    print(f"{price:.6f}")
    return EXIT_OK


def _single_threshold(args):
    config = _config(args)
    market = _market(args, config)
    u_star = config.u_star_min if args.u_star is None else args.u_star
    bundle = estimate_all(prepare(market, config), u_star, config,
                          stable_method=config.stable_method if args.fast else config.final_stable_method)
    if not bundle.ok:
        raise EstimationError(f"threshold {u_star} failed at {bundle.stage}: {bundle.message}")
    return config, market, bundle


def cmd_premium(args) -> int:
    config, _, b = _single_threshold(args)
    out = _out_dir(args)
    path = out / REPORT_FILES["premium"]
    with path.open("w", encoding="utf-8") as f:
        f.write("u,empirical,theoretical\n")
        for u, e, th in zip(config.u_grid, b.empirical, b.theoretical):
            f.write(f"{int(u)},{repr(float(e)) if np.isfinite(e) else ''},{repr(float(th))}\n")
    print(f"u*={b.u_star} error={b.error:.6g} skipped={b.skipped} -> {path}")
    return EXIT_OK


def cmd_filter_states(args) -> int:
    config, market, b = _single_threshold(args)
    out = _out_dir(args)
    path = out / REPORT_FILES["states"]
    p = b.filtered.states.shape[1]
    with path.open("w", encoding="utf-8") as f:
        f.write(",".join(["t", "date", *[f"x{j + 1}" for j in range(p)], "y", "z", "burn_in"]) + "\n")
        for i, d in enumerate(market.spot_dates):
            xs = ",".join(repr(float(v)) for v in b.filtered.states[i])
            f.write(f"{i},{d},{xs},{float(b.y[i])!r},{float(b.z[i])!r},{int(i < b.burn_in)}\n")
    print(f"u*={b.u_star} a={tuple(round(v, 6) for v in b.carma.a)} b0={b.carma.b[0]:.6g} -> {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.report:
        raise DataError("--report (a calibrate output directory) is required")
    data = load_result(args.report)
    paths = emit_report(data, _out_dir(args))
    for p in paths.values():
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carmaspot", description="Stable-CARMA electricity spot model toolkit")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help_text, data=True):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        p.add_argument("--mode", choices=("base", "peak"), help="overrides the config mode")
        if data:
            p.add_argument("--spot", help="spot CSV (date,price)")
            p.add_argument("--futures", help="futures CSV (trade_date,delivery_start,delivery_end,price)")
        p.set_defaults(func=func)
        return p

    p = command("simulate", cmd_simulate, "generate a synthetic spot and futures market", data=False)
    p.add_argument("--truth", help="JSON model description (default: built-in reference design)")
    p.add_argument("--days", type=int, default=1461, help="number of spot days")
    p.add_argument("--start", default="2002-07-01", help="first spot date")
    p.add_argument("--fine-step", type=float, default=0.01, help="Euler step of the CARMA simulation")

    command("fit-seasonality", cmd_fit_seasonality, "robust fit of the seasonality function")

    p = command("calibrate", cmd_calibrate, "threshold sweep and full calibration")
    p.add_argument("--fast", action="store_true", help="skip the maximum-likelihood refit of the driver")

    p = command("price", cmd_price, "price a delivery-period contract from a calibration", data=False)
    p.add_argument("--report", help="directory written by calibrate")
    p.add_argument("--trade-date", help="pricing date (default: last calibrated day)")
    p.add_argument("--delivery-start")
    p.add_argument("--delivery-end")

    for name, func, text in (("premium", cmd_premium, "risk-premium curves at one threshold"),
                             ("filter-states", cmd_filter_states, "Z path and filtered CARMA states at one threshold")):
        p = command(name, func, text)
        p.add_argument("--u-star", type=int, help="threshold (default: u_star_min)")
        p.add_argument("--fast", action="store_true", help="quantile estimate of the driver only")

    p = command("report", cmd_report, "render CSV files from a calibration", data=False)
    p.add_argument("--report", help="directory written by calibrate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (DataError, DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except EstimationError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except CarmaSpotError as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
