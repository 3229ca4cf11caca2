"""Command-line entry point: ``etpa-zscan``.

Exit codes: 0 success, 2 validation error, 3 fit did not converge (or the
requested parameters are not identifiable).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .fitkit import (
    FREE_PARAMETERS,
    FitResult,
    RankError,
    ZscanGeometry,
    classify_signature,
    confirms_etpa,
    estimate_cross_section,
    fit_linear,
    fit_quadratic,
    fit_zscan,
    select_model,
)
from .models import beam_area_cm2, etpa_rate, zscan_profile
from .simkit import (
    correct_counts,
    read_series_csv,
    series_to_csv,
    simulate_attenuation_series,
    simulate_zscan,
)

log = logging.getLogger("etpa_zscan")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3
MODELS = ("spa", "tpa", "etpa")
DEFAULT_FREE = {"spa": "wd", "tpa": "d,w0", "etpa": "w0"}


def z_grid(z_min: float, z_max: float, step: float) -> np.ndarray:
    if not step > 0 or not z_max > z_min:
        raise ValueError("need z_max > z_min and step > 0")
    n = int(round((z_max - z_min) / step)) + 1
    return z_min + step * np.arange(n)


def provenance(cfg: ExperimentConfig, seed: int, command: str, timestamp: bool = True) -> dict:
    prov = {
        "tool": "etpa_zscan",
        "version": __version__,
        "config_hash": cfg.config_hash,
        "seed": seed,
        "command": command,
    }
    if timestamp:
        prov["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return prov


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _emit_json(obj: dict, out) -> None:
    _emit(json.dumps(obj, indent=2, sort_keys=True) + "\n", out)


def _free(spec: str | None, model: str) -> tuple[str, ...]:
    spec = DEFAULT_FREE[model] if spec is None else spec
    names = tuple(s.strip() for s in spec.split(",") if s.strip())
    bad = [n for n in names if n not in FREE_PARAMETERS]
    if bad:
        raise ValueError(f"unknown free parameters {bad}; choose from {list(FREE_PARAMETERS)}")
    return names


def _geometry(cfg: ExperimentConfig, model: str) -> ZscanGeometry:
    return ZscanGeometry(cfg.beam_for(model), cfg.detector, cfg.sample)


# -- subcommands -----------------------------------------------------------


def cmd_simulate_attenuation(args, cfg, seed):
    factors = [float(f) for f in args.factors.split(",") if f.strip()]
    if args.signal_rate is not None:
        base = args.signal_rate
    else:
        beam = cfg.beam_for("etpa")
        base = cfg.collection_efficiency * etpa_rate(
            cfg.sample, beam_area_cm2(beam), None, cfg.source.max_pair_rate
        )
    exposure = args.exposure or cfg.simulation.attenuation_exposure_s
    series = simulate_attenuation_series(
        args.mode, factors, base, cfg.noise, exposure, seed, noiseless=args.noiseless
    )
    _emit(series_to_csv(series, provenance(cfg, seed, "simulate attenuation", timestamp=False)), args.out)
    return EXIT_OK


def cmd_simulate_zscan(args, cfg, seed):
    z = z_grid(args.z_min, args.z_max, args.step)
    geo = _geometry(cfg, args.model)
    prof = zscan_profile(args.model, geo.beam, geo.detector, geo.sample, cfg.formula_mode, z)
    peak = args.peak_rate
    if peak is None:
        peak = cfg.simulation.zscan_peak_rate_per_s[args.model]
    exposure = args.exposure or cfg.simulation.zscan_exposure_s
    series = simulate_zscan(prof, peak, cfg.noise, exposure, args.repeats, seed, args.noiseless)
    _emit(series_to_csv(series, provenance(cfg, seed, "simulate zscan", timestamp=False)), args.out)
    return EXIT_OK


def cmd_fit_attenuation(args, cfg, seed):
    series = read_series_csv(args.file)
    corr = correct_counts(series, cfg.noise)
    law = args.law or ("quadratic" if series.kind == "pair_attenuation" else "linear")
    pts = list(zip(corr.x, corr.rate, corr.uncertainty))
    fit = (fit_linear if law == "linear" else fit_quadratic)(pts, intercept=args.intercept)
    fit.provenance = dict(provenance(cfg, seed, "fit attenuation"), series_kind=series.kind)
    _emit_json(fit.to_dict(), args.out)
    return EXIT_OK


def cmd_fit_zscan(args, cfg, seed):
    series = read_series_csv(args.file)
    corr = correct_counts(series, cfg.noise)
    free = _free(args.free, args.model)
    fit = fit_zscan(corr, args.model, _geometry(cfg, args.model), free, mode=cfg.formula_mode)
    fit.provenance = dict(fit.provenance, **provenance(cfg, seed, "fit zscan"))
    _emit_json(fit.to_dict(), args.out)
    if not fit.converged:
        log.error("z-scan fit did not converge after %d iterations", fit.iterations)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_classify(args, cfg, seed):
    pump = correct_counts(read_series_csv(args.pump), cfg.noise)
    pair = correct_counts(read_series_csv(args.pair), cfg.noise)
    verdicts = classify_signature(pump, pair, args.threshold)
    _emit_json(
        {
            "pump": verdicts[0].to_dict(),
            "pair": verdicts[1].to_dict(),
            "etpa_confirmed": confirms_etpa(verdicts),
            "provenance": provenance(cfg, seed, "classify"),
        },
        args.out,
    )
    return EXIT_OK


def cmd_select(args, cfg, seed):
    corr = correct_counts(read_series_csv(args.file), cfg.noise)
    free = _free(args.free, "etpa") if args.free is not None else ()
    ranking = select_model(
        corr, ("spa", "tpa"), _geometry(cfg, "etpa"), cfg.formula_mode, free
    )
    out = ranking.to_dict()
    out["provenance"] = provenance(cfg, seed, "select")
    _emit_json(out, args.out)
    return EXIT_OK if all(f.converged for f in ranking.ranked) else EXIT_NOT_CONVERGED


def cmd_report_cross_section(args, cfg, seed):
    fit = FitResult.from_dict(json.loads(Path(args.file).read_text()))
    name = {"linear": "a", "quadratic": "b"}.get(fit.model_id)
    if name is None:
        raise ValueError(f"cross-section report needs an attenuation fit, got {fit.model_id!r}")
    # Both laws give the detected rate at full, unattenuated pair flux.
    slope = fit.value(name) / cfg.source.max_pair_rate
    report = estimate_cross_section(
        slope, cfg.collection_efficiency, cfg.sample, cfg.beam_for("etpa")
    )
    out = report.to_dict()
    out["discrepancy"] = (
        f"sigma_e*A = {report.sigma_e_times_A_cm4:.3g} cm^4 under '{report.area_convention}'; "
        f"the quoted reference value {report.reference_sigma_e_times_A:.3g} is "
        + ("reproduced" if report.reference_reproduced else "not reproducible")
    )
    out["provenance"] = dict(report.provenance, **provenance(cfg, seed, "report cross-section"))
    _emit_json(out, args.out)
    return EXIT_OK


def cmd_profile(args, cfg, seed):
    z = z_grid(args.z_min, args.z_max, args.step)
    geo = _geometry(cfg, args.model)
    prof = zscan_profile(args.model, geo.beam, geo.detector, geo.sample, cfg.formula_mode, z)
    buf = io.StringIO()
    prov = dict(provenance(cfg, seed, "profile", timestamp=False), **_jsonable(prof.metadata))
    buf.write("# provenance: " + json.dumps(prov, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z_um", "normalized_rate"])
    for zi, vi in zip(prof.positions, prof.values):
        w.writerow([repr(float(zi)), repr(float(vi))])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _jsonable(d: dict) -> dict:
    return {k: (float(v) if isinstance(v, (np.floating, float)) else v) for k, v in d.items()}


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray]:
    rows = [r for r in csv.reader(l for l in Path(path).read_text().splitlines() if not l.startswith("#"))]
    if rows[0] != ["z_um", "normalized_rate"]:
        raise ValueError(f"{path}: not a profile CSV")
    data = np.array(rows[1:], dtype=float)
    return data[:, 0], data[:, 1]


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (default: $ETPA_ZSCAN_CONFIG or built-in)")
    common.add_argument("--seed", type=int, help="RNG seed (default: config seed)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="etpa-zscan", description="Simulate, fit and classify z-scan and attenuation count data.", epilog="exit codes: 0 ok, 2 invalid input, 3 fit not converged or not identifiable")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic count series")
    simsub = sim.add_subparsers(dest="what", required=True)
    att = simsub.add_parser("attenuation", parents=[common])
    att.add_argument("--mode", choices=("pump", "pair"), required=True)
    att.add_argument("--factors", default="0.2,0.3,0.4,0.5,0.6,0.8,1.0")
    att.add_argument("--signal-rate", type=float, help="detected ETPA rate at factor 1 (counts/s)")
    att.add_argument("--exposure", type=float, help="seconds per point")
    att.add_argument("--noiseless", action="store_true")
    att.set_defaults(func=cmd_simulate_attenuation)

    zs = simsub.add_parser("zscan", parents=[common])
    zs.add_argument("--model", choices=MODELS, required=True)
    _grid_args(zs, step=10.0)
    zs.add_argument("--repeats", type=int, default=100)
    zs.add_argument("--peak-rate", type=float, help="signal rate at the profile peak (counts/s)")
    zs.add_argument("--exposure", type=float, help="seconds per repeat")
    zs.add_argument("--noiseless", action="store_true")
    zs.set_defaults(func=cmd_simulate_zscan)

    fit = sub.add_parser("fit", help="fit a count series")
    fitsub = fit.add_subparsers(dest="what", required=True)
    fa = fitsub.add_parser("attenuation", parents=[common])
    fa.add_argument("file")
    fa.add_argument("--law", choices=("linear", "quadratic"), help="default: from the series kind")
    fa.add_argument("--intercept", action="store_true", help="diagnostic constant term")
    fa.set_defaults(func=cmd_fit_attenuation)

    fz = fitsub.add_parser("zscan", parents=[common])
    fz.add_argument("file")
    fz.add_argument("--model", choices=MODELS, required=True)
    fz.add_argument("--free", help="comma list from d,w0,wd (defaults: spa wd, tpa d,w0, etpa w0)")
    fz.set_defaults(func=cmd_fit_zscan)

    cl = sub.add_parser("classify", parents=[common], help="pump/pair attenuation signature test")
    cl.add_argument("pump")
    cl.add_argument("pair")
    cl.add_argument("--threshold", type=float, default=0.8)
    cl.set_defaults(func=cmd_classify)

    se = sub.add_parser("select", parents=[common], help="rank SPA vs TPA models on z-scan data")
    se.add_argument("file")
    se.add_argument("--free", help="comma list from d,w0,wd (default: all fixed)")
    se.set_defaults(func=cmd_select)

    rep = sub.add_parser("report", help="derived reports")
    repsub = rep.add_subparsers(dest="what", required=True)
    cs = repsub.add_parser("cross-section", parents=[common])
    cs.add_argument("file", help="attenuation fit JSON")
    cs.set_defaults(func=cmd_report_cross_section)

    pr = sub.add_parser("profile", parents=[common], help="plot-ready normalized profile")
    pr.add_argument("--model", choices=MODELS, required=True)
    _grid_args(pr, step=1.0)
    pr.set_defaults(func=cmd_profile)
    return p


def _grid_args(p, step: float) -> None:
    p.add_argument("--z-min", type=float, default=-300.0)
    p.add_argument("--z-max", type=float, default=300.0)
    p.add_argument("--step", type=float, default=step)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        return args.func(args, cfg, seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RankError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
