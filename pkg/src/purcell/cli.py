"""Command-line interface tying simulation, correlation, fitting, and
extraction into reproducible pipelines.

Subcommands: simulate, correlate, lifetime, fit, qe-bound, detune-report.
Exit codes: 0 ok, 1 usage/config error, 2 fit non-convergence, 3 data
error.
"""

import argparse
import sys

import numpy as np

from . import correlate, extraction, fitting, kinetics, tagio
from .errors import (ConfigError, DataError, DomainError, GuessError,
                     RankDeficientError)
from .photophysics import EmitterModel

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_DATA = 3


def _load_config(args):
    cfg, chash = tagio.parse_config(args.config)
    if args.seed is not None:
        cfg["seed"] = str(args.seed)
    return cfg, chash


def _meta(cfg_hash, cfg):
    return {"config_hash": cfg_hash, "seed": cfg.get("seed", "")}


def _sim_config(cfg):
    emitter = EmitterModel(
        lambda_zpl=tagio.cfg_get(cfg, "lambda_zpl_nm", float, 1279.0),
        gamma_r=tagio.cfg_get(cfg, "gamma_r_per_ns", float),
        gamma_0=tagio.cfg_get(cfg, "gamma_0_per_ns", float),
        f_dw=tagio.cfg_get(cfg, "f_dw", float, 1.0),
        k_isc=tagio.cfg_get(cfg, "k_isc_per_ns", float, 0.0),
        k_t=tagio.cfg_get(cfg, "k_t_per_ns", float, 0.0),
        k_pump=tagio.cfg_get(cfg, "k_pump_per_ns", float, 0.0),
    )
    mode = tagio.cfg_get(cfg, "excitation")
    if mode == "cw":
        excitation = kinetics.CW(tagio.cfg_get(cfg, "k_pump_per_ns", float))
    elif mode == "pulsed":
        excitation = kinetics.Pulsed(
            period=tagio.cfg_get(cfg, "period_ns", float),
            excite_prob=tagio.cfg_get(cfg, "excite_prob", float))
    else:
        raise ConfigError(f"invalid value for config key 'excitation': {mode!r}")
    config = kinetics.SimConfig(
        emitter=emitter,
        f_p=tagio.cfg_get(cfg, "f_p", float, 0.0),
        excitation=excitation,
        duration=tagio.cfg_get(cfg, "duration_ns", float),
        seed=tagio.cfg_get(cfg, "seed", int, 0),
    )
    chain = kinetics.DetectorChain(
        splitter_ratio=tagio.cfg_get(cfg, "splitter_ratio", float, 0.5),
        efficiency=(tagio.cfg_get(cfg, "efficiency_a", float, 1.0),
                    tagio.cfg_get(cfg, "efficiency_b", float, 1.0)),
        jitter_sigma=tagio.cfg_get(cfg, "jitter_sigma_ps", float, 0.0),
        dead_time=tagio.cfg_get(cfg, "dead_time_ps", float, 0.0),
        dark_rate=(tagio.cfg_get(cfg, "dark_rate_a_per_ns", float, 0.0),
                   tagio.cfg_get(cfg, "dark_rate_b_per_ns", float, 0.0)),
    )
    return config, chain


def cmd_simulate(args):
    cfg, chash = _load_config(args)
    config, chain = _sim_config(cfg)
    meta = _meta(chash, cfg)
    out = args.out
    if isinstance(config.excitation, kinetics.Pulsed):
        result = kinetics.simulate_pulsed_with_sync(config, chain)
        files = {f"{out}_sync": result["sync"], f"{out}_photons": result["photons"]}
    else:
        events = kinetics.simulate_emission(config)
        ch_a, ch_b = kinetics.apply_detection(
            events.zpl_times, chain, config.seed, config.duration)
        files = {f"{out}_ch0": ch_a, f"{out}_ch1": ch_b}
    ext = ".ttag" if args.format == "bin" else ".csv"
    for stem, stream in files.items():
        tagio.write_tags(stem + ext, stream, fmt=args.format, meta=meta)
        print(f"{stem}{ext}: {stream.tags.size} tags")
    print(f"duration_ns={config.duration} seed={config.seed}")
    return EXIT_OK


def cmd_correlate(args):
    cfg, chash = _load_config(args)
    a = tagio.read_tags(tagio.cfg_get(cfg, "input_a"))
    b = tagio.read_tags(tagio.cfg_get(cfg, "input_b"))
    bin_width = tagio.cfg_get(cfg, "bin_width_ps", int)
    max_delay = tagio.cfg_get(cfg, "max_delay_ps", int)
    hist = correlate.cross_correlate(a, b, bin_width, max_delay)
    mode = tagio.cfg_get(cfg, "normalize", str, "none")
    meta = _meta(chash, cfg)
    tagio.write_histogram_csv(args.out, hist, meta,
                              extra={"normalization_mode": mode})
    print(f"{args.out}: {int(hist.counts.sum())} coincidences")
    if mode != "none":
        duration = tagio.cfg_get(cfg, "duration_ns", float)
        tail = tagio.cfg_get(cfg, "tail_start_ps", float, 0.0) or None
        curve = correlate.normalize_g2(
            hist, a.rate(duration), b.rate(duration), duration,
            mode=mode, tail_start=tail)
        g2_path = str(args.out).rsplit(".", 1)[0] + "_g2.csv"
        tagio.write_g2_csv(g2_path, curve, meta)
        print(f"{g2_path}: normalization={curve.normalization:.6g}")
    return EXIT_OK


def cmd_lifetime(args):
    cfg, chash = _load_config(args)
    sync = tagio.read_tags(tagio.cfg_get(cfg, "input_sync"))
    photons = tagio.read_tags(tagio.cfg_get(cfg, "input_photons"))
    bin_width = tagio.cfg_get(cfg, "bin_width_ps", int)
    hist, skipped = correlate.lifetime_histogram(sync, photons, bin_width)
    tagio.write_histogram_csv(args.out, hist, _meta(chash, cfg),
                              extra={"skipped_tags": skipped})
    print(f"{args.out}: {int(hist.counts.sum())} counts, {skipped} skipped")
    return EXIT_OK


def cmd_fit(args):
    cfg, chash = _load_config(args)
    model = tagio.cfg_get(cfg, "model")
    if model not in fitting.MODELS:
        raise ConfigError(f"invalid value for config key 'model': {model!r}")
    x, y = tagio.read_xy_csv(tagio.cfg_get(cfg, "input"))
    sigma = None
    if tagio.cfg_get(cfg, "poisson_sigma", str, "no") == "yes":
        sigma = np.sqrt(np.maximum(y, 1.0))
    init = {k[len("init_"):]: float(v) for k, v in cfg.items()
            if k.startswith("init_")}
    fixed = {k[len("fix_"):]: float(v) for k, v in cfg.items()
             if k.startswith("fix_")}
    result = fitting.fit(model, fitting.CurveData(x, y, sigma),
                         init=init, fixed=fixed)
    doc = {
        "model": result.model,
        "params": result.params,
        "sigmas": result.sigma,
        "chi2_reduced": result.chi2_reduced,
        "converged": result.converged,
        "n_iter": result.n_iter,
        "metadata": {**result.metadata,
                     "config_hash": chash,
                     "jacobian_mode": result.jacobian_mode},
    }
    tagio.write_json(args.out, doc)
    print(f"{args.out}: converged={result.converged} "
          f"chi2_reduced={result.chi2_reduced:.4g}")
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def cmd_qe_bound(args):
    cfg, chash = _load_config(args)
    inp = extraction.QEBoundInput(
        tau_off=tagio.cfg_get(cfg, "tau_off_ns", float),
        sigma_off=tagio.cfg_get(cfg, "sigma_off_ns", float),
        flux_ratio=tagio.cfg_get(cfg, "flux_ratio", float),
        sigma_ratio=tagio.cfg_get(cfg, "flux_ratio_sigma", float, 0.0),
        f_dw=tagio.cfg_get(cfg, "f_dw", float),
    )
    mult = tagio.cfg_get(cfg, "sigma_multiplier", float, 3.0)
    bound, sigma = extraction.qe_upper_bound(inp, sigma_multiplier=mult)
    tau_th = inp.tau_off - mult * inp.sigma_off
    doc = {
        "inputs": {"tau_off_ns": inp.tau_off, "sigma_off_ns": inp.sigma_off,
                   "flux_ratio": inp.flux_ratio, "f_dw": inp.f_dw,
                   "sigma_multiplier": mult},
        "tau_off_th_ns": tau_th,
        "f_p": inp.flux_ratio - 1.0,
        "qe_bound": bound,
        "qe_bound_sigma": sigma,
        "config_hash": chash,
    }
    tagio.write_json(args.out, doc)
    print(f"{args.out}: qe_bound={bound:.4f}")
    return EXIT_OK


def cmd_detune_report(args):
    cfg, chash = _load_config(args)
    records = tagio.read_tuning_records(tagio.cfg_get(cfg, "records"))
    doc = {"config_hash": chash, "detunings": {}}
    for label, rec in records.items():
        d, s = extraction.detuning(rec)
        doc["detunings"][label] = {"delta_nm": d, "sigma_nm": s}
    on_label = tagio.cfg_get(cfg, "on_label", str, "")
    off_label = tagio.cfg_get(cfg, "off_label", str, "")
    if on_label and off_label:
        for lbl in (on_label, off_label):
            if lbl not in records:
                raise ConfigError(f"invalid value for config key "
                                  f"'on_label'/'off_label': {lbl!r} not in table")
        rep = extraction.enhancement_report(records[on_label],
                                            records[off_label])
        doc["enhancement"] = {
            k: {"value": v[0], "sigma": v[1]} for k, v in rep.items()}
    tagio.write_json(args.out, doc)
    print(f"{args.out}: {len(records)} records")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="purcell",
        description="Simulate and analyze cavity-coupled single-emitter "
                    "photon streams.")
    sub = ap.add_subparsers(dest="command", required=True)
    specs = [
        ("simulate", cmd_simulate, "generate time-tag streams"),
        ("correlate", cmd_correlate, "coincidence histogram / g2 curve"),
        ("lifetime", cmd_lifetime, "sync-referenced arrival-time histogram"),
        ("fit", cmd_fit, "nonlinear least-squares model fit"),
        ("qe-bound", cmd_qe_bound, "quantum-efficiency upper bound"),
        ("detune-report", cmd_detune_report, "detuning/enhancement report"),
    ]
    for name, func, help_text in specs:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--out", required=True, help="output path (or prefix)")
        p.add_argument("--format", choices=("bin", "csv"), default="bin",
                       help="time-tag output format")
        p.set_defaults(func=func)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, DomainError, GuessError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RankDeficientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
