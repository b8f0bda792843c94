"""Command line interface.

Verbs:
  run      integrate one configured scenario, write trace + metrics
  certify  sample the configured Lyapunov family's certificate
  compare  run several configs differing only in [adapt], tabulate metrics
  lemma1   drive the leakage gain dynamics with a synthetic signal

Exit codes: 0 success, 2 validation error, 3 integration divergence
(partial trace still written), 4 failed certificate.  Diagnostics go to
standard error.  UCLF_ADAPT_THREADS caps the compare worker pool.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .adapt import GainFunction
from .config import load_scenario, parse_config
from .errors import ConfigError, SimulationDivergedError, UclfAdaptError
from .plant import default_boxes, make_model
from .simloop import compute_metrics, lemma1_harness, run_scenario
from .uclf import make_uclf, verify_uclf
from .writers import (format_float, write_compare_csv, write_metrics_json,
                      write_trace_csv, write_trace_json)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_CERT_FAILED = 4


def _fail(msg, code):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _out_paths(cfg, out_dir, fmt):
    stem = cfg.output_path or Path(cfg.path).stem
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if fmt == "csv" else "json"
    return out / f"{stem}.trace.{ext}", out / f"{stem}.metrics.json"


def cmd_run(args):
    try:
        cfg = parse_config(args.config)
        scenario = load_scenario(cfg)
    except UclfAdaptError as err:
        return _fail(str(err), EXIT_CONFIG)
    fmt = args.format or cfg.output_format
    trace_path, metrics_path = _out_paths(cfg, args.out, fmt)
    write = write_trace_csv if fmt == "csv" else write_trace_json
    try:
        trace, metrics = run_scenario(scenario)
    except SimulationDivergedError as err:
        if err.trace is not None:
            write(trace_path, err.trace)
            write_metrics_json(metrics_path, compute_metrics(err.trace), err.trace)
            print(f"partial trace written to {trace_path}", file=sys.stderr)
        return _fail(str(err), EXIT_DIVERGED)
    write(trace_path, trace)
    write_metrics_json(metrics_path, metrics, trace)
    print(f"wrote {trace_path} and {metrics_path}")
    return EXIT_OK


def cmd_certify(args):
    try:
        cfg = parse_config(args.config)
        model = make_model(cfg.model_id)
        theta_box, _ = default_boxes(cfg.model_id)
        family = make_uclf(cfg.uclf_id, model, theta_box, cfg.uclf_constants)
    except UclfAdaptError as err:
        return _fail(str(err), EXIT_CONFIG)
    spec = cfg.certify
    x_points = args.samples or spec.x_points
    report = verify_uclf(family, model, theta_box, x_range=spec.x_range,
                         x_points=x_points, th_points=spec.th_points,
                         tol=spec.tol)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CERT_FAILED


def _compare_worker(path):
    cfg = parse_config(path)
    trace, metrics = run_scenario(load_scenario(cfg))
    return metrics, trace.meta.get("variant", "")


def cmd_compare(args):
    if len(args.configs) < 2:
        return _fail("compare needs at least two configs", EXIT_CONFIG)
    try:
        cfgs = [parse_config(p) for p in args.configs]
    except UclfAdaptError as err:
        return _fail(str(err), EXIT_CONFIG)
    base = {k: v for k, v in cfgs[0].raw.items() if k not in ("adapt", "output")}
    for cfg in cfgs[1:]:
        other = {k: v for k, v in cfg.raw.items() if k not in ("adapt", "output")}
        if other != base:
            return _fail(
                f"{cfg.path} differs from {cfgs[0].path} outside [adapt]",
                EXIT_CONFIG)

    workers = os.environ.get("UCLF_ADAPT_THREADS")
    workers = max(1, int(workers)) if workers else (os.cpu_count() or 1)
    workers = min(workers, len(cfgs))
    results = []
    try:
        if workers == 1:
            results = [_compare_worker(p) for p in args.configs]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_compare_worker, args.configs))
    except SimulationDivergedError as err:
        return _fail(str(err), EXIT_DIVERGED)
    except UclfAdaptError as err:
        return _fail(str(err), EXIT_CONFIG)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "compare.csv"
    rows = [(Path(p).stem, variant, metrics)
            for p, (metrics, variant) in zip(args.configs, results)]
    write_compare_csv(table, rows)
    print(f"wrote {table}")
    return EXIT_OK


def _make_signal(kind, amplitude, duration):
    if kind == "pulse":
        return lambda t: amplitude if t < duration else 0.0
    if kind == "decay":
        return lambda t: amplitude * math.exp(-t / duration)
    if kind == "sine":
        return lambda t: amplitude * math.sin(2.0 * math.pi * t / duration)
    raise ConfigError(f"unknown signal kind {kind!r}; one of pulse, decay, sine")


def cmd_lemma1(args):
    try:
        if args.gain == "rational":
            raise ConfigError(
                "the rational gain family has zero slope at the start point "
                "rho = 0; the leakage dynamics need the exponential family")
        gain = GainFunction(args.gain, args.gamma_bar, args.tau)
        if not args.duration > 0:
            raise ConfigError("signal duration must be > 0")
        signal = _make_signal(args.signal, args.amplitude, args.duration)
        if not args.lam > 0:
            raise ConfigError("lambda must be > 0")
    except UclfAdaptError as err:
        return _fail(str(err), EXIT_CONFIG)

    report = lemma1_harness(gain, args.lam, args.k, signal,
                            horizon=args.horizon, step=args.step)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace_path = out / "lemma1_rho.csv"
    with open(trace_path, "w", newline="") as fh:
        fh.write("t,rho\n")
        for t, r in zip(report.t, report.rho):
            fh.write(f"{format_float(t)},{format_float(r)}\n")
    summary = {
        "gain_family": args.gain,
        "lambda": args.lam,
        "k": args.k,
        "signal": args.signal,
        "amplitude": args.amplitude,
        "duration": args.duration,
        "sup_abs_rho": report.sup_abs,
        "final_abs_rho": report.final_abs,
        "bounded": bool(np.isfinite(report.sup_abs)),
    }
    report_path = out / "lemma1_report.json"
    with open(report_path, "w", newline="") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"sup|rho| = {report.sup_abs:.6g}, |rho(T)| = {report.final_abs:.3g}; "
          f"wrote {trace_path} and {report_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="uclf-adapt",
        description="Simulate adaptive control with per-parameter dynamic "
                    "adaptation gains and certify its Lyapunov machinery.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured scenario")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=".")
    p_run.add_argument("--format", choices=("csv", "json"), default=None)
    p_run.set_defaults(func=cmd_run)

    p_cert = sub.add_parser("certify", help="sample a family's certificate")
    p_cert.add_argument("--config", required=True)
    p_cert.add_argument("--samples", type=int, default=None,
                        help="state-grid points per axis")
    p_cert.set_defaults(func=cmd_certify)

    p_cmp = sub.add_parser("compare", help="run configs differing in [adapt]")
    p_cmp.add_argument("--configs", nargs="+", required=True)
    p_cmp.add_argument("--out", default=".")
    p_cmp.set_defaults(func=cmd_compare)

    p_l1 = sub.add_parser("lemma1", help="leakage dynamics under synthetic input")
    p_l1.add_argument("--gain", default="exponential",
                      choices=("exponential", "rational"))
    p_l1.add_argument("--gamma-bar", dest="gamma_bar", type=float, default=1.0)
    p_l1.add_argument("--tau", type=float, default=1.0)
    p_l1.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p_l1.add_argument("--k", type=float, default=1.0 / 9.0,
                      help="input gain applied while the signal is negative")
    p_l1.add_argument("--signal", default="pulse",
                      choices=("pulse", "decay", "sine"))
    p_l1.add_argument("--amplitude", type=float, default=-0.9)
    p_l1.add_argument("--duration", type=float, default=5.0)
    p_l1.add_argument("--horizon", type=float, default=20.0)
    p_l1.add_argument("--step", type=float, default=1e-3)
    p_l1.add_argument("--out", default=".")
    p_l1.set_defaults(func=cmd_lemma1)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
