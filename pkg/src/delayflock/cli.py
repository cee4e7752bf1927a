"""Command-line entry point.

Subcommands: simulate, check, meanfield, stability, halanay, decay-rate.
Runs write CSV/JSON artifacts plus rendered figures into the output
directory; the manifest is always written last as the completeness marker.

Exit codes: 0 success (for `check`: condition holds), 1 condition or
oracle fails, 2 configuration/domain error, 3 numerical blow-up,
4 measure-splitting guard.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, config, diagnostics, kernels, meanfield, particle, plots

EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_LCM = 4


def _fmt(x):
    return repr(float(x))


def _out_dir(args):
    out = os.environ.get("DELAYFLOCK_OUT") or args.out
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out, args, started, seed):
    manifest = {
        "subcommand": args.command,
        "config": getattr(args, "config", None),
        "out_dir": str(out),
        "tool_version": __version__,
        "seed": seed,
        "wall_clock_seconds": time.perf_counter() - started,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load(args):
    cfg = config.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_trajectory_csv(path, record):
    d = record.x.shape[2]
    header = ["t", "i"] + [f"x_{k + 1}" for k in range(d)] + \
        [f"v_{k + 1}" for k in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(record.times):
            for i in range(record.x.shape[1]):
                writer.writerow([_fmt(t), i] +
                                [_fmt(val) for val in record.x[k, i]] +
                                [_fmt(val) for val in record.v[k, i]])


def _write_diagnostics_csv(path, record, lyap):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "d_X", "d_V", "max_speed", "lyapunov"])
        for k, t in enumerate(record.times):
            val = lyap[k] if lyap is not None else math.nan
            writer.writerow([_fmt(t), _fmt(record.d_x[k]), _fmt(record.d_v[k]),
                             _fmt(record.v_max[k]), _fmt(val)])


def _report_for(cfg, record, fit_window):
    """Flocking report from the seeded window, with the fitted rate from
    the recorded run when meaningful."""
    if cfg.model.n <= 2:
        return None
    x0, v0 = particle.resolve_initial(cfg)
    kind = "line" if isinstance(cfg.history, particle.SampledHistory) else cfg.history
    if isinstance(cfg.history, particle.SampledHistory):
        history = particle.seed_history(cfg.model, cfg.dt, sampled=cfg.history,
                                        interpolation=cfg.interpolation)
    else:
        history = particle.seed_history(cfg.model, cfg.dt, x0, v0, kind=kind,
                                        interpolation=cfg.interpolation)
    report = diagnostics.flocking_condition(history, cfg.model)
    if record is not None:
        times, _, d_v = record.forward()
        report.gamma_fitted = diagnostics.fit_decay_rate(times, d_v, fit_window)
    return report


def cmd_simulate(args):
    started = time.perf_counter()
    cfg = _load(args)
    out = _out_dir(args)
    record = particle.simulate(cfg)

    lyap = np.full(len(record.times), math.nan)
    for k in range(record.i0, len(record.times)):
        lyap[k] = diagnostics.lyapunov(float(record.times[k]), record, cfg.model)

    _write_trajectory_csv(out / "trajectory.csv", record)
    _write_diagnostics_csv(out / "diagnostics.csv", record, lyap)

    fit_window = (args.fit_start if args.fit_start is not None else cfg.t_end / 2.0,
                  args.fit_end if args.fit_end is not None else cfg.t_end)
    try:
        report = _report_for(cfg, record, fit_window)
        doc = report.to_json_dict() if report else \
            {"holds": None, "note": "condition needs more than two agents"}
    except diagnostics.PreconditionError as err:
        doc = {"holds": None, "note": str(err)}
    with open(out / "report.json", "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if not args.no_plots:
        plots.save_diagnostics_figure(record.times, record.d_x, record.d_v,
                                      lyap, out / "diagnostics.png")
    _write_manifest(out, args, started, cfg.seed)
    print(f"simulate: wrote {out} (t_end={cfg.t_end}, n={cfg.model.n})")
    return 0


def cmd_check(args):
    cfg = _load(args)
    x0, v0 = particle.resolve_initial(cfg)
    if isinstance(cfg.history, particle.SampledHistory):
        history = particle.seed_history(cfg.model, cfg.dt, sampled=cfg.history,
                                        interpolation=cfg.interpolation)
    else:
        history = particle.seed_history(cfg.model, cfg.dt, x0, v0,
                                        kind=cfg.history,
                                        interpolation=cfg.interpolation)
    report = diagnostics.flocking_condition(history, cfg.model)
    print(json.dumps(report.to_json_dict(), indent=2, sort_keys=True))
    return 0 if report.holds else EXIT_FAIL


def cmd_meanfield(args):
    started = time.perf_counter()
    cfg = _load(args)
    out = _out_dir(args)
    n_list = [int(tok) for tok in args.N.split(",") if tok]
    horizon = args.horizon if args.horizon is not None else cfg.t_end
    rows = meanfield.mean_field_experiment(cfg, n_list, horizon,
                                           stride=args.stride, jobs=args.jobs)
    with open(out / "convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "t", "w1", "ratio"])
        for row in rows:
            writer.writerow([row.n, _fmt(row.t), _fmt(row.w1), _fmt(row.ratio)])
    if not args.no_plots:
        plots.save_convergence_figure(rows, out / "convergence.png")
    _write_manifest(out, args, started, cfg.seed)
    print(f"meanfield: wrote {out} ({len(rows)} refinement pairs)")
    return 0


def _perturbation(kind, epsilon):
    def translate(x, v):
        shift = np.zeros(x.shape[1])
        shift[0] = epsilon
        return x + shift, v

    def velocity(x, v):
        v = v.copy()
        v[0, 0] += epsilon
        return x, v

    return {"translate": translate, "velocity": velocity}[kind]


def cmd_stability(args):
    started = time.perf_counter()
    cfg = _load(args)
    out = _out_dir(args)
    horizon = args.horizon if args.horizon is not None else cfg.t_end
    pert = _perturbation(args.perturb, args.epsilon)
    result = meanfield.stability_experiment(cfg, pert, horizon,
                                            stride=args.stride)
    with open(out / "stability.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epsilon", "t", "w1", "ratio"])
        for t, w1 in zip(result.times, result.w1):
            writer.writerow([_fmt(args.epsilon), _fmt(t), _fmt(w1),
                             _fmt(result.ratio)])
    if not args.no_plots:
        plots.save_stability_figure(result.times, result.w1,
                                    out / "stability.png")
    _write_manifest(out, args, started, cfg.seed)
    print(f"stability: ratio={result.ratio!r} (initial W1={result.w1_initial_max!r})")
    return 0


def cmd_halanay(args):
    gamma = kernels.halanay_rate(args.a, args.tau0)
    print(_fmt(gamma))
    status = 0
    t = u = None
    if args.oracle:
        t, u = kernels.halanay_decay_oracle(args.a, args.tau0)
        bound = np.exp(-gamma * t) * (1.0 + 1e-3)
        if np.all(u <= bound):
            print("oracle: PASS (delayed-sup Euler solution stays below the "
                  "certified envelope)")
        else:
            worst = float(np.max(u / bound))
            print(f"oracle: FAIL (max ratio to envelope {worst!r})")
            status = EXIT_FAIL
    if args.out is not None or os.environ.get("DELAYFLOCK_OUT"):
        started = time.perf_counter()
        out = _out_dir(args)
        if t is not None and not args.no_plots:
            plots.save_halanay_figure(t, u, gamma, out / "halanay.png")
        _write_manifest(out, args, started, None)
    return status


def cmd_decay_rate(args):
    try:
        data = np.genfromtxt(args.input, delimiter=",", names=True)
    except OSError:
        print(f"cannot read {args.input}", file=sys.stderr)
        return EXIT_CONFIG
    times = np.atleast_1d(data["t"])
    d_v = np.atleast_1d(data["d_V"])
    t_a = args.t_start if args.t_start is not None else float(times.min())
    t_b = args.t_end if args.t_end is not None else float(times.max())
    gamma = diagnostics.fit_decay_rate(times, d_v, (t_a, t_b))
    print(json.dumps({"gamma_fitted": gamma, "window": [t_a, t_b]}))
    return 0


def _add_common(sp, need_config=True):
    if need_config:
        sp.add_argument("--config", required=True, help="JSON run configuration")
    sp.add_argument("--out", default="delayflock_out",
                    help="output directory (DELAYFLOCK_OUT overrides)")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the config seed")
    sp.add_argument("--jobs", type=int, default=1,
                    help="parallel workers for independent runs")
    sp.add_argument("--no-plots", action="store_true",
                    help="skip figure rendering")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="delayflock",
        description="Delayed-alignment flocking lab: simulate, verify, probe "
                    "the mean-field limit.")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="integrate a run, emit artifacts")
    _add_common(sp)
    sp.add_argument("--fit-start", type=float, default=None)
    sp.add_argument("--fit-end", type=float, default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check", help="evaluate the flocking condition only")
    _add_common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("meanfield", help="nested particle-count convergence")
    _add_common(sp)
    sp.add_argument("--N", required=True,
                    help="comma-separated particle counts, e.g. 8,16,32,64")
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--stride", type=int, default=1,
                    help="distance evaluation stride over recorded nodes")
    sp.set_defaults(func=cmd_meanfield)

    sp = sub.add_parser("stability", help="perturbed-initial-data distance growth")
    _add_common(sp)
    sp.add_argument("--perturb", choices=("translate", "velocity"),
                    default="velocity")
    sp.add_argument("--epsilon", type=float, default=1e-3)
    sp.add_argument("--horizon", type=float, default=None)
    sp.add_argument("--stride", type=int, default=1)
    sp.set_defaults(func=cmd_stability)

    sp = sub.add_parser("halanay", help="certified delayed-decay rate")
    _add_common(sp, need_config=False)
    sp.add_argument("--a", type=float, required=True)
    sp.add_argument("--tau0", type=float, required=True)
    sp.add_argument("--oracle", action="store_true",
                    help="also integrate the scalar delayed-sup inequality")
    sp.set_defaults(func=cmd_halanay, out=None)

    sp = sub.add_parser("decay-rate", help="fit a decay rate from diagnostics CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--t-start", type=float, default=None)
    sp.add_argument("--t-end", type=float, default=None)
    sp.set_defaults(func=cmd_decay_rate)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except config.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except diagnostics.PreconditionError as err:
        print(f"precondition violated: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except kernels.DomainError as err:
        print(f"domain error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except particle.NumericsError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except meanfield.LcmGuardError as err:
        print(f"measure splitting refused: {err}", file=sys.stderr)
        return EXIT_LCM


if __name__ == "__main__":
    sys.exit(main())
