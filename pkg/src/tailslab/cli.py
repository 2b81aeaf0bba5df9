"""Command-line interface.

    tailslab pipeline --config run.cfg [--out DIR] [--name NAME]
                      [--sweep key=v1,v2,...] [--jobs N]
    tailslab simulate  --config run.cfg [--out DIR] [--name NAME]
    tailslab radiation --run DIR
    tailslab coeffs    --run DIR [--cutoff t0:t1 --cutoff t0:t1]
    tailslab fit       --run DIR
    tailslab report    --run DIR  (also: --reference prints the config keys)
    tailslab kernels   [--k 1 2 3] [--t 40] [--bode]

The output root defaults to ./runs, overridable by --out or TAILSLAB_OUT.
Exit code: 0 when all verdicts pass (or the command is informational),
1 otherwise.  --seedless is accepted for forward compatibility; the
pipeline is always deterministic and seed-free.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

from .config import BUNDLED, ConfigError, REFERENCE, load_config, parse_config


def _load_cfg_for_run(run_dir):
    path = os.path.join(run_dir, "config.cfg")
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"{path} not found: run 'tailslab simulate' first")
    return load_config(path)


def _require(run_dir, *names):
    missing = [n for n in names
               if not os.path.exists(os.path.join(run_dir, n))]
    if missing:
        raise FileNotFoundError(
            f"missing upstream artifacts in {run_dir}: {', '.join(missing)}; "
            "run the earlier pipeline stages first")


def _read_config_arg(args):
    if args.config in BUNDLED:
        return BUNDLED[args.config]
    with open(args.config) as fh:
        return fh.read()


def cmd_pipeline(args):
    from .pipeline import run_pipeline
    text = _read_config_arg(args)
    if args.sweep:
        key, _, values = args.sweep.partition("=")
        jobs = []
        for v in values.split(","):
            section, _, opt = key.partition(".")
            swept = _override(text, section, opt, v.strip())
            jobs.append((swept, f"{args.name or 'sweep'}-{opt}-{v.strip()}"))
        results = []
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=args.jobs) as pool:
            futs = [pool.submit(run_pipeline, t, args.out, n)
                    for t, n in jobs]
            for fut in futs:
                results.append(fut.result())
        ok = all(r.all_passed() or r.extras.get("no_tail") for r in results)
        for r in results:
            print(f"{r.extras['run_dir']}: "
                  f"{'pass' if r.all_passed() else 'see report'}")
        return 0 if ok else 1
    report = run_pipeline(text, args.out, args.name)
    print(f"run dir: {report.extras['run_dir']}")
    print(f"{report.coefficient_name} = {report.coefficient:.6g} "
          f"+- {report.coefficient_err:.2g}")
    for fit, v in zip(report.fits, report.verdicts):
        print(f"  r={fit.probe_r:g}: exponent {fit.exponent:.3f}, "
              f"ratio {v.ratio:.3f}, {'pass' if v.passed else 'FAIL'}")
    if report.extras.get("no_tail"):
        print("verdict: no-tail (informational)")
        return 0
    if report.out_of_hypothesis:
        print("verdict: out-of-hypothesis (blowup)")
        return 0
    print(f"verdict: {'pass' if report.all_passed() else 'FAIL'}")
    return 0 if report.all_passed() else 1


def _override(text, section, key, value):
    lines = text.splitlines()
    out = []
    in_section = False
    done = False
    for line in lines:
        s = line.strip()
        if s.startswith("["):
            if in_section and not done:
                out.append(f"{key} = {value}")
                done = True
            in_section = s == f"[{section}]"
        elif in_section and s.split("=")[0].strip() == key:
            out.append(f"{key} = {value}")
            done = True
            continue
        out.append(line)
    if not done:
        out += [f"[{section}]", f"{key} = {value}"]
    return "\n".join(out) + "\n"


def cmd_simulate(args):
    from .pipeline import config_hash, out_root, stage_simulate
    text = _read_config_arg(args)
    cfg = parse_config(text)
    run_dir = os.path.join(out_root(args.out),
                           args.name or f"run-{config_hash(text)}")
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.cfg"), "w") as fh:
        fh.write(text)
    traj, blowup = stage_simulate(run_dir, cfg)
    print(f"simulated to t={traj.times[-1]:g} "
          f"({'blowup at %g' % blowup if blowup else 'complete'}); "
          f"artifacts in {run_dir}")
    return 0


def cmd_radiation(args):
    from .pipeline import stage_radiation
    _require(args.run, "scri_trace.csv")
    cfg = _load_cfg_for_run(args.run)
    series = stage_radiation(args.run, cfg)
    which = "rad1+rad2" + ("+rad3" if series.rad3 is not None else "")
    print(f"radiation series ({which}) written for {args.run}")
    return 0


def cmd_coeffs(args):
    from .pipeline import read_coefficients, stage_coeffs
    _require(args.run, "scri_trace.csv", "snapshots.bin")
    cfg = _load_cfg_for_run(args.run)
    if args.cutoff:
        windows = []
        for w in args.cutoff:
            a, _, b = w.partition(":")
            windows.append((float(a), float(b)))
        cfg.cutoffs = tuple(windows)
    stage_coeffs(args.run, cfg)
    coeffs = read_coefficients(args.run)
    name = coeffs.get("coefficient_name", "c0")
    print(f"{name} = {coeffs.get('coefficient')}")
    for k, v in coeffs.items():
        if k.startswith("cutoff["):
            print(f"  {k} = {v}")
    if "cutoff_spread" in coeffs:
        print(f"relative difference between windows: "
              f"{coeffs['cutoff_spread']:.3%}")
    return 0


def cmd_fit(args):
    from .pipeline import stage_fit
    _require(args.run, "trajectory.csv", "coefficients.txt")
    cfg = _load_cfg_for_run(args.run)
    fits, verdicts = stage_fit(args.run, cfg)
    for fit, v in zip(fits, verdicts):
        print(f"r={fit.probe_r:g}: exponent {fit.exponent:.4f} "
              f"+- {fit.exponent_err:.4f}, ratio {v.ratio:.3f}, "
              f"{'pass' if v.passed else 'FAIL'}")
    return 0 if all(v.passed for v in verdicts) or not verdicts else 1


def cmd_report(args):
    if args.reference:
        print(REFERENCE)
        return 0
    if not args.run:
        raise FileNotFoundError("--run is required (or use --reference)")
    from .pipeline import stage_report
    _require(args.run, "trajectory.csv", "coefficients.txt")
    cfg = _load_cfg_for_run(args.run)
    report = stage_report(args.run, cfg)
    with open(os.path.join(args.run, "report.txt")) as fh:
        sys.stdout.write(fh.read())
    return 0 if report.all_passed() or report.extras.get("no_tail") else 1


def cmd_kernels(args):
    from .kernels import (LogGridFunction, bode_leading, bode_residual,
                          solve_bode, tail_kernel, tail_kernel_check,
                          umod_log_coefficient)
    import numpy as np
    rc = 0
    print(f"{'k':>3} {'d_k':>12} {'numeric':>24} {'rel err':>10}")
    for k in args.k:
        rel, fitted, exact = tail_kernel_check(k, args.t)
        flag = "" if rel < 0.02 else "  <-- above 2%"
        print(f"{k:>3} {str(exact):>12} {fitted:>24.6f} {rel:>10.2e}{flag}")
        if rel >= 0.02:
            rc = 1
    coeff = umod_log_coefficient(1.0)
    print(f"model-solution log coefficient (source 1): {coeff:.6f} "
          f"(expect 1)")
    if abs(coeff - 1.0) > 0.02:
        rc = 1
    if args.bode:
        f = LogGridFunction.from_function(lambda r: r ** 3)
        u = solve_bode(f, 3.0)
        err = float(np.max(np.abs(u.values - f.rho ** 3 / 2)))
        print(f"bode rho^3 -> rho^3/2: max err {err:.2e}")
        print(f"bode leading of rho^3 on (0,1]: "
              f"{bode_leading(f):.10f} (expect 0.5)")
        res = bode_residual(u, f)
        print(f"bode residual identity: {float(np.max(np.abs(res[5:-5]))):.2e}")
    return rc


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="tailslab",
        description="hyperboloidal evolution of semilinear waves and "
                    "verification of their late-time tail coefficients")
    ap.add_argument("--seedless", action="store_true", default=True,
                    help="reserved; the pipeline is always deterministic")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", aliases=["run"],
                       help="full simulate/radiation/coeffs/fit/report chain")
    p.add_argument("--config", required=True,
                   help="config file path or bundled name "
                        f"({', '.join(sorted(BUNDLED))})")
    p.add_argument("--out", default=None, help="output root (TAILSLAB_OUT)")
    p.add_argument("--name", default=None)
    p.add_argument("--sweep", default=None,
                   help="section.key=v1,v2,... parameter sweep")
    p.add_argument("--jobs", type=int, default=2)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("simulate", help="evolution stage only")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--name", default=None)
    p.set_defaults(fn=cmd_simulate)

    for name, fn, hlp in (("radiation", cmd_radiation,
                           "radiation fields from a stored run"),
                          ("fit", cmd_fit, "tail fits from a stored run")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--run", required=True)
        p.set_defaults(fn=fn)

    p = sub.add_parser("coeffs", help="coefficient formulas from a stored run")
    p.add_argument("--run", required=True)
    p.add_argument("--cutoff", action="append", default=None,
                   help="t0:t1 (repeatable; two windows check independence)")
    p.set_defaults(fn=cmd_coeffs)

    p = sub.add_parser("report", help="regenerate report from stored CSVs")
    p.add_argument("--run", default=None)
    p.add_argument("--reference", action="store_true",
                   help="print the annotated config reference and exit")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("kernels", help="standalone kernel self-checks")
    p.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    p.add_argument("--t", type=float, default=40.0)
    p.add_argument("--bode", action="store_true")
    p.set_defaults(fn=cmd_kernels)

    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
