"""Command-line interface: ``accrue-calib <command> ...``.

Data artifacts go to files (or stdout with ``--out -``); progress and
reports go to stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from . import pipeline as P
from .synthetic import Scenario, generate, true_params

log = logging.getLogger("accrue")


def _out_stream(path):
    return sys.stdout if path in (None, "-") else path


# --------------------------------------------------------------------------
# report formatting


def _quartiles(values) -> list[float]:
    return [float(v) for v in np.quantile(np.asarray(values), [0.0, 0.25, 0.5, 0.75, 1.0])]


def metrics_table(report: P.MetricsReport) -> str:
    rows = [
        ("n", str(report.n)),
        ("mean CRPS", f"{report.crps:.6f}"),
        ("RS", f"{report.rs:.6f}"),
        ("ACCRUE", f"{report.accrue:.6f}"),
        ("beta", f"{report.beta:.6g}"),
        ("MAE", f"{report.mae:.6f}"),
        ("coverage 50%", f"{report.coverage50:.4f}"),
        ("coverage 95%", f"{report.coverage95:.4f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"  {k:<{width}}  {v}" for k, v in rows)


def metrics_kv(report: P.MetricsReport, prefix: str = "") -> str:
    return "\n".join(f"{prefix}{k}={fio.fmt(v) if k != 'n' else v}"
                     for k, v in report.as_dict().items())


def calibration_report(run: P.CalibrationRun, source_desc: str, seed: int,
                       members: int) -> str:
    out = ["ACCRUE calibration report", f"source: {source_desc}", f"seed: {seed}",
           f"members: {members}"]
    for fam, fr in run.runs.items():
        out.append(f"[{fam.value}]")
        if fr.search is None:
            out.append(f"  beta_star: {fr.median.beta_star:g} (fixed by --beta)")
        else:
            out.append("  beta search (validation partition):")
            out.append("    beta      crps          rs            distance")
            for c in fr.search.cells:
                out.append(f"    {c.beta:.1f}  {c.crps:12.6f}  {c.rs:12.6f}  {c.distance:12.6f}")
            out.append(f"  beta_star: {fr.search.beta.value:g}")
        q = _quartiles([m.test_loss for m in fr.members])
        out.append("  member test loss min/q1/median/q3/max: " + " ".join(f"{v:.6f}" for v in q))
        out.append(f"  median member: seed={fr.median.seed} test_loss={fr.median.test_loss:.6f}")
    if run.selection is not None:
        sel = run.selection
        out.append(
            f"family selection: tpg={sel.losses['tpg']:.6f} al={sel.losses['al']:.6f} "
            f"selected={sel.family.value}" + (" (tie)" if sel.tie else "")
        )
    metrics = run.metrics
    out.append(f"selected family: {run.selected.family.value}")
    out.append(f"test metrics (n={metrics.n}):")
    out.append(metrics_table(metrics))
    out.append(metrics_kv(metrics, prefix="test_"))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    data = generate(args.scenario, args.n, args.seed)
    fio.write_csv(data, _out_stream(args.out))
    return 0


def cmd_calibrate(args) -> int:
    if (args.data is None) == (args.scenario is None):
        raise ValueError("give exactly one of --data or --scenario")
    if args.scenario is not None:
        source = P.SyntheticSource(Scenario.parse(args.scenario), args.n)
        desc = f"scenario {source.scenario.value} (fresh synthetic data, n={source.n} per member)"
    else:
        source = fio.read_csv(args.data)
        desc = f"{Path(args.data).name} (n={len(source)}, d={source.d})"
    families = ["tpg", "al"] if args.family == "auto" else [args.family]
    if args.members == 1:
        log.warning("--members 1: ensembling is disabled, the single member is used as is")
    run = P.calibrate(source, families, seed=args.seed, n_members=args.members,
                      beta=args.beta, jobs=args.jobs)
    fio.write_model(run.selected, args.out)
    report = calibration_report(run, desc, args.seed, args.members)
    sys.stderr.write(report)
    if args.report:
        Path(args.report).write_text(report)
    return 0


def cmd_predict(args) -> int:
    model = fio.read_model(args.model)
    data = fio.read_csv(args.data)
    if data.d != model.d_in:
        raise ValueError(f"data has {data.d} input(s), model expects {model.d_in}")
    bounds = P.interval_bounds(model, data.x, data.m)
    fio.write_predictions(data.x, data.m, bounds, _out_stream(args.out))
    return 0


def cmd_evaluate(args) -> int:
    model = fio.read_model(args.model)
    data = fio.read_csv(args.data)
    report = P.evaluate(model, data)
    sys.stderr.write(f"evaluation of {args.model} on {args.data}\n{metrics_table(report)}\n")
    sys.stdout.write(metrics_kv(report) + "\n")
    return 0


def cmd_params(args) -> int:
    """Learned parameter curves on a 1-D grid, for plotting."""
    model = fio.read_model(args.model)
    if model.d_in != 1:
        raise ValueError("parameter curves are only available for one-input models")
    x = np.linspace(args.lo, args.hi, args.grid)
    theta = model.params(x[:, None])
    names = {"gaussian": ["sigma"], "tpg": ["sigma1", "sigma2"], "al": ["lambda", "kappa"]}
    cols = names[model.family.value]
    header = ["x_1", *cols]
    table = [x, *theta.T]
    if args.scenario is not None:
        scen = Scenario.parse(args.scenario)
        truth = true_params(scen, np.clip(x, 0.0, 1.0))
        header += [f"true_{c}" for c in (cols if scen.family.learnable else ["alpha", "rate"])]
        table += list(truth.T)
    out = _out_stream(args.out)
    fh = open(out, "w") if isinstance(out, str) else out
    try:
        fh.write(",".join(header) + "\n")
        for row in zip(*table):
            fh.write(",".join(fio.fmt(v) for v in row) + "\n")
    finally:
        if fh is not out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accrue-calib",
        description="Learn input-dependent skewed uncertainty around point predictions.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    scen_names = [s.value for s in Scenario]

    g = sub.add_parser("generate", help="write a synthetic scenario dataset as CSV")
    g.add_argument("--scenario", required=True, choices=scen_names)
    g.add_argument("--n", type=int, default=10_000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default="-")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("calibrate", help="beta search, ensemble training and model selection")
    c.add_argument("--data", help="CSV with columns x_1..x_d,m,y")
    c.add_argument("--scenario", choices=scen_names,
                   help="draw fresh synthetic data per member instead of reading --data")
    c.add_argument("--n", type=int, default=10_000, help="pairs per member with --scenario")
    c.add_argument("--family", default="auto", choices=["gaussian", "tpg", "al", "auto"])
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--members", type=int, default=100)
    c.add_argument("--beta", type=float, help="skip the grid search and use this beta")
    c.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: ACCRUE_CALIB_THREADS or CPU count)")
    c.add_argument("--out", required=True, help="model file to write")
    c.add_argument("--report", help="also write the report to this file")
    c.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("predict", help="median and 50%%/95%% intervals per input row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="CRPS, RS, ACCRUE, MAE and coverage on a data file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("params", help="learned parameter curves for a one-input model")
    q.add_argument("--model", required=True)
    q.add_argument("--grid", type=int, default=101)
    q.add_argument("--lo", type=float, default=0.0)
    q.add_argument("--hi", type=float, default=1.0)
    q.add_argument("--scenario", choices=scen_names, help="add the generating parameters")
    q.add_argument("--out", default="-")
    q.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if getattr(args, "members", 2) is not None and getattr(args, "members", 2) < 1:
        parser.error("--members must be at least 1")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        sys.stderr.write(f"accrue-calib {args.command}: error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
