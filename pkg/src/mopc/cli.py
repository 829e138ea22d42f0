"""Command-line front end: generate, solve, compare, report.

Outputs carry no timestamps, so the same command on the same inputs writes
byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import admm, baseline, gen
from .model import (
    InstanceError,
    ProblemInstance,
    SolveReport,
    cardinality_ok,
    load_instance,
    read_trace,
    save_instance,
    write_trace,
)

SCHEMES = ("num", "mopc", "cvx-mopc", "fw", "fw-relaxed", "fw-projected", "fw-relaxed-projected")
COMPARE_SCHEMES = ("cvx-mopc", "fw", "fw-relaxed", "fw-projected", "fw-relaxed-projected", "mopc")
SUMMARY_COLUMNS = ("scheme", "obj", "delay", "fairness", "load", "card_ok", "status", "iterations")

log = logging.getLogger("mopc")


class CliError(Exception):
    """A usage or input problem; reported with exit status 2."""


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_error(out: Path | None, kind: str, message: str, **extra) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    _dump_json({"error": kind, "message": message, **extra}, out / "error.json")


def _solve_options(args) -> admm.SolveOptions:
    kw = {}
    for flag, name in (("rho0", "rho0"), ("max_iters", "max_iters"), ("eps_abs", "eps_abs"),
                       ("eps_rel", "eps_rel"), ("eps_tol1", "eps_tol1"), ("eps_tol2", "eps_tol2")):
        v = getattr(args, flag, None)
        if v is not None:
            kw[name] = v
    return admm.SolveOptions(**kw)


def _fw_options(args) -> baseline.FwOptions:
    kw = {}
    if getattr(args, "fw_max_iters", None) is not None:
        kw["max_iters"] = args.fw_max_iters
    if getattr(args, "fw_step", None) is not None:
        kw["step"] = args.fw_step
    return baseline.FwOptions(**kw)


def _instance(args, out: Path | None) -> ProblemInstance:
    if args.instance is not None:
        if not Path(args.instance).is_file():
            raise CliError(f"no instance file at {args.instance}")
        inst = load_instance(args.instance)
    elif args.seed is not None:
        inst = gen.generate_instance(gen.desk_scale(args.seed))
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            save_instance(inst, out / "instance.json")
    else:
        raise CliError("either --instance or --seed is required")
    changes = {k: getattr(args, k) for k in ("alpha", "beta") if getattr(args, k, None) is not None}
    return inst.replace(**changes) if changes else inst


def run_scheme(instance: ProblemInstance, scheme: str, sopts: admm.SolveOptions,
               fopts: baseline.FwOptions) -> SolveReport:
    if scheme == "num":
        return admm.solve_num(instance, sopts)
    if scheme == "mopc":
        rep = admm.solve_mopc(instance, sopts)
        rep.scheme = "mopc"
        return rep
    if scheme == "cvx-mopc":
        rep = admm.solve_mopc(instance.replace(cardinality_caps=instance.paths_per_flow), sopts)
        # metrics are identical; the allocation is reported against the caller's instance
        rep.scheme = "cvx-mopc"
        return rep
    if scheme in baseline.BASELINE_SCHEMES:
        return baseline.run_baseline(instance, scheme, fopts)
    raise CliError(f"unknown scheme {scheme!r}")


def _write_run(rep: SolveReport, instance: ProblemInstance, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = rep.to_dict()
    doc["card_ok"] = cardinality_ok(instance, rep.final.x)
    _dump_json(doc, out / "report.json")
    write_trace(rep, out / "trace.csv")


def _run_one(payload):
    instance, scheme, sopts, fopts, out = payload
    try:
        rep = run_scheme(instance, scheme, sopts, fopts)
    except (ArithmeticError, ValueError) as exc:
        _write_error(out, type(exc).__name__, str(exc), scheme=scheme)
        return scheme, None, str(exc)
    _write_run(rep, instance, out)
    if rep.status == "error":
        _write_error(out, "SolverError", rep.message, scheme=scheme)
    return scheme, rep, rep.message


# --- subcommands ---------------------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.out is None:
        raise CliError("--out is required")
    kw = {}
    for name in ("num_flows", "num_links", "distribution", "alpha", "beta"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    if args.cdf is not None:
        kw["empirical_cdf"] = gen.load_empirical_cdf(args.cdf)
        kw.setdefault("distribution", "empirical")
    seed = 0 if args.seed is None else args.seed
    if args.preset == "wan":
        base = gen.wan_scale()
        cfg = gen.GenConfig(**{**base.__dict__, **kw, "seed": seed})
    else:
        cfg = gen.desk_scale(seed, **kw)
    inst = gen.generate_instance(cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_instance(inst, out)
    print(f"wrote {out} (K={inst.num_flows}, L={inst.num_links}, P={inst.total_paths})")
    return 0


def cmd_solve(args) -> int:
    out = Path(args.out) if args.out else None
    if out is None:
        raise CliError("--out is required")
    inst = _instance(args, out)
    scheme, rep, msg = _run_one((inst, args.scheme, _solve_options(args), _fw_options(args), out))
    if rep is None or rep.status == "error":
        print(f"{scheme}: error: {msg}", file=sys.stderr)
        return 1
    m = rep.metrics
    print(f"{scheme}: {rep.status} after {rep.iterations} iterations; obj={m.obj:.6g} "
          f"delay={m.delay:.6g} fairness={m.fairness:.6g} load={m.load:.6g}")
    return 0


def summary_rows(instance: ProblemInstance, reports: list[tuple[str, SolveReport | None, str]]) -> list[list]:
    rows = []
    for scheme, rep, _ in reports:
        if rep is None or rep.metrics is None:
            rows.append([scheme, math.nan, math.nan, math.nan, math.nan, False, "error", 0])
            continue
        m = rep.metrics
        rows.append([scheme, m.obj, m.delay, m.fairness, m.load,
                     cardinality_ok(instance, rep.final.x), rep.status, rep.iterations])
    return rows


def write_summary(rows, path: Path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r[0]] + [repr(float(v)) for v in r[1:5]] + [str(bool(r[5])).lower(), r[6], r[7]])
    path.write_text(buf.getvalue())


def cmd_compare(args) -> int:
    out = Path(args.out) if args.out else None
    if out is None:
        raise CliError("--out is required")
    inst = _instance(args, out)
    schemes = tuple(s.strip() for s in args.schemes.split(",")) if args.schemes else COMPARE_SCHEMES
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise CliError(f"unknown scheme(s): {', '.join(bad)}")
    sopts, fopts = _solve_options(args), _fw_options(args)
    jobs = [(inst, s, sopts, fopts, out / s) for s in schemes]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            results = list(ex.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    rows = summary_rows(inst, results)
    write_summary(rows, out / "summary.csv")
    width = max(len(s) for s in schemes)
    print(f"{'scheme':<{width}}  {'obj':>12} {'delay':>12} {'fairness':>10} {'load':>8}  card  status")
    for r in rows:
        print(f"{r[0]:<{width}}  {r[1]:12.4f} {r[2]:12.4f} {r[3]:10.4f} {r[4]:8.4f}  "
              f"{'yes' if r[5] else 'no ':<4}  {r[6]}")
    failed = [r[0] for r in rows if r[6] == "error"]
    if failed:
        _write_error(out, "SolverError", f"failed schemes: {', '.join(failed)}", schemes=failed)
        return 1
    return 0


REPORT_COLUMNS = ("iter", "log10_p_res", "log10_{res}", "log10_vio", "obj", "rel_obj_gap", "L_rho")


def trace_to_plot_columns(header: list[str], data: np.ndarray) -> tuple[list[str], np.ndarray]:
    """Plot-ready view of a trace: log residuals and the gap to the final objective."""
    col = {name: i for i, name in enumerate(header)}
    res = header[4]
    if data.shape[0] == 0:
        return [c.format(res=res) for c in REPORT_COLUMNS], np.empty((0, len(REPORT_COLUMNS)))
    it = data[:, col["iter"]]
    if np.any(np.diff(it) <= 0):
        raise CliError("trace iterations are not strictly increasing")
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = [np.log10(data[:, col[c]]) for c in ("p_res", res, "vio")]
    obj = data[:, col["obj"]]
    final = obj[-1]
    gap = np.abs(obj - final) / max(abs(final), 1e-300)
    cols = np.column_stack([it, *logs, obj, gap, data[:, col["L_rho"]]])
    return [c.format(res=res) for c in REPORT_COLUMNS], cols


def cmd_report(args) -> int:
    if args.trace is None:
        raise CliError("--trace is required")
    src = Path(args.trace)
    if src.is_dir():
        src = src / "trace.csv"
    if not src.exists():
        raise CliError(f"no trace at {src}")
    header, data = read_trace(src)
    names, cols = trace_to_plot_columns(header, data)
    out = Path(args.out) if args.out else src.with_name("plot.csv")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in cols:
        w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(buf.getvalue())
    print(f"wrote {out} ({cols.shape[0]} rows)")
    return 0


# --- entry point ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mopc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("--instance", help="instance JSON file")
        sp.add_argument("--seed", type=int, help="generate a desk-scale instance with this seed")
        sp.add_argument("--alpha", type=float, help="override the load weight")
        sp.add_argument("--beta", type=float, help="override the fairness weight")
        sp.add_argument("--out", help="output directory")
        if solver:
            sp.add_argument("--rho0", type=float)
            sp.add_argument("--max-iters", type=int)
            sp.add_argument("--eps-abs", type=float)
            sp.add_argument("--eps-rel", type=float)
            sp.add_argument("--eps-tol1", type=float)
            sp.add_argument("--eps-tol2", type=float)
            sp.add_argument("--fw-max-iters", type=int)
            sp.add_argument("--fw-step", choices=("pairwise", "line_search", "open_loop"))

    g = sub.add_parser("generate", help="write a synthetic instance")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="instance file to write")
    g.add_argument("--preset", choices=("desk", "wan"), default="desk")
    g.add_argument("--num-flows", type=int)
    g.add_argument("--num-links", type=int)
    g.add_argument("--distribution", choices=gen.DISTRIBUTIONS)
    g.add_argument("--cdf", help="two-column (value, cumulative probability) table for sub-flow sizes")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run one scheme")
    common(s)
    s.add_argument("--scheme", choices=SCHEMES, default="mopc")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="run several schemes and tabulate their metrics")
    common(c)
    c.add_argument("--schemes", help=f"comma-separated subset (default: {','.join(COMPARE_SCHEMES)})")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    r = sub.add_parser("report", help="turn a trace into plot-ready columns")
    r.add_argument("--trace", help="trace.csv or a run directory")
    r.add_argument("--out", help="output CSV (default: plot.csv next to the trace)")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out) if getattr(args, "out", None) and args.command != "generate" else None
    try:
        return args.func(args)
    except (CliError, InstanceError, gen.GenConfigError) as exc:
        _write_error(out, type(exc).__name__, str(exc), command=args.command)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, OSError) as exc:
        _write_error(out, type(exc).__name__, str(exc), command=args.command)
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
