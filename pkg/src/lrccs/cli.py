"""Experiment runner.

Subcommands::

    lrccs generate --n 600 --q 600 --r 4 --m 80 --seed 1 --out p.bin
    lrccs run --problem p.bin --solver altgdmin --trials 20 --csv trace.csv
    lrccs compare --problem p.bin --solvers altgdmin,altmin:lrpr --csv cmp.csv
    lrccs plotdata --trace trace.csv --outdir plots/

Options may also come from a JSON file (``--config``) whose keys are the
long flag names without leading dashes; command-line flags take precedence.
``LRCCS_THREADS`` caps both BLAS threads and parallel trial workers.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    SOLVERS,
    SolverSpec,
    average_traces,
    problem_digest,
    run_trials,
    summarize,
)
from .federated import CommLedger
from .gdmin import GdConfig
from .initialization import InitConfig
from .lrpr import RwfConfig
from .metrics import CSV_COLUMNS, read_trace_csv
from .model import Problem, ProblemDims, load_problem, save_problem

log = logging.getLogger("lrccs")


def _threads():
    v = os.environ.get("LRCCS_THREADS")
    return int(v) if v else None


def _add_problem_args(p, required=False):
    g = p.add_argument_group("problem")
    g.add_argument("--n", type=int, required=required)
    g.add_argument("--q", type=int, required=required)
    g.add_argument("--r", type=int, required=required)
    g.add_argument("--m", type=int, required=required)
    g.add_argument("--seed", type=int, default=0, help="ground-truth seed")
    g.add_argument("--meas-seed", type=int, default=None,
                   help="measurement seed (default: seed + 1)")
    g.add_argument("--magnitude", action="store_true", help="magnitude-only observations")


def _add_solver_args(p):
    g = p.add_argument_group("solver")
    g.add_argument("--problem", type=Path, help="problem snapshot from `generate`")
    g.add_argument("--init", choices=("lrcs", "lrpr", "oracle"), default="lrcs")
    g.add_argument("--federated", type=int, default=0, metavar="L",
                   help="simulate L nodes (altgdmin only)")
    g.add_argument("--trials", type=int, default=1)
    g.add_argument("--jobs", type=int, default=None, help="parallel trial workers")
    g.add_argument("--T-max", type=int, default=500)
    g.add_argument("--eta-c", type=float, default=None,
                   help="step multiplier c in c/||X0||^2 (0.4 linear, 0.9 LRPR)")
    g.add_argument("--eta-rule", choices=("practical", "theorem"), default="practical")
    g.add_argument("--c-tilde", type=float, default=9.0)
    g.add_argument("--c-tilde-mode", choices=("fixed", "auto"), default="fixed")
    g.add_argument("--svd", choices=("auto", "exact", "power"), default="auto")
    g.add_argument("--stop-tol", type=float, default=0.01,
                   help="stop when SD(U_t, U_t-1) <= stop-tol * sqrt(r); 0 disables")
    g.add_argument("--patience", type=int, default=3)
    g.add_argument("--target-err", type=float, default=None,
                   help="stop once the relative error reaches this level")
    g.add_argument("--sample-split", action="store_true")
    g.add_argument("--rank", default=None, help="integer or 'auto' (default: problem r)")
    g.add_argument("--rank-b", type=float, default=85.0)
    g.add_argument("--rwf-step", type=float, default=0.5)
    g.add_argument("--rwf-cold-start", action="store_true")
    g.add_argument("--csv", type=Path, help="per-iteration CSV output")
    g.add_argument("--summary", type=Path, help="JSON summary output (default: stdout)")
    g.add_argument("--comm-log", type=Path, help="JSON-lines message log (federated)")


def build_parser():
    parser = argparse.ArgumentParser(prog="lrccs", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path, help="JSON file of default flag values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a problem snapshot")
    _add_problem_args(p, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-factors", action="store_true",
                   help="store only dims and seeds; factors are regenerated on load")

    p = sub.add_parser("run", help="run one solver, optionally over several trials")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--solver", choices=SOLVERS, default="altgdmin")

    p = sub.add_parser("compare", help="run several solvers on one problem")
    _add_problem_args(p)
    _add_solver_args(p)
    p.add_argument("--solvers", required=True,
                   help="comma-separated list; 'altmin:lrpr' selects an init per solver")

    p = sub.add_parser("plotdata", help="two-column gnuplot files, one per metric")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--x", choices=("iter", "elapsed_s"), default="iter")
    return parser


def _apply_config(parser, argv):
    pre, _ = parser.parse_known_args(argv)
    if pre.config is None:
        return
    cfg = json.loads(pre.config.read_text())
    defaults = {k.lstrip("-").replace("-", "_"): v for k, v in cfg.items()}
    parser.set_defaults(**defaults)
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            known = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in defaults.items() if k in known})


def _problem(args) -> Problem:
    if getattr(args, "problem", None):
        prob = load_problem(args.problem)
        if args.magnitude:
            prob.magnitude = True
        return prob
    missing = [k for k in ("n", "q", "r", "m") if getattr(args, k) is None]
    if missing:
        raise ValueError(f"need --problem or all of --n --q --r --m (missing {missing})")
    dims = ProblemDims(args.n, args.q, args.r, args.m)
    meas = args.seed + 1 if args.meas_seed is None else args.meas_seed
    return Problem(dims, args.seed, meas, args.magnitude)


def _spec(args, solver, init, problem) -> SolverSpec:
    rank = problem.dims.r
    if args.rank is not None:
        rank = "auto" if args.rank == "auto" else int(args.rank)
    eta_c = args.eta_c if args.eta_c is not None else (0.9 if solver == "altgdmin-lrpr" else 0.4)
    gd = GdConfig(eta_rule=args.eta_rule, eta_c=eta_c, T_max=args.T_max,
                  stop_tol_factor=args.stop_tol or None, stop_patience=args.patience,
                  target_err=args.target_err, sample_split=args.sample_split, rank=rank,
                  rank_b_percent=args.rank_b)
    ic = InitConfig(c_tilde=args.c_tilde, c_tilde_mode=args.c_tilde_mode, svd_method=args.svd)
    rwf = RwfConfig(step_size=args.rwf_step, cold_start=args.rwf_cold_start)
    return SolverSpec(solver, init, args.federated, gd, ic, rwf)


def _provenance(args, problem, digest):
    flags = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    return json.dumps({"lrccs": flags, "gt_seed": problem.gt_seed,
                       "meas_seed": problem.meas_seed, "problem_sha256": digest}, sort_keys=True)


def _jobs(args):
    jobs = args.jobs or _threads() or 1
    cap = _threads()
    return min(jobs, cap) if cap else jobs


def cmd_generate(args):
    prob = _problem(args)
    save_problem(prob, args.out, include_factors=not args.no_factors)
    log.info("wrote %s (sha256 %s)", args.out, problem_digest(prob))
    print(json.dumps({"out": str(args.out), "n": prob.dims.n, "q": prob.dims.q,
                      "r": prob.dims.r, "m": prob.dims.m, "magnitude": prob.magnitude}))
    return 0


def _emit_summary(args, payload):
    text = json.dumps(payload, indent=2)
    if args.summary:
        args.summary.write_text(text + "\n")
    else:
        print(text)


def cmd_run(args):
    prob = _problem(args)
    spec = _spec(args, args.solver, args.init, prob)
    digest = problem_digest(prob)
    log.info("problem sha256 %s", digest)
    traces, ledgers = run_trials(prob, spec, args.trials, _jobs(args))
    trace = average_traces(traces)
    if args.csv:
        with open(args.csv, "w") as fh:
            trace.to_csv(fh, header_comment=_provenance(args, prob, digest))
    if args.comm_log and ledgers[0] is not None:
        with open(args.comm_log, "w") as fh:
            for i, records in enumerate(ledgers):
                led = CommLedger()
                led.records = [{**r, "trial": i} for r in records]
                led.write_jsonl(fh)
    summary = summarize(traces, spec)
    summary["problem_sha256"] = digest
    _emit_summary(args, summary)
    return 0


def _parse_solver_list(text, default_init):
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        solver, _, init = tok.partition(":")
        out.append((solver, init or default_init))
    if not out:
        raise ValueError("empty solver list")
    return out


def cmd_compare(args):
    prob = _problem(args)
    pairs = _parse_solver_list(args.solvers, args.init)
    digest = problem_digest(prob)
    rows, traces_by = [], {}
    for solver, init in pairs:
        spec = _spec(args, solver, init, prob)
        log.info("%s on problem sha256 %s", spec.label, digest)
        traces, _ = run_trials(prob, spec, args.trials, _jobs(args))
        traces_by[spec.label] = average_traces(traces)
        summ = summarize(traces, spec)
        summ["problem_sha256"] = digest
        rows.append(summ)
    if args.csv:
        labels = list(traces_by)
        n = max(len(t.records) for t in traces_by.values())
        with open(args.csv, "w") as fh:
            fh.write(f"# {_provenance(args, prob, digest)}\n")
            fh.write(",".join(["iter"] + [f"{l}:{c}" for l in labels
                                          for c in ("elapsed_s", "rel_fro_err")]) + "\n")
            for i in range(n):
                cells = [str(i)]
                for l in labels:
                    recs = traces_by[l].records
                    if i < len(recs):
                        cells += [f"{recs[i].elapsed_s:.6f}", repr(recs[i].rel_fro_err)]
                    else:
                        cells += ["", ""]
                fh.write(",".join(cells) + "\n")
    width = max(len(r["solver"]) for r in rows)
    lines = [f"{'solver':<{width}}  {'final_err':>10}  {'iters':>5}  {'wall_s':>8}  converged"]
    for r in rows:
        lines.append(f"{r['solver']:<{width}}  {r['final_err']:>10.3e}  {r['iters']:>5d}  "
                     f"{r['wall_s']:>8.3f}  {r['converged']}")
    print("\n".join(lines))
    if args.summary:
        args.summary.write_text(json.dumps(rows, indent=2) + "\n")
    return 0


def cmd_plotdata(args):
    with open(args.trace) as fh:
        trace = read_trace_csv(fh)
    args.outdir.mkdir(parents=True, exist_ok=True)
    x = trace.column(args.x)
    written = []
    for name in CSV_COLUMNS:
        if name in ("iter", args.x):
            continue
        path = args.outdir / f"{name}.dat"
        np.savetxt(path, np.column_stack([x, trace.column(name)]),
                   header=f"{args.x} {name}", fmt="%.17g")
        written.append(str(path))
    print("\n".join(written))
    return 0


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "compare": cmd_compare,
            "plotdata": cmd_plotdata}


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    _apply_config(parser, argv)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    limits = None
    if _threads():
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(_threads())
    try:
        if getattr(args, "trials", 1) < 1:
            parser.error("--trials must be >= 1")
        return COMMANDS[args.command](args)
    except (ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"lrccs: error: {exc}", file=sys.stderr)
        return 2
    finally:
        if limits is not None:
            limits.unregister()


if __name__ == "__main__":
    sys.exit(main())
