"""Solver dispatch and Monte-Carlo trial aggregation shared by the CLI."""
from __future__ import annotations

import hashlib
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import run_altmin
from .federated import partition_columns, run_federated
from .gdmin import GdConfig, run_altgdmin
from .initialization import InitConfig
from .lrpr import RwfConfig, run_altgdmin_lrpr
from .metrics import IterRecord, RunTrace
from .model import MagnitudeSet, Problem, magnitudes_of, save_problem

SOLVERS = ("altgdmin", "altmin", "altgdmin-lrpr")
INITS = ("lrcs", "lrpr", "oracle")


@dataclass
class SolverSpec:
    solver: str = "altgdmin"
    init: str = "lrcs"
    federated: int = 0
    gd: GdConfig = field(default_factory=GdConfig)
    init_cfg: InitConfig = field(default_factory=InitConfig)
    rwf: RwfConfig = field(default_factory=RwfConfig)

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.init not in INITS:
            raise ValueError(f"unknown init {self.init!r}; choose from {', '.join(INITS)}")
        if self.federated and self.solver != "altgdmin":
            raise ValueError("only altgdmin has a federated implementation")
        if self.federated and self.init != "lrcs":
            raise ValueError("the federated solver uses the truncated spectral init")
        if self.solver == "altgdmin" and self.init == "lrpr":
            raise ValueError("altgdmin uses the lrcs or oracle init")

    @property
    def label(self):
        base = self.solver if self.init == "lrcs" or self.solver == "altgdmin-lrpr" else \
            f"{self.solver}:{self.init}"
        return f"{base}@L{self.federated}" if self.federated else base


def problem_digest(problem: Problem) -> str:
    buf = io.BytesIO()
    save_problem(problem, buf)
    return hashlib.sha256(buf.getvalue()).hexdigest()


def run_trial(problem: Problem, spec: SolverSpec, meas_seed=None):
    """Run one solver on one measurement draw; returns ``(estimate, trace, ledger)``."""
    ms = problem.measurements(meas_seed)
    gt = problem.gt
    gd = spec.gd
    if gd.rank == "auto" and spec.solver != "altgdmin":
        gd = GdConfig(**{**gd.__dict__, "rank": problem.dims.r})
    U0 = gt.Ustar if spec.init == "oracle" else None
    ledger = None
    if spec.solver == "altgdmin-lrpr":
        mag = ms if isinstance(ms, MagnitudeSet) else magnitudes_of(ms)
        est, trace = run_altgdmin_lrpr(mag, gd, spec.rwf, spec.init_cfg, gt, U0)
    elif isinstance(ms, MagnitudeSet):
        raise ValueError(f"{spec.solver} needs linear measurements, problem is magnitude-only")
    elif spec.solver == "altgdmin":
        if spec.federated:
            if U0 is not None:
                raise ValueError("oracle init is not supported by the federated solver")
            topo = partition_columns(problem.dims.q, spec.federated)
            est, trace, ledger = run_federated(ms, topo, gd, spec.init_cfg, gt)
        else:
            est, trace = run_altgdmin(ms, gd, spec.init_cfg, gt, U0)
    else:
        init = "lrcs" if spec.init == "oracle" else spec.init
        est, trace = run_altmin(ms, gd, init, spec.init_cfg, gt, U0)
    return est, trace, ledger


def _trial_worker(args):
    problem, spec, meas_seed = args
    _, trace, ledger = run_trial(problem, spec, meas_seed)
    return trace, (ledger.records if ledger is not None else None)


def run_trials(problem: Problem, spec: SolverSpec, trials=1, jobs=1):
    """Trials use measurement seeds ``meas_seed + i``; the ground truth is shared."""
    args = [(problem, spec, problem.meas_seed + i) for i in range(trials)]
    if jobs > 1 and trials > 1:
        with ProcessPoolExecutor(min(jobs, trials)) as pool:
            out = list(pool.map(_trial_worker, args))
    else:
        out = [_trial_worker(a) for a in args]
    return [o[0] for o in out], [o[1] for o in out]


def average_traces(traces):
    """Per-iteration mean over trials; shorter traces hold their final record."""
    if len(traces) == 1:
        return traces[0]
    n = max(len(t.records) for t in traces)
    avg = RunTrace(converged=all(t.converged for t in traces),
                   stop_reason=f"mean of {len(traces)} trials")
    names = ("elapsed_s", "sd", "rel_fro_err", "max_col_rel_err", "comm_floats")
    for i in range(n):
        recs = [t.records[min(i, len(t.records) - 1)] for t in traces]
        vals = {k: float(np.mean([getattr(r, k) for r in recs])) for k in names}
        avg.append(IterRecord(iter=i, elapsed_s=vals["elapsed_s"], sd=vals["sd"],
                              rel_fro_err=vals["rel_fro_err"],
                              max_col_rel_err=vals["max_col_rel_err"],
                              comm_floats=int(round(vals["comm_floats"]))))
    return avg


def summarize(traces, spec: SolverSpec):
    finals = [t.final for t in traces]
    errs = [f.rel_fro_err for f in finals]
    return {
        "solver": spec.label,
        "trials": len(traces),
        "final_err": float(np.median(errs)),
        "final_err_mean": float(np.mean(errs)),
        "iters": int(np.median([f.iter for f in finals])),
        "wall_s": float(np.median([f.elapsed_s for f in finals])),
        "comm_floats": int(np.median([f.comm_floats for f in finals])),
        "converged": bool(all(t.converged for t in traces)),
    }
