"""AltGD-Min for low-rank column-wise compressive sensing.

Each iteration solves ``q`` decoupled r-dimensional least-squares problems
for ``B`` and takes one projected gradient step on the orthonormal basis
``U``.  The orchestration lives in :func:`drive`, which talks to an
*engine* (centralized, federated or phaseless) through four methods::

    initialize(r, init_cfg, rank_b) -> (U0, scale, info)
    min_B(U, t)                    -> B          # t=None: final, all rows
    grad_step(U, B, t, eta)        -> U_next
    comm_floats                    -> int        # cumulative metered floats

so every variant shares the same iteration schedule and stopping logic.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._linalg import orthonormalize
from .exceptions import DimensionError, InfeasibleLSError
from .initialization import InitConfig, estimate_rank, top_left_singular, truncated_init
from .metrics import (
    IterRecord,
    RunTrace,
    column_errs,
    matrix_rel_err,
    orthonormality_error,
    subspace_distance,
)
from .model import split_for_sampling

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


@dataclass
class FactoredEstimate:
    U: np.ndarray
    B: np.ndarray

    @property
    def X(self):
        return self.U @ self.B


@dataclass
class GdConfig:
    """Tunables of the AltGD-Min loop.

    eta_rule
        ``"practical"``: ``eta_c / ||X0||^2`` with ``||X0||`` estimated at init;
        ``"theorem"``: ``eta_c / sigma_max*^2`` (needs ground truth).
        ``eta`` overrides both when set.
    stop_tol_factor
        Stop once ``SD(U_t, U_{t-1}) <= stop_tol_factor * sqrt(r)`` holds for
        ``stop_patience`` consecutive iterations.  ``None`` disables the rule.
    target_err
        With ground truth available, stop when the relative Frobenius error
        drops to this level.
    rank
        An integer, or ``"auto"`` for the b%-energy estimate on ``X0``.
    """

    eta_rule: str = "practical"
    eta_c: float = 0.4
    eta: float | None = None
    T_max: int = 500
    stop_tol_factor: float | None = 0.01
    stop_patience: int = 3
    target_err: float | None = None
    sample_split: bool = False
    rank: int | str = "auto"
    rank_b_percent: float = 85.0

    def __post_init__(self):
        if self.eta_rule not in ("practical", "theorem"):
            raise ValueError(f"unknown eta_rule {self.eta_rule!r}")
        if not 0 < self.eta_c < 1 and self.eta is None:
            raise ValueError(f"eta_c must lie in (0, 1), got {self.eta_c}")
        if self.T_max < 1:
            raise ValueError("T_max must be >= 1")
        if self.stop_patience < 1:
            raise ValueError("stop_patience must be >= 1")
        if isinstance(self.rank, int) and self.rank < 1:
            raise DimensionError("rank must be >= 1")
        if not isinstance(self.rank, int) and self.rank != "auto":
            raise ValueError(f"rank must be an int or 'auto', got {self.rank!r}")


# ---------------------------------------------------------------- kernels


def project_designs(A, U):
    """Stacked ``A_k U`` as a (q, m, r) array."""
    q, m, n = A.shape
    return (A.reshape(q * m, n) @ U).reshape(q, m, U.shape[1])


def solve_columns(AU, y, flagged=None):
    """Column-wise least squares ``b_k = argmin ||y_k - (A_k U) b||``.

    Uses a batched thin QR of the m x r matrices.  Columns whose ``A_k U``
    has condition number above 1e12 fall back to the minimum-norm solution;
    their indices are appended to ``flagged`` when given.
    """
    q, m, r = AU.shape
    if m < r:
        raise InfeasibleLSError(f"m={m} < r={r}: column least squares underdetermined")
    Q, R = np.linalg.qr(AU)
    rhs = np.matmul(y[:, None, :], Q)[:, 0, :]
    d = np.abs(np.diagonal(R, axis1=1, axis2=2))
    dmin = d.min(axis=1)
    bad = dmin <= d.max(axis=1) / COND_LIMIT
    B = np.empty((r, q))
    good = ~bad
    if good.any():
        B[:, good] = np.linalg.solve(R[good], rhs[good][..., None])[..., 0].T
    if bad.any():
        # diag(R) screens cheaply; confirm with the true condition number
        for k in np.flatnonzero(bad):
            if np.linalg.cond(AU[k]) > COND_LIMIT:
                B[:, k] = np.linalg.lstsq(AU[k], y[k], rcond=None)[0]
                if flagged is not None:
                    flagged.append(int(k))
            else:
                B[:, k] = np.linalg.solve(R[k], rhs[k])
        if flagged:
            warnings.warn(f"{len(flagged)} rank-deficient column(s) solved by minimum norm",
                          RuntimeWarning, stacklevel=2)
    return B


def min_step_B(U, ms):
    """Exact minimization over ``B`` at fixed ``U``; returns the r x q matrix."""
    if U.shape[0] != ms.n:
        raise DimensionError(f"U has {U.shape[0]} rows, designs have n={ms.n}")
    return solve_columns(project_designs(ms.A, U), ms.y)


def column_backprojections(A, resid):
    """Rows ``A_k^T resid_k`` stacked as (q, n)."""
    return np.matmul(resid[:, None, :], A)[:, 0, :]


def gradient_from_residual(A, resid, B):
    """``sum_k A_k^T resid_k b_k^T`` as an n x r matrix."""
    return column_backprojections(A, resid).T @ B.T


def gradient_U(U, B, ms, AU=None):
    """Gradient ``sum_k A_k^T (A_k U b_k - y_k) b_k^T`` (no factor 2)."""
    if AU is None:
        AU = project_designs(ms.A, U)
    resid = np.matmul(AU, B.T[:, :, None])[:, :, 0] - ms.y
    return gradient_from_residual(ms.A, resid, B)


def gd_project_step(U, grad, eta, m_used):
    """``QR(U - (eta / m) grad)``, keeping the Q factor."""
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    return orthonormalize(U - (eta / m_used) * grad, "gradient step")


def objective(U, B, ms):
    """``f(U, B) = sum_k ||y_k - A_k U b_k||^2``."""
    AU = project_designs(ms.A, U)
    resid = np.matmul(AU, B.T[:, :, None])[:, :, 0] - ms.y
    return float(np.sum(resid ** 2))


# ---------------------------------------------------------------- engines


class CentralEngine:
    """Single-process linear engine with optional sample splitting."""

    comm_floats = 0

    def __init__(self, ms, sample_split=False, T=None):
        self.ms = ms
        self.n, self.q, self.m = ms.n, ms.q, ms.m
        self.split = split_for_sampling(ms, T) if sample_split else None
        self._cache = (None, None, None)

    def part(self, tau):
        if self.split is None or tau is None:
            return self.ms
        return self.split[tau]

    def b_part(self, t):
        return None if t is None else t + 1

    def g_part(self, t):
        return None if self.split is None else self.split.T + t + 1

    def _AU(self, U, tau):
        key_U, key_tau, AU = self._cache
        if key_U is U and key_tau == tau:
            return AU
        AU = project_designs(self.part(tau).A, U)
        self._cache = (U, tau, AU)
        return AU

    def initialize(self, r, init_cfg, rank_b=85.0):
        ms0 = self.part(0)
        if r == "auto":
            U, s1, info = truncated_init(ms0, 1, init_cfg)
            r = estimate_rank(info["X0"], rank_b, ms0.m)
            U, s1, _ = top_left_singular(info["X0"], r, init_cfg.svd_method,
                                         init_cfg.power_iters, init_cfg.power_tol,
                                         init_cfg.power_seed)
        else:
            U, s1, info = truncated_init(ms0, r, init_cfg)
        info["rank"] = r
        return U, s1, info

    def min_B(self, U, t):
        tau = self.b_part(t) if self.split is not None else None
        return solve_columns(self._AU(U, tau), self.part(tau).y)

    def grad_step(self, U, B, t, eta):
        tau = self.g_part(t)
        ms = self.part(tau)
        grad = gradient_U(U, B, ms, AU=self._AU(U, tau))
        return gd_project_step(U, grad, eta, ms.m)


# ---------------------------------------------------------------- driver


class Recorder:
    def __init__(self, gt=None, phase_invariant=False):
        self.gt = gt
        self.phase_invariant = phase_invariant
        self.t0 = time.perf_counter()
        self.trace = RunTrace()
        self.Xstar = gt.Xstar if gt is not None else None

    def __call__(self, t, U, B, comm):
        rec = IterRecord(iter=t, elapsed_s=time.perf_counter() - self.t0, comm_floats=comm)
        if self.gt is not None:
            X = U @ B
            rec.sd = subspace_distance(self.gt.Ustar, U, check=False)
            rec.rel_fro_err = matrix_rel_err(X, self.Xstar, self.phase_invariant)
            rec.max_col_rel_err = float(np.max(column_errs(X, self.Xstar, self.phase_invariant)))
        self.trace.append(rec)
        return rec


def choose_eta(cfg, scale, gt):
    if cfg.eta is not None:
        return float(cfg.eta)
    if cfg.eta_rule == "theorem":
        if gt is None:
            raise ValueError("theorem step size needs the ground truth sigma_max")
        return cfg.eta_c / gt.sigma_max ** 2
    if scale is None:
        raise ValueError("the practical step size needs a scale estimate of ||X0||")
    return cfg.eta_c / scale ** 2


def drive(engine, cfg: GdConfig, init_cfg: InitConfig | None = None, gt=None, U0=None,
          phase_invariant=False, scale=None):
    """Run the alternating loop on ``engine``; returns ``(FactoredEstimate, RunTrace)``.

    Record ``t`` holds ``U_t`` and ``B`` minimized at ``U_t``; the last record
    always uses ``B`` recomputed on all rows at the final basis.
    """
    init_cfg = init_cfg or InitConfig()
    rec = Recorder(gt, phase_invariant)
    if U0 is None:
        U0, scale, info = engine.initialize(cfg.rank, init_cfg, cfg.rank_b_percent)
        rec.trace.aux["init"] = {k: v for k, v in info.items() if k != "X0"}
    U = U0
    r = U.shape[1]
    eta = choose_eta(cfg, scale, gt)
    rec.trace.aux["eta"] = eta
    ortho, step_sd = [], []
    stop_tol = None if cfg.stop_tol_factor is None else cfg.stop_tol_factor * math.sqrt(r)
    streak = 0
    stopping = False
    trace = rec.trace
    for t in range(cfg.T_max + 1):
        final = stopping or t == cfg.T_max
        B = engine.min_B(U, None if final else t)
        r_t = rec(t, U, B, engine.comm_floats)
        if final:
            break
        if cfg.target_err is not None and r_t.rel_fro_err <= cfg.target_err:
            trace.converged, trace.stop_reason = True, "target error reached"
            B = engine.min_B(U, None)
            trace.records.pop()
            rec(t, U, B, engine.comm_floats)
            break
        U_next = engine.grad_step(U, B, t, eta)
        ortho.append(orthonormality_error(U_next))
        d = subspace_distance(U, U_next, check=False)
        step_sd.append(d)
        U = U_next
        if stop_tol is not None:
            streak = streak + 1 if d <= stop_tol else 0
            if streak >= cfg.stop_patience:
                trace.converged, trace.stop_reason = True, "subspace change below tolerance"
                stopping = True
    if not trace.stop_reason:
        trace.stop_reason = "T_max exhausted"
        trace.notes.append(f"stop rule not met within T_max={cfg.T_max}")
    trace.aux["ortho_err"] = ortho
    trace.aux["step_sd"] = step_sd
    return FactoredEstimate(U, B), trace


def run_altgdmin(ms, cfg: GdConfig | None = None, init_cfg: InitConfig | None = None, gt=None,
                 U0=None):
    """AltGD-Min on linear column sketches.

    ``U0`` replaces the spectral initialization (e.g. an oracle start); the
    practical step size then falls back to ``eta_c / ||U0 B0||^2``.
    """
    cfg = cfg or GdConfig()
    engine = CentralEngine(ms, cfg.sample_split, cfg.T_max)
    scale = None
    if U0 is not None and cfg.eta is None and cfg.eta_rule == "practical":
        scale = np.linalg.norm(engine.min_B(U0, None), 2)
    return drive(engine, cfg, init_cfg, gt, U0, scale=scale)
