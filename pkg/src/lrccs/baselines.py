"""AltMin baseline: exact least squares for both B and U."""
from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from ._linalg import orthonormalize
from .exceptions import SolverError
from .gdmin import CentralEngine, GdConfig, column_backprojections, drive, project_designs
from .initialization import InitConfig, lrpr_init
from .model import magnitudes_of

CG_TOL = 1e-10
CG_MAXITER = 500


def normal_operator(B, ms):
    """Return ``apply(U) = sum_k A_k^T A_k U b_k b_k^T`` on n x r matrices."""
    A = ms.A

    def apply(U):
        z = np.matmul(project_designs(A, U), B.T[:, :, None])[:, :, 0]
        return column_backprojections(A, z).T @ B.T

    return apply


def altmin_solve_U(B, ms, U_init=None, tol=CG_TOL, maxiter=CG_MAXITER):
    """Unnormalized minimizer of ``sum_k ||y_k - A_k U b_k||^2`` over U.

    Solves the nr x nr normal equations by conjugate gradients on the
    operator form; the Kronecker matrix is never built.
    """
    n, r = ms.n, B.shape[0]
    apply = normal_operator(B, ms)
    rhs = (column_backprojections(ms.A, ms.y).T @ B.T).ravel()
    op = LinearOperator((n * r, n * r), matvec=lambda v: apply(v.reshape(n, r)).ravel(),
                        dtype=float)
    x0 = np.zeros(n * r) if U_init is None else np.asarray(U_init, dtype=float).ravel()
    # solve for the correction so the tolerance is relative to the warm-start residual
    res0 = rhs - op.matvec(x0)
    if not np.any(res0):
        return x0.reshape(n, r)
    delta, info = cg(op, res0, rtol=tol, atol=0.0, maxiter=maxiter)
    if info != 0:
        res = np.linalg.norm(op.matvec(delta) - res0) / np.linalg.norm(res0)
        raise SolverError(f"CG did not reach rtol={tol} in {maxiter} iterations "
                          f"(relative residual {res:.3e})", residual=res)
    return (x0 + delta).reshape(n, r)


def altmin_update_U(B, ms, U_init=None, tol=CG_TOL, maxiter=CG_MAXITER):
    """Least-squares U update followed by QR orthonormalization."""
    return orthonormalize(altmin_solve_U(B, ms, U_init, tol, maxiter), "AltMin U update")


class AltMinEngine(CentralEngine):
    def __init__(self, ms, sample_split=False, T=None, init="lrcs"):
        super().__init__(ms, sample_split, T)
        if init not in ("lrcs", "lrpr"):
            raise ValueError(f"unknown AltMin init {init!r}")
        self.init = init

    def initialize(self, r, init_cfg, rank_b=85.0):
        if self.init == "lrcs":
            return super().initialize(r, init_cfg, rank_b)
        if r == "auto":
            raise ValueError("automatic rank needs the linear initialization")
        U, lam = lrpr_init(magnitudes_of(self.part(0)), init_cfg.c_tilde, r, init_cfg)
        return U, float(np.sqrt(lam)), {"method": "lrpr", "rank": r}

    def grad_step(self, U, B, t, eta):
        # warm start: U is the current factor and B was fitted to it
        return altmin_update_U(B, self.part(self.g_part(t)), U_init=U)


def run_altmin(ms, cfg: GdConfig | None = None, init="lrcs", init_cfg: InitConfig | None = None,
               gt=None, U0=None):
    """AltMin with the truncated linear (``"lrcs"``) or magnitude (``"lrpr"``) init."""
    cfg = cfg or GdConfig()
    engine = AltMinEngine(ms, cfg.sample_split, cfg.T_max, init)
    # the step size is unused by AltMin; the fixed eta keeps the driver uniform
    cfg = GdConfig(**{**cfg.__dict__, "eta": 1.0})
    return drive(engine, cfg, init_cfg, gt, U0)
