"""AltGD-Min for low-rank phase retrieval (magnitude-only column sketches).

Real-valued throughout: the phase of a real number is its sign and the
phase-invariant distance minimizes over a global sign.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gdmin import (
    CentralEngine,
    GdConfig,
    drive,
    gd_project_step,
    gradient_from_residual,
    project_designs,
)
from .initialization import InitConfig, lrpr_init


@dataclass
class RwfConfig:
    """Inner reshaped-Wirtinger-flow settings.

    ``iters_min`` and ``iters_offset`` give ``T_RWF,t = max(iters_offset + t, iters_min)``
    at outer iteration ``t`` (1-based).  ``step_size`` is divided by the mean
    squared row norm per dimension of the r-dimensional design, which is ~1
    for Gaussian designs and an orthonormal basis.
    """

    iters_min: int = 40
    iters_offset: int = 5
    step_size: float = 0.5
    cold_start: bool = False

    def __post_init__(self):
        if self.iters_min < 1:
            raise ValueError("RWF needs at least one iteration")
        if not self.step_size > 0:
            raise ValueError("RWF step size must be positive")

    def iters(self, t):
        return max(self.iters_offset + t, self.iters_min)


def phase(z):
    """Real phase: ``sign(z)`` with ``sign(0) = +1``."""
    return np.where(np.asarray(z) < 0, -1.0, 1.0)


def phase_estimate(A_k, x_hat):
    return phase(A_k @ x_hat)


def _spectral_start(Y, M):
    """RWF start: leading eigenvector of (1/m) sum y_i m_i m_i^T, scaled by the
    norm estimate sqrt(pi/2) * mean(y)."""
    q, m, r = M.shape
    S = np.einsum("km,kmi,kmj->kij", Y, M, M) / m
    _, vecs = np.linalg.eigh(S)
    v = vecs[:, :, -1]
    norm = np.sqrt(np.pi / 2) * Y.mean(axis=1)
    return (v * norm[:, None]).T


def rwf_batch(Y, M, iters, step_size=0.5, warm=None):
    """Reshaped WF on q independent r-dimensional problems at once.

    ``Y`` is (q, m) magnitudes, ``M`` the (q, m, r) designs; returns (r, q).
    Each iteration is ``b -= (mu / m) sum_i (m_i^T b - y_i sign(m_i^T b)) m_i``.
    """
    q, m, r = M.shape
    b = _spectral_start(Y, M) if warm is None else np.array(warm, dtype=float)
    rownorm = np.einsum("kmi,kmi->k", M, M) / (m * r)
    mu = step_size / np.where(rownorm > 0, rownorm, 1.0)
    zero = ~np.any(Y, axis=1)
    for _ in range(iters):
        z = np.matmul(M, b.T[:, :, None])[:, :, 0]
        resid = z - Y * phase(z)
        g = np.matmul(resid[:, None, :], M)[:, 0, :].T / m
        b = b - mu * g
    b[:, zero] = 0.0
    return b


def rwf_solve(y_mag, M, cfg: RwfConfig | None = None, warm=None, iters=None):
    """Single-column RWF for ``min_b sum_i (|m_i^T b| - y_i)^2``."""
    cfg = cfg or RwfConfig()
    y_mag = np.asarray(y_mag, dtype=float)
    M = np.asarray(M, dtype=float)
    if not np.any(y_mag):
        return np.zeros(M.shape[1])
    w = None if warm is None else np.asarray(warm, dtype=float)[:, None]
    n_it = cfg.iters_min if iters is None else iters
    return rwf_batch(y_mag[None], M[None], n_it, cfg.step_size, w)[:, 0]


def rwf_objective(y_mag, M, b):
    return float(np.sum((np.abs(M @ b) - y_mag) ** 2))


def approx_gradient_U(U, B, mag, AU=None):
    """Gradient with the unobserved signs replaced by ``sign(a_ki^T x_k)``.

    Equals the linear gradient whenever the estimated signs are correct.
    """
    if AU is None:
        AU = project_designs(mag.A, U)
    z = np.matmul(AU, B.T[:, :, None])[:, :, 0]
    y_hat = mag.y * phase(z)
    return gradient_from_residual(mag.A, z - y_hat, B)


class LrprEngine(CentralEngine):
    def __init__(self, mag, sample_split=False, T=None, rwf: RwfConfig | None = None):
        super().__init__(mag, sample_split, T)
        self.rwf = rwf or RwfConfig()
        self._prev = None
        self._last_t = 0

    def initialize(self, r, init_cfg, rank_b=85.0):
        if r == "auto":
            raise ValueError("LRPR needs an explicit rank")
        U0, lam = lrpr_init(self.part(0), init_cfg.c_tilde, r, init_cfg)
        # scale ||X0|| from a first cold RWF pass at U0
        B0 = self._rwf(U0, None, self.rwf.iters(1), warm=None)
        self._prev = (U0, B0)
        return U0, float(np.linalg.norm(B0, 2)), {"method": "lrpr", "rank": r, "Y_U_top": lam}

    def _rwf(self, U, tau, iters, warm):
        ms = self.part(tau)
        return rwf_batch(ms.y, self._AU(U, tau), iters, self.rwf.step_size, warm)

    def min_B(self, U, t):
        tau = self.b_part(t) if self.split is not None else None
        if t is not None:
            self._last_t = t
        iters = self.rwf.iters(self._last_t + 1)
        warm = None
        if self._prev is not None and not self.rwf.cold_start:
            U_prev, B_prev = self._prev
            warm = U.T @ (U_prev @ B_prev)
        B = self._rwf(U, tau, iters, warm)
        self._prev = (U, B)
        return B

    def grad_step(self, U, B, t, eta):
        tau = self.g_part(t)
        ms = self.part(tau)
        grad = approx_gradient_U(U, B, ms, AU=self._AU(U, tau))
        return gd_project_step(U, grad, eta, ms.m)


def run_altgdmin_lrpr(mag, cfg: GdConfig | None = None, rwf_cfg: RwfConfig | None = None,
                      init_cfg: InitConfig | None = None, gt=None, U0=None):
    """AltGD-Min-LRPR; metrics in the trace are phase invariant."""
    cfg = cfg or GdConfig(eta_c=0.9)
    if cfg.rank == "auto":
        if gt is None and U0 is None:
            raise ValueError("LRPR needs an explicit rank")
        cfg = GdConfig(**{**cfg.__dict__, "rank": (U0.shape[1] if U0 is not None else gt.r)})
    engine = LrprEngine(mag, cfg.sample_split, cfg.T_max, rwf_cfg)
    scale = None
    if U0 is not None and cfg.eta is None and cfg.eta_rule == "practical":
        scale = np.linalg.norm(engine.min_B(U0, None), 2)
        engine._prev = None if engine.rwf.cold_start else engine._prev
    return drive(engine, cfg, init_cfg, gt, U0, phase_invariant=True, scale=scale)
