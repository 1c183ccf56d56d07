"""Truncated spectral initialization, rank estimation and threshold heuristics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from ._linalg import fix_signs, power_method
from .exceptions import ContractViolation, DimensionError

log = logging.getLogger(__name__)

EXACT_SVD_MAX_DIM = 2000
DENSE_YU_MAX_N = 2000
TIE_TOL = 1e-9


@dataclass
class InitConfig:
    """Initialization tunables.

    ``svd_method`` is ``"auto"`` (exact SVD up to ``min(n, q) = 2000``,
    power method beyond), ``"exact"`` or ``"power"``.  ``split_alpha``
    computes the truncation threshold from half of the init rows and builds
    the init matrix from the other half, so the two are independent.
    """

    c_tilde: float = 9.0
    c_tilde_mode: str = "fixed"
    svd_method: str = "auto"
    power_iters: int | None = None
    power_tol: float = 1e-9
    power_seed: int = 0
    split_alpha: bool = False
    dense_threshold: int = DENSE_YU_MAX_N

    def __post_init__(self):
        if not self.c_tilde > 0:
            raise ValueError(f"c_tilde must be positive, got {self.c_tilde}")
        if self.c_tilde_mode not in ("fixed", "auto"):
            raise ValueError(f"unknown c_tilde_mode {self.c_tilde_mode!r}")
        if self.svd_method not in ("auto", "exact", "power"):
            raise ValueError(f"unknown svd_method {self.svd_method!r}")


def truncation_threshold(y, c_tilde):
    """``alpha = c_tilde * sum(y_ki^2) / (m q)`` over the (q, m) observations."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("no observations")
    return float(c_tilde * np.sum(y ** 2) / y.size)


def auto_c_tilde(y):
    """Data-driven multiplier: 9 times the estimated lower bound on kappa^2 mu^2.

    Uses ``q * max_k ||x_k||^2 / ||X||_F^2`` with both norms estimated from
    the observation energies ``(1/m) sum_i y_ki^2``.
    """
    y = np.asarray(y, dtype=float)
    q, m = y.shape
    col = np.sum(y ** 2, axis=1) / m
    total = col.sum()
    if total == 0:
        raise ValueError("all-zero observations")
    return 9.0 * q * col.max() / total


def build_init_matrix(ms, alpha):
    """Column k is ``(1/m) A_k^T (y_k * 1{y_k^2 <= alpha})``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    keep = ms.y ** 2 <= alpha
    yt = np.where(keep, ms.y, 0.0)
    X0 = np.matmul(yt[:, None, :], ms.A)[:, 0, :].T / ms.m
    return X0


def _check_rank(r, *dims):
    if not 1 <= r <= min(dims):
        raise DimensionError(f"rank r={r} must lie in [1, {min(dims)}]")


def _warn_tie(s, r):
    if len(s) > r and abs(s[r - 1] - s[r]) <= TIE_TOL * max(s[0], 1e-300):
        log.warning("singular values %d and %d tie; top-r subspace is ill-defined", r, r + 1)


def top_left_singular(X0, r, svd_method="auto", power_iters=None, power_tol=1e-9, seed=0):
    """Top-r left singular basis of ``X0`` and its top singular value.

    Returns ``(U0, sigma_1, info)``; ``info`` records the method and the
    number of power rounds used.
    """
    n, q = X0.shape
    _check_rank(r, n, q)
    method = svd_method
    if method == "auto":
        method = "exact" if min(n, q) <= EXACT_SVD_MAX_DIM else "power"
    if method == "exact":
        U, s, _ = np.linalg.svd(X0, full_matrices=False)
        _warn_tie(s, r)
        if s[0] == 0:
            raise ContractViolation("zero matrix has no top-r subspace")
        return fix_signs(U[:, :r]), float(s[0]), {"method": "exact", "rounds": 0}
    V, evals, rounds = power_method(lambda V: X0 @ (X0.T @ V), n, r, iters=power_iters,
                                    tol=power_tol, seed=seed, q=q)
    if evals[0] <= 0:
        raise ContractViolation("zero matrix has no top-r subspace")
    return fix_signs(V), float(math.sqrt(evals[0])), {"method": "power", "rounds": rounds}


def spectral_init(X0, r, svd_method="auto", **kw):
    return top_left_singular(X0, r, svd_method, **kw)[0]


def estimate_rank(X0, b_percent=85.0, m=None):
    """Smallest r whose leading energy reaches b% of the first J singular values.

    ``J = max(1, floor(min(n, q, m) / 10))``.
    """
    if not 0 < b_percent <= 100:
        raise ValueError("b_percent must lie in (0, 100]")
    n, q = X0.shape
    J = max(1, min(n, q, m if m is not None else min(n, q)) // 10)
    s = np.linalg.svd(X0, compute_uv=False)[:J]
    energy = np.cumsum(s ** 2)
    if energy[-1] == 0:
        return 1
    # relative slack guards the b = 100 case against roundoff in the cumsum
    target = (b_percent / 100.0) * energy[-1] * (1 - 1e-12)
    return int(np.searchsorted(energy, target) + 1)


def init_rows(ms, split_alpha=False):
    """Rows for (alpha, X0): the same rows, or two independent halves."""
    if not split_alpha:
        return ms, ms
    if ms.m < 2:
        raise ValueError("split_alpha needs at least two measurement rows")
    h = (ms.m + 1) // 2
    return ms.rows(slice(0, h)), ms.rows(slice(h, None))


def truncated_init(ms, r, cfg: InitConfig):
    """Run the full linear initialization; returns ``(U0, sigma_1(X0), info)``."""
    alpha_ms, x0_ms = init_rows(ms, cfg.split_alpha)
    c = auto_c_tilde(alpha_ms.y) if cfg.c_tilde_mode == "auto" else cfg.c_tilde
    alpha = truncation_threshold(alpha_ms.y, c)
    X0 = build_init_matrix(x0_ms, alpha)
    U0, s1, info = top_left_singular(X0, r, cfg.svd_method, cfg.power_iters, cfg.power_tol,
                                     cfg.power_seed)
    info.update(alpha=alpha, c_tilde=c, X0=X0)
    return U0, s1, info


def lrpr_weights(mag_y, c_tilde):
    alpha = truncation_threshold(mag_y, c_tilde)
    return np.where(mag_y ** 2 <= alpha, mag_y ** 2, 0.0), alpha


def lrpr_init_matrix(mag, c_tilde):
    """Dense ``Y_U = (1/mq) sum_ki w_ki a_ki a_ki^T`` with truncated weights."""
    w, _ = lrpr_weights(mag.y, c_tilde)
    A = mag.A.reshape(-1, mag.n)
    Y = (A * w.reshape(-1, 1)).T @ A / w.size
    return (Y + Y.T) / 2


def lrpr_init(mag, c_tilde, r, cfg: InitConfig | None = None):
    """Top-r eigenvectors of the truncated magnitude matrix ``Y_U``.

    For ``n`` above ``cfg.dense_threshold`` the matrix is never formed; the
    power method applies it as ``sum_ki w_ki a_ki (a_ki^T V)``.
    Returns ``(U0, top eigenvalue)``.
    """
    cfg = cfg or InitConfig(c_tilde=c_tilde)
    n = mag.n
    _check_rank(r, n)
    if n <= cfg.dense_threshold:
        Y = lrpr_init_matrix(mag, c_tilde)
        evals, evecs = np.linalg.eigh(Y)
        evals, evecs = evals[::-1], evecs[:, ::-1]
        if evals[0] <= 0:
            raise ContractViolation("zero matrix has no top-r subspace")
        _warn_tie(evals, r)
        return fix_signs(evecs[:, :r]), float(evals[0])
    w, _ = lrpr_weights(mag.y, c_tilde)
    A = mag.A.reshape(-1, n)
    wf = w.reshape(-1, 1) / w.size

    def apply(V):
        return A.T @ (wf * (A @ V))

    V, evals, _ = power_method(apply, n, r, iters=cfg.power_iters, tol=cfg.power_tol,
                               seed=cfg.power_seed)
    if evals[0] <= 0:
        raise ContractViolation("zero matrix has no top-r subspace")
    return fix_signs(V), float(evals[0])


def beta_k(alpha_over_normsq):
    """``E[z^2 1{|z| <= c}]`` for standard normal z, with ``c = sqrt(arg)``."""
    if alpha_over_normsq < 0:
        raise ValueError("argument must be nonnegative")
    if math.isinf(alpha_over_normsq):
        return 1.0
    c = math.sqrt(alpha_over_normsq)
    return float(erf(c / math.sqrt(2)) - c * math.sqrt(2 / math.pi) * math.exp(-c * c / 2))
