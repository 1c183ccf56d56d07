"""Small dense linear-algebra helpers shared by the solvers."""
import math

import numpy as np

from .exceptions import ContractViolation, SingularStepError

RANK_TOL = 1e-12


def qr_positive(M):
    """Thin QR with the R diagonal made nonnegative; returns (Q, R)."""
    Q, R = np.linalg.qr(M)
    s = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * s, R * s[:, None]


def orthonormalize(M, what="basis"):
    Q, R = qr_positive(M)
    d = np.abs(np.diag(R))
    if d.size and (d.max() == 0 or d.min() <= RANK_TOL * d.max()):
        raise SingularStepError(
            f"{what} lost rank: |diag R| range [{d.min():.3e}, {d.max():.3e}]")
    return Q


def fix_signs(U):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(U), axis=0)
    s = np.sign(U[idx, np.arange(U.shape[1])])
    s[s == 0] = 1.0
    return U * s


def auto_power_iters(n, q):
    return math.ceil(10 * math.log2(max(n, q, 2)))


def power_method(apply, n, r, iters=None, tol=1e-9, seed=0, q=None, V0=None):
    """Block power (subspace) iteration for the top-r eigenspace of a PSD operator.

    ``apply(V)`` must return the operator applied to the n x r block ``V``.
    Each round orthonormalizes ``apply(V)`` by QR; the loop exits early once
    successive bases are within ``tol`` in subspace distance.

    Returns ``(V, eigvals, rounds)`` where ``eigvals`` are the Ritz values
    from the last round, in decreasing order.
    """
    if iters is None:
        iters = auto_power_iters(n, q or n)
    if V0 is None:
        V0 = np.random.default_rng(seed).standard_normal((n, r))
    V = orthonormalize(V0, "power-method start")
    evals = np.zeros(r)
    rounds = 0
    for _ in range(iters):
        W = apply(V)
        if not np.any(W):
            raise ContractViolation("zero matrix has no top-r subspace")
        rounds += 1
        evals = np.sort(np.linalg.eigvalsh(V.T @ W))[::-1]
        Vn = orthonormalize(W, "power-method iterate")
        gap = float(np.linalg.norm(Vn - V @ (V.T @ Vn)))
        V = Vn
        if gap < tol:
            break
    return V, evals, rounds
