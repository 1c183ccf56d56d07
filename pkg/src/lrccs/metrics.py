"""Error measures and per-iteration run traces."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ContractViolation, DimensionError

ORTHO_TOL = 1e-8

CSV_COLUMNS = ("iter", "elapsed_s", "sd", "rel_fro_err", "max_col_rel_err", "comm_floats")


def orthonormality_error(U):
    U = np.asarray(U)
    return float(np.linalg.norm(U.T @ U - np.eye(U.shape[1])))


def check_orthonormal(U, tol=ORTHO_TOL, name="U"):
    err = orthonormality_error(U)
    if err > tol:
        raise ContractViolation(f"{name} is not orthonormal: ||U^T U - I||_F = {err:.3e}")


def subspace_distance(U1, U2, check=True):
    """Frobenius sin-theta distance ``||(I - U1 U1^T) U2||_F``.

    Evaluated as ``||U2 - U1 (U1^T U2)||_F`` in O(n r^2), without forming an
    n x n projector.  The Gram form ``sqrt(r - ||U1^T U2||_F^2)`` (see
    :func:`subspace_distance_gram`) loses everything below ~1e-8 to
    cancellation, which is too coarse for tracking converged iterates.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.ndim == 1:
        U1 = U1[:, None]
    if U2.ndim == 1:
        U2 = U2[:, None]
    if U1.shape[0] != U2.shape[0]:
        raise DimensionError(f"ambient dimensions differ: {U1.shape} vs {U2.shape}")
    if check:
        check_orthonormal(U1, name="U1")
        check_orthonormal(U2, name="U2")
    return float(np.linalg.norm(U2 - U1 @ (U1.T @ U2)))


def subspace_distance_gram(U1, U2):
    """``sqrt(max(0, r - ||U1^T U2||_F^2))``; equals the SD for orthonormal inputs."""
    U1 = np.atleast_2d(np.asarray(U1, dtype=float))
    U2 = np.atleast_2d(np.asarray(U2, dtype=float))
    g = np.linalg.norm(U1.T @ U2) ** 2
    return float(np.sqrt(max(0.0, U2.shape[1] - g)))


def subspace_distance_projector(U1, U2):
    """Direct projector form, O(n^2 r); used as a cross-check."""
    U1 = np.atleast_2d(U1)
    P = np.eye(U1.shape[0]) - U1 @ U1.T
    return float(np.linalg.norm(P @ U2))


def subspace_distance_2(U1, U2):
    """Induced 2-norm variant ``||(I - U1 U1^T) U2||_2``."""
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    resid = U2 - U1 @ (U1.T @ U2)
    return float(np.linalg.norm(resid, 2))


def phase_invariant_dist(x_true, x_hat):
    """Real-valued phase-invariant distance ``min(||x - xh||, ||x + xh||)``."""
    x_true = np.asarray(x_true, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    if x_true.shape != x_hat.shape:
        raise DimensionError(f"length mismatch: {x_true.shape} vs {x_hat.shape}")
    return float(min(np.linalg.norm(x_true - x_hat), np.linalg.norm(x_true + x_hat)))


def _check_pair(Xhat, Xstar):
    Xhat = np.asarray(Xhat, dtype=float)
    Xstar = np.asarray(Xstar, dtype=float)
    if Xhat.shape != Xstar.shape:
        raise DimensionError(f"shape mismatch: {Xhat.shape} vs {Xstar.shape}")
    return Xhat, Xstar


def align_columns(Xhat, Xstar):
    """Flip the sign of each column of ``Xhat`` to best match ``Xstar``."""
    Xhat, Xstar = _check_pair(Xhat, Xstar)
    s = np.where(np.einsum("ij,ij->j", Xhat, Xstar) < 0, -1.0, 1.0)
    return Xhat * s


def matrix_rel_err(Xhat, Xstar, phase_invariant=False):
    Xhat, Xstar = _check_pair(Xhat, Xstar)
    denom = np.linalg.norm(Xstar)
    if denom == 0:
        raise ZeroDivisionError("||X*||_F is zero")
    if phase_invariant:
        Xhat = align_columns(Xhat, Xstar)
    return float(np.linalg.norm(Xhat - Xstar) / denom)


def column_errs(Xhat, Xstar, phase_invariant=False):
    Xhat, Xstar = _check_pair(Xhat, Xstar)
    norms = np.linalg.norm(Xstar, axis=0)
    if np.any(norms == 0):
        raise ZeroDivisionError("X* has a zero column")
    if phase_invariant:
        Xhat = align_columns(Xhat, Xstar)
    return np.linalg.norm(Xhat - Xstar, axis=0) / norms


@dataclass
class IterRecord:
    iter: int
    elapsed_s: float
    sd: float = float("nan")
    rel_fro_err: float = float("nan")
    max_col_rel_err: float = float("nan")
    comm_floats: int = 0

    def csv_row(self):
        return [self.iter, f"{self.elapsed_s:.6f}", repr(self.sd), repr(self.rel_fro_err),
                repr(self.max_col_rel_err), self.comm_floats]


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    notes: list = field(default_factory=list)
    # per-iteration auxiliary series kept for diagnostics (not part of the CSV)
    aux: dict = field(default_factory=dict)

    def append(self, rec: IterRecord):
        self.records.append(rec)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    @property
    def final(self) -> IterRecord:
        return self.records[-1]

    @property
    def iters(self):
        return self.records[-1].iter if self.records else 0

    def to_csv(self, fh=None, header_comment=None):
        """Write ``iter,elapsed_s,sd,rel_fro_err,max_col_rel_err,comm_floats``."""
        out = fh if fh is not None else io.StringIO()
        if header_comment:
            for line in str(header_comment).splitlines():
                out.write(f"# {line}\n")
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in self.records:
            w.writerow(rec.csv_row())
        if fh is None:
            return out.getvalue()


def read_trace_csv(fh) -> RunTrace:
    lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    trace = RunTrace()
    for row in reader:
        trace.append(IterRecord(
            iter=int(row["iter"]),
            elapsed_s=float(row["elapsed_s"]),
            sd=float(row["sd"]),
            rel_fro_err=float(row["rel_fro_err"]),
            max_col_rel_err=float(row["max_col_rel_err"]),
            comm_floats=int(row["comm_floats"]),
        ))
    return trace


def record_to_dict(rec: IterRecord):
    return asdict(rec)
