"""Synthetic problem generation, measurement simulation and snapshots.

Every generator is a pure function of its inputs and an integer seed.
Random streams come from :class:`numpy.random.SeedSequence` with an explicit
spawn key, so the design matrix of column ``k`` depends only on
``(seed, k)`` and columns can be generated in any order.  Gaussian variates
use numpy's ziggurat sampler (``Generator.standard_normal``) on a PCG64
bit generator.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, InfeasibleSplitError

# spawn-key namespaces for the independent substreams
_STREAM_U = 0
_STREAM_B = 1
_STREAM_DESIGN = 2

SNAPSHOT_FORMAT = "lrccs-problem/1"


def _rng(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True)
class ProblemDims:
    n: int
    q: int
    r: int
    m: int = 1

    def __post_init__(self):
        n, q, r, m = self.n, self.q, self.r, self.m
        if min(n, q) < 1 or not 1 <= r <= min(n, q):
            raise DimensionError(f"need 1 <= r <= min(n, q), got n={n}, q={q}, r={r}")
        if m < 1:
            raise DimensionError(f"need m >= 1, got m={m}")


@dataclass
class GroundTruth:
    """Planted rank-r matrix ``X* = Ustar @ Bstar_tilde``."""

    Ustar: np.ndarray
    Bstar_tilde: np.ndarray
    sigma_max: float
    sigma_min: float
    kappa: float
    mu: float

    @property
    def Xstar(self):
        return self.Ustar @ self.Bstar_tilde

    @property
    def n(self):
        return self.Ustar.shape[0]

    @property
    def q(self):
        return self.Bstar_tilde.shape[1]

    @property
    def r(self):
        return self.Ustar.shape[1]


def ground_truth_from_factors(Ustar, Bstar_tilde):
    """Wrap given factors, computing sigma_max, sigma_min, kappa and mu.

    ``Ustar`` must have orthonormal columns; the singular values of ``X*``
    are then those of ``Bstar_tilde``.
    """
    Ustar = np.asarray(Ustar, dtype=float)
    B = np.asarray(Bstar_tilde, dtype=float)
    r, q = B.shape
    if Ustar.shape[1] != r:
        raise DimensionError("Ustar and Bstar_tilde disagree on r")
    sv = np.linalg.svd(B, compute_uv=False)
    smax, smin = float(sv[0]), float(sv[r - 1])
    kappa = smax / smin if smin > 0 else np.inf
    col_max = float(np.max(np.linalg.norm(B, axis=0)))
    mu = max(1.0, col_max * np.sqrt(q / r) / smax) if smax > 0 else 1.0
    return GroundTruth(Ustar, B, smax, smin, kappa, mu)


def gen_ground_truth(dims: ProblemDims, seed: int) -> GroundTruth:
    """Orthonormalized Gaussian ``U*`` and i.i.d. N(0, I_r) columns ``b_k``."""
    if not isinstance(dims, ProblemDims):
        dims = ProblemDims(*dims)
    G = _rng(seed, _STREAM_U).standard_normal((dims.n, dims.r))
    Ustar, R = np.linalg.qr(G)
    Ustar = Ustar * np.where(np.diag(R) < 0, -1.0, 1.0)
    B = _rng(seed, _STREAM_B).standard_normal((dims.r, dims.q))
    return ground_truth_from_factors(Ustar, B)


@dataclass
class MeasurementSet:
    """Per-column designs ``A[k]`` (m x n) and observations ``y[k]`` (length m).

    Designs are stored stacked as a ``(q, m, n)`` array.
    """

    A: np.ndarray
    y: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        if self.A.ndim != 3 or self.y.shape != self.A.shape[:2]:
            raise DimensionError(f"designs {self.A.shape} and observations {self.y.shape} disagree")

    @property
    def q(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.A.shape[1]

    @property
    def n(self):
        return self.A.shape[2]

    @property
    def designs(self):
        return list(self.A)

    def rows(self, sl):
        """View restricted to the measurement rows selected by ``sl``."""
        return type(self)(self.A[:, sl, :], self.y[:, sl], self.seed)

    def columns(self, idx):
        """Measurements of the columns ``idx`` (in the given order)."""
        idx = np.asarray(idx)
        return type(self)(self.A[idx], self.y[idx], self.seed)


class MagnitudeSet(MeasurementSet):
    """Magnitude-only observations ``|A_k x_k|``."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.y < 0):
            raise ValueError("magnitude observations must be nonnegative")


def gen_designs(q: int, m: int, n: int, seed: int) -> np.ndarray:
    A = np.empty((q, m, n))
    for k in range(q):
        A[k] = _rng(seed, _STREAM_DESIGN, k).standard_normal((m, n))
    return A


def gen_measurements(gt: GroundTruth, m: int, seed: int) -> MeasurementSet:
    if m < 1:
        raise DimensionError(f"need m >= 1, got m={m}")
    A = gen_designs(gt.q, m, gt.n, seed)
    # y_k = A_k x*_k
    y = np.matmul(A, gt.Xstar.T[:, :, None])[:, :, 0]
    return MeasurementSet(A, y, seed)


def magnitudes_of(ms: MeasurementSet) -> MagnitudeSet:
    return MagnitudeSet(ms.A, np.abs(ms.y), ms.seed)


def partition_sizes(total: int, parts: int) -> list[int]:
    """Near-equal sizes, larger parts first."""
    base, rem = divmod(total, parts)
    return [base + 1] * rem + [base] * (parts - rem)


@dataclass
class SplitMeasurements:
    """``2T + 1`` disjoint contiguous row blocks of a master set.

    Partition 0 is for initialization, 1..T for the B updates and
    T+1..2T for the gradient steps.
    """

    partitions: list
    bounds: list = field(default_factory=list)

    @property
    def T(self):
        return (len(self.partitions) - 1) // 2

    @property
    def sizes(self):
        return [p.m for p in self.partitions]

    def __getitem__(self, tau):
        return self.partitions[tau]

    def __len__(self):
        return len(self.partitions)


def split_for_sampling(ms: MeasurementSet, T: int) -> SplitMeasurements:
    n_parts = 2 * T + 1
    if T < 0 or ms.m < n_parts:
        raise InfeasibleSplitError(f"m={ms.m} rows cannot fill {n_parts} partitions")
    bounds = []
    start = 0
    for size in partition_sizes(ms.m, n_parts):
        bounds.append((start, start + size))
        start += size
    return SplitMeasurements([ms.rows(slice(a, b)) for a, b in bounds], bounds)


@dataclass
class Problem:
    """A reproducible problem instance: ground truth plus measurement seed."""

    dims: ProblemDims
    gt_seed: int
    meas_seed: int
    magnitude: bool = False
    gt: GroundTruth | None = None

    def __post_init__(self):
        if self.gt is None:
            self.gt = gen_ground_truth(self.dims, self.gt_seed)

    def measurements(self, meas_seed=None):
        ms = gen_measurements(self.gt, self.dims.m, self.meas_seed if meas_seed is None else meas_seed)
        return magnitudes_of(ms) if self.magnitude else ms


def save_problem(problem: Problem, path, include_factors=True):
    """Write a problem snapshot (numpy ``.npz`` container) to a path or binary file.

    The container holds a JSON ``meta`` record (format tag, dims, seeds,
    magnitude flag) and, optionally, the dense factors ``Ustar`` and
    ``Bstar_tilde``.  Designs are regenerated from the seed on load.
    """
    d = problem.dims
    meta = {
        "format": SNAPSHOT_FORMAT,
        "n": d.n, "q": d.q, "r": d.r, "m": d.m,
        "gt_seed": problem.gt_seed,
        "meas_seed": problem.meas_seed,
        "magnitude": problem.magnitude,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    if include_factors:
        arrays["Ustar"] = problem.gt.Ustar
        arrays["Bstar_tilde"] = problem.gt.Bstar_tilde
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    if hasattr(path, "write"):
        path.write(buf.getvalue())
        return
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_problem(path) -> Problem:
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format") != SNAPSHOT_FORMAT:
            raise ValueError(f"{path}: not a problem snapshot")
        gt = None
        if "Ustar" in z:
            gt = ground_truth_from_factors(z["Ustar"], z["Bstar_tilde"])
    dims = ProblemDims(meta["n"], meta["q"], meta["r"], meta["m"])
    return Problem(dims, meta["gt_seed"], meta["meas_seed"], meta["magnitude"], gt)
