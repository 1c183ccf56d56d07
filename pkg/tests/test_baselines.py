import time

import numpy as np
import pytest

from lrccs.baselines import altmin_solve_U, altmin_update_U, normal_operator, run_altmin
from lrccs.exceptions import SolverError
from lrccs.gdmin import GdConfig, run_altgdmin
from lrccs.metrics import orthonormality_error, subspace_distance
from lrccs.model import MeasurementSet, ProblemDims, gen_ground_truth, gen_measurements

from oracles import dense_altmin_U, kron_hessian


def _instance(n, q, r, m, seed=0):
    gt = gen_ground_truth(ProblemDims(n, q, r), seed)
    return gt, gen_measurements(gt, m, seed + 100)


def test_cg_matches_dense_normal_equations(rng):
    _, ms = _instance(6, 4, 2, 5, seed=1)
    B = rng.standard_normal((2, 4))
    U = altmin_solve_U(B, ms)
    assert np.max(np.abs(U - dense_altmin_U(B, ms.A, ms.y))) <= 1e-8


def test_single_column_dense(rng):
    # q = 1, r = 2: rank-1 right factor, so the normal equations are singular and
    # CG started at zero returns the minimum-norm solution
    A = rng.standard_normal((1, 20, 8))
    y = rng.standard_normal((1, 20))
    ms = MeasurementSet(A, y)
    B = rng.standard_normal((2, 1))
    U = altmin_solve_U(B, ms)
    assert np.max(np.abs(U - dense_altmin_U(B, A, y))) <= 1e-8
    x_ls = np.linalg.lstsq(A[0], y[0], rcond=None)[0]
    assert np.allclose(U @ B[:, 0], x_ls, atol=1e-8)


def test_normal_operator_matches_kronecker(rng):
    _, ms = _instance(4, 3, 2, 3, seed=3)
    B = rng.standard_normal((2, 3))
    W = rng.standard_normal((4, 2))
    assert np.allclose(normal_operator(B, ms)(W).ravel(), kron_hessian(ms.A, B) @ W.ravel(),
                       atol=1e-12)


def test_update_recovers_subspace():
    gt, ms = _instance(20, 30, 2, 10, seed=4)
    U = altmin_update_U(gt.Bstar_tilde, ms)
    assert subspace_distance(gt.Ustar, U) <= 1e-8
    assert orthonormality_error(U) <= 1e-10


def test_warm_start_exact_is_noop():
    gt, ms = _instance(20, 30, 2, 10, seed=4)
    U = altmin_solve_U(gt.Bstar_tilde, ms, U_init=gt.Ustar)
    assert np.max(np.abs(U - gt.Ustar)) <= 1e-12


def test_cg_nonconvergence_reported(rng):
    _, ms = _instance(30, 20, 3, 12, seed=5)
    with pytest.raises(SolverError) as info:
        altmin_solve_U(rng.standard_normal((3, 20)), ms, maxiter=2)
    assert info.value.residual > 1e-10


def test_altmin_converges():
    gt, ms = _instance(40, 50, 2, 20, seed=6)
    est, tr = run_altmin(ms, GdConfig(rank=2, T_max=50, stop_tol_factor=None, target_err=1e-10),
                         gt=gt)
    assert tr.final.rel_fro_err <= 1e-10


def test_altmin_lrpr_init_runs():
    gt, ms = _instance(40, 50, 2, 30, seed=6)
    _, tr = run_altmin(ms, GdConfig(rank=2, T_max=5), init="lrpr", gt=gt)
    assert tr.aux["init"]["method"] == "lrpr"
    with pytest.raises(ValueError):
        run_altmin(ms, GdConfig(rank=2), init="svd")


def test_altmin_oracle_fixed_point():
    gt, ms = _instance(30, 40, 2, 15, seed=7)
    est, tr = run_altmin(ms, GdConfig(rank=2, T_max=5, stop_tol_factor=None), gt=gt,
                         U0=gt.Ustar)
    assert np.all(tr.column("sd") <= 1e-10)
    assert np.max(np.abs(est.X - gt.Xstar)) <= 1e-10 * np.max(np.abs(gt.Xstar))


def test_altmin_slower_per_iteration():
    # trend check over medians of 5 runs each
    gt, ms = _instance(200, 200, 3, 30, seed=8)
    cfg = GdConfig(rank=3, T_max=5, stop_tol_factor=None)

    def per_iter(fn):
        times = []
        for _ in range(5):
            t0 = time.perf_counter()
            _, tr = fn(ms, cfg, gt=gt)
            times.append((time.perf_counter() - t0) / tr.final.iter)
        return np.median(times)

    assert per_iter(run_altmin) >= per_iter(run_altgdmin)
