"""Randomized invariants: orthonormality, SD symmetry, truncation, splits."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from lrccs.gdmin import gd_project_step
from lrccs.initialization import build_init_matrix, truncation_threshold
from lrccs.metrics import (
    orthonormality_error,
    subspace_distance,
    subspace_distance_gram,
    subspace_distance_projector,
)
from lrccs.model import MeasurementSet, split_for_sampling

CASES = settings(max_examples=120, deadline=None)


def _orth(rng, n, r):
    return np.linalg.qr(rng.standard_normal((n, r)))[0]


@st.composite
def basis_pairs(draw):
    n = draw(st.integers(2, 40))
    r = draw(st.integers(1, n))
    rng = np.random.default_rng(draw(st.integers(0, 2 ** 32 - 1)))
    return _orth(rng, n, r), _orth(rng, n, r), rng


@CASES
@given(basis_pairs(), st.floats(1e-6, 10.0), st.integers(1, 200))
def test_projection_step_orthonormal(pair, eta, m):
    U, _, rng = pair
    grad = rng.standard_normal(U.shape) * rng.uniform(0.1, 10)
    try:
        Up = gd_project_step(U, grad, eta, m)
    except ArithmeticError:
        return
    assert orthonormality_error(Up) <= 1e-10


@CASES
@given(basis_pairs())
def test_sd_symmetric_and_gram_agreement(pair):
    U1, U2, _ = pair
    d12, d21 = subspace_distance(U1, U2), subspace_distance(U2, U1)
    assert abs(d12 - d21) <= 1e-10
    assert abs(d12 - subspace_distance_gram(U1, U2)) <= 1e-10 or d12 < 1e-5
    assert abs(d12 - subspace_distance_projector(U1, U2)) <= 1e-10
    assert 0 <= d12 <= np.sqrt(U1.shape[1]) + 1e-12


@CASES
@given(st.integers(1, 6), st.integers(1, 12), st.integers(1, 8), st.floats(0.1, 20.0),
       st.integers(0, 2 ** 32 - 1))
def test_truncation_containment(q, m, n, c, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((q, m, n))
    y = rng.standard_normal((q, m)) * rng.exponential(1.0, size=(q, m))
    alpha = truncation_threshold(y, c)
    X0 = build_init_matrix(MeasurementSet(A, y), alpha)
    keep = y ** 2 <= alpha
    # rebuild from the kept entries only; dropped entries must contribute nothing
    ref = np.stack([A[k][keep[k]].T @ y[k][keep[k]] for k in range(q)], axis=1) / m
    assert np.allclose(X0, ref, atol=1e-12)
    # perturbing a truncated entry's design leaves X0 unchanged
    if (~keep).any():
        k, i = np.argwhere(~keep)[0]
        A2 = A.copy()
        A2[k, i] += 100.0
        assert np.array_equal(build_init_matrix(MeasurementSet(A2, y), alpha), X0)


@CASES
@given(st.integers(0, 20), st.integers(0, 60), st.integers(1, 3))
def test_split_disjoint_cover(T, extra, q):
    m = 2 * T + 1 + extra
    ms = MeasurementSet(np.zeros((q, m, 2)), np.tile(np.arange(m, dtype=float), (q, 1)))
    sp = split_for_sampling(ms, T)
    rows = np.concatenate([p.y[0] for p in sp.partitions])
    assert len(sp) == 2 * T + 1
    assert np.array_equal(rows, np.arange(m))
    sizes = sp.sizes
    assert max(sizes) - min(sizes) <= 1 and sizes == sorted(sizes, reverse=True)
    for (a0, a1), (b0, b1) in zip(sp.bounds, sp.bounds[1:]):
        assert a1 == b0 and a0 < a1
