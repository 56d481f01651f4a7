import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mgi.errors import InvalidInputError, NonConvergenceError, SingularCovarianceError
from mgi.linalg import (
    LowRankPlusDiag,
    SpdFactor,
    invert_low_rank_plus_diag,
    kkt_residual,
    largest_eigenvalue,
    mahalanobis_project,
    pseudoinverse,
    spd_inverse,
)

from oracles import box_qp_exhaustive, random_spd


def _penrose(m, p, tol):
    assert np.allclose(m @ p @ m, m, atol=tol)
    assert np.allclose(p @ m @ p, p, atol=tol)
    assert np.allclose((m @ p).T, m @ p, atol=tol)
    assert np.allclose((p @ m).T, p @ m, atol=tol)


def test_pinv_two_by_one():
    assert np.allclose(pseudoinverse(np.array([[1.0], [1.0]])), [[0.5, 0.5]], atol=1e-15)


def test_pinv_rank_deficient_diag():
    assert np.allclose(pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-15)


def test_pinv_zero_matrix_shape():
    p = pseudoinverse(np.zeros((3, 2)))
    assert p.shape == (2, 3) and not p.any()


def test_pinv_rejects_nan():
    with pytest.raises(InvalidInputError):
        pseudoinverse(np.array([[np.nan, 1.0]]))


def test_pinv_rejects_bad_cutoff():
    with pytest.raises(InvalidInputError):
        pseudoinverse(np.eye(2), rel_cutoff=1.5)


@pytest.mark.parametrize("seed", range(20))
def test_pinv_penrose_random(seed):
    rng = np.random.default_rng(seed)
    r, c = rng.integers(1, 65), rng.integers(1, 49)
    m = rng.standard_normal((r, c))
    _penrose(m, pseudoinverse(m), 1e-10)


def test_pinv_low_rank_product():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((30, 4)) @ rng.standard_normal((4, 20))
    p = pseudoinverse(m)
    _penrose(m, p, 1e-10)
    assert np.allclose(p, np.linalg.pinv(m, rcond=1e-10), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(-10, 10, allow_nan=False)))
def test_pinv_penrose_property(m):
    p = pseudoinverse(m)
    assert p.shape == m.shape[::-1]
    scale = max(1.0, np.abs(m).max())
    _penrose(m, p, 1e-8 * scale * max(1.0, np.abs(p).max()))


def test_woodbury_two_by_two():
    s = LowRankPlusDiag(np.ones(2), np.ones((2, 1)))  # [[2, 1], [1, 2]]
    inv = invert_low_rank_plus_diag(s)
    assert np.allclose(inv(np.array([1.0, 0.0])), [2 / 3, -1 / 3], atol=1e-15)


def test_woodbury_rank_zero_is_diagonal():
    s = LowRankPlusDiag(np.array([2.0, 4.0]), np.zeros((2, 0)))
    assert np.allclose(invert_low_rank_plus_diag(s)(np.ones(2)), [0.5, 0.25])


@pytest.mark.parametrize("n,r", [(1, 1), (5, 1), (50, 3), (200, 1), (200, 4)])
def test_woodbury_vs_dense(n, r):
    rng = np.random.default_rng(n + r)
    s = LowRankPlusDiag(rng.uniform(0.1, 3.0, n), rng.standard_normal((n, r)))
    inv = invert_low_rank_plus_diag(s)
    dense = np.linalg.inv(s.toarray())
    v = rng.standard_normal((n, 3))
    assert np.allclose(inv(v), dense @ v, atol=1e-10, rtol=0)
    assert np.allclose(inv.diagonal(), np.diag(dense), atol=1e-10)
    a = rng.standard_normal((n, 4))
    assert np.allclose(inv.congruence(a), a.T @ dense @ a, atol=1e-9)


def test_woodbury_congruence_sparse():
    import scipy.sparse as sp

    rng = np.random.default_rng(0)
    s = LowRankPlusDiag(rng.uniform(0.5, 2.0, 30), rng.standard_normal((30, 1)))
    a = sp.random(30, 12, density=0.3, random_state=1, format="csr")
    inv = invert_low_rank_plus_diag(s)
    dense = a.toarray()
    assert np.allclose(inv.congruence(a), dense.T @ np.linalg.inv(s.toarray()) @ dense, atol=1e-10)


def test_woodbury_floor():
    s = LowRankPlusDiag(np.array([1.0, 0.0]), np.ones((2, 1)))
    with pytest.raises(SingularCovarianceError):
        invert_low_rank_plus_diag(s)


def test_low_rank_plus_diag_shape_check():
    with pytest.raises(InvalidInputError):
        LowRankPlusDiag(np.ones(3), np.ones((2, 1)))


def test_spd_factor_regularises_singular():
    m = np.array([[1.0, 1.0], [1.0, 1.0]])
    fac = SpdFactor.factor(m)
    assert fac.shift > 0
    assert np.all(np.isfinite(fac.inverse()))


def test_spd_factor_rejects_asymmetric():
    with pytest.raises(InvalidInputError):
        SpdFactor.factor(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_spd_factor_rejects_indefinite():
    with pytest.raises(SingularCovarianceError):
        SpdFactor.factor(np.diag([1.0, -1.0]))


def test_spd_inverse_matches_numpy():
    m = random_spd(np.random.default_rng(2), 6)
    assert np.allclose(spd_inverse(m), np.linalg.inv(m), atol=1e-10)


def test_largest_eigenvalue_upper_bound():
    m = random_spd(np.random.default_rng(5), 20)
    top = np.linalg.eigvalsh(m)[-1]
    est = largest_eigenvalue(m, 20)
    assert top <= est <= 1.02 * top


def test_kkt_residual_zero_at_interior_minimum():
    assert kkt_residual(np.array([0.3]), np.array([0.0]), 0.0, 1.0, 1.0) == 0.0


def test_projection_diagonal_metric_is_clip():
    u = np.array([-0.5, 0.4, 1.7])
    out = mahalanobis_project(u, np.diag([1.0, 2.0, 3.0]), 0.0, 1.0, tol=1e-12)
    assert np.allclose(out, [0.0, 0.4, 1.0], atol=1e-12)


def test_projection_inside_box_is_identity():
    m = random_spd(np.random.default_rng(1), 4)
    u = np.array([0.1, 0.2, 0.3, 0.4])
    for method in ("apg", "newton"):
        assert np.allclose(mahalanobis_project(u, m, 0, 1, tol=1e-12, method=method), u, atol=1e-12)


def test_projection_correlated_pair():
    # metric [[1, .9], [.9, 1]], u = (1.5, 0): with v1 = 1 the optimum moves v2
    # to -0.9 * (1 - 1.5) = 0.45
    m = np.array([[1.0, 0.9], [0.9, 1.0]])
    out = mahalanobis_project(np.array([1.5, 0.0]), m, 0.0, 1.0, tol=1e-13, method="newton")
    assert np.allclose(out, [1.0, 0.45], atol=1e-12)


@pytest.mark.parametrize("seed", range(25))
@pytest.mark.parametrize("method", ["apg", "newton"])
def test_projection_vs_exhaustive(seed, method):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    m = random_spd(rng, n)
    u = rng.normal(0.5, 1.0, n)
    got = mahalanobis_project(u, m, 0.0, 1.0, tol=1e-13, max_iter=200_000, method=method)
    assert np.allclose(got, box_qp_exhaustive(u, m, 0.0, 1.0), atol=1e-8)


def test_projection_nonconvergence_reports_best():
    m = np.array([[1.0, 0.999], [0.999, 1.0]])
    with pytest.raises(NonConvergenceError) as err:
        mahalanobis_project(np.array([2.0, -0.5]), m, 0.0, 1.0, tol=1e-15, max_iter=1, method="apg")
    assert err.value.best is not None and err.value.iterations == 1
    assert np.all((err.value.best >= 0) & (err.value.best <= 1))


def test_projection_rejects_inverted_box():
    with pytest.raises(InvalidInputError):
        mahalanobis_project(np.zeros(2), np.eye(2), 1.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_projection_kkt_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 10))
    m = random_spd(rng, n)
    u = rng.normal(0.5, 2.0, n)
    x = mahalanobis_project(u, m, 0.0, 1.0, tol=1e-10, method="newton")
    assert np.all((x >= 0) & (x <= 1))
    g = m @ (x - u)
    # sign conditions: free -> g = 0, at 0 -> g >= 0, at 1 -> g <= 0
    L = np.linalg.eigvalsh(m)[-1]
    assert kkt_residual(x, g, 0.0, 1.0, 1.0 / L) <= 1e-9
