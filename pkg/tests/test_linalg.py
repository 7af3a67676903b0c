import numpy as np
import pytest
import scipy.sparse as sp

from pwcopula.linalg import BandedCholesky, NotPositiveDefiniteError, gmrf_logpdf, gmrf_sample, sparse_cholesky
from pwcopula.mesh import assemble_fem, build_regular_mesh, precision_stationary


@pytest.fixture
def Q():
    fem = assemble_fem(build_regular_mesh(7, 0.1))
    return sp.csc_matrix(precision_stationary(fem, 0.8, 4.0))


def test_factor_logdet_and_solve(Q):
    f = BandedCholesky(Q).factorize(Q)
    Qd = Q.toarray()
    assert f.logdet() == pytest.approx(np.linalg.slogdet(Qd)[1], rel=1e-12)
    b = np.arange(Q.shape[0], dtype=float)
    np.testing.assert_allclose(f.solve(b), np.linalg.solve(Qd, b), rtol=1e-9)
    B = np.column_stack([b, b**2])
    np.testing.assert_allclose(f.solve(B), np.linalg.solve(Qd, B), rtol=1e-9)


def test_refactorize_same_pattern(Q):
    f = sparse_cholesky(Q)
    f.factorize(Q)
    f.factorize(2.0 * Q)
    assert f.logdet() == pytest.approx(np.linalg.slogdet(2.0 * Q.toarray())[1], rel=1e-12)


def test_not_positive_definite(Q):
    f = BandedCholesky(Q)
    with pytest.raises(NotPositiveDefiniteError):
        f.factorize(-Q)


def test_gmrf_sample_covariance():
    Qd = np.array([[2.0, -0.8, 0.0], [-0.8, 2.0, -0.8], [0.0, -0.8, 2.0]])
    Q = sp.csc_matrix(Qd)
    f = BandedCholesky(Q).factorize(Q)
    rng = np.random.default_rng(1)
    X = np.array([gmrf_sample(f, np.ones(3), rng) for _ in range(20000)])
    np.testing.assert_allclose(X.mean(axis=0), 1.0, atol=0.03)
    np.testing.assert_allclose(np.cov(X.T), np.linalg.inv(Qd), atol=0.03)


def test_gmrf_logpdf_matches_dense(Q):
    from scipy.stats import multivariate_normal

    f = BandedCholesky(Q).factorize(Q)
    x = np.linspace(-1, 1, Q.shape[0])
    ref = multivariate_normal(np.zeros(Q.shape[0]), np.linalg.inv(Q.toarray())).logpdf(x)
    # the constant -M/2 log(2 pi) is left out by design
    assert gmrf_logpdf(x, Q, f) - 0.5 * Q.shape[0] * np.log(2 * np.pi) == pytest.approx(ref, rel=1e-9)
