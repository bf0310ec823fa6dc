import numpy as np
import pytest
import scipy.sparse as sp

from jointfuse.linalg import NotPositiveDefinite, SparseCholesky, log_pdet_dense
from jointfuse.latent import ar1_precision, replicate_block


def spd(rng, n=40):
    B = sp.random(n, n, density=0.1, random_state=np.random.RandomState(1))
    return sp.csr_matrix(B @ B.T + sp.identity(n))


def test_logdet_and_solve(rng):
    Q = spd(rng)
    ch = SparseCholesky(Q)
    D = Q.toarray()
    assert ch.logdet() == pytest.approx(np.linalg.slogdet(D)[1], abs=1e-10)
    b = rng.standard_normal((40, 3))
    np.testing.assert_allclose(ch.solve(b), np.linalg.solve(D, b), atol=1e-10)
    np.testing.assert_allclose(ch.inverse_diagonal(chunk=7), np.diag(np.linalg.inv(D)), atol=1e-12)


def test_sqrt_solve_covariance(rng):
    Q = replicate_block(ar1_precision(6, 0.7, 2.0), 2)
    ch = SparseCholesky(Q)
    # x = sqrt_solve(z) is linear in z: its covariance is M M'
    M = ch.sqrt_solve(np.eye(12))
    np.testing.assert_allclose(M @ M.T, np.linalg.inv(Q.toarray()), atol=1e-10)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        SparseCholesky(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])))
    with pytest.raises(NotPositiveDefinite):
        SparseCholesky(sp.csr_matrix(np.diag([1.0, 0.0, 2.0])))


def test_log_pdet_dense():
    ld, r = log_pdet_dense(np.diag([2.0, 3.0, 0.0]))
    assert r == 2 and ld == pytest.approx(np.log(6.0))
