import mpmath
import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from jointfuse.latent import (PriorSpec, ar1_logdet, ar1_precision, kronecker_precision,
                              matern_cov, params_from_range_sigma, prior_logdensity,
                              range_sigma_from_params, replicate_block, rw1_log_pdet,
                              rw1_precision)
from jointfuse.linalg import log_pdet_dense

CORR_AT_RANGE = 0.13967  # x K1(x) at x = sqrt(8)


def k1_quad(x):
    """K1 by quadrature of its integral representation (independent of scipy)."""
    return mpmath.quad(lambda t: mpmath.exp(-x * mpmath.cosh(t)) * mpmath.cosh(t), [0, 1, 3, 6, 10])


def test_matern_at_zero():
    assert matern_cov(0.0, 1.7, 0.3) == pytest.approx(1.7 ** 2)


def test_matern_correlation_at_range():
    kappa = 0.2
    rho = np.sqrt(8) / kappa
    c = matern_cov(rho, 1.0, kappa)
    assert abs(c - 0.13) <= 0.01
    assert c == pytest.approx(CORR_AT_RANGE, abs=1e-5)


def test_matern_bessel_oracle():
    mpmath.mp.dps = 30
    expected = 4.0 * 1.0 * float(k1_quad(mpmath.mpf(1)))
    assert matern_cov(10.0, 2.0, 0.1) == pytest.approx(expected, rel=1e-10)


def test_params_from_range_sigma():
    lt, lk = params_from_range_sigma(np.sqrt(8), 1.0)
    assert lk == pytest.approx(0.0, abs=1e-15)
    lt2, lk2 = params_from_range_sigma(np.sqrt(8), 2.0)
    assert lt - lt2 == pytest.approx(np.log(2), abs=1e-14)
    assert lk2 == lk


def test_large_range_example():
    sigma = np.sqrt(2.0729)
    lt, lk = params_from_range_sigma(177.8, sigma)
    rho, s = range_sigma_from_params(lt, lk)
    assert rho == pytest.approx(177.8) and s == pytest.approx(sigma)
    kappa = np.exp(lk)
    assert matern_cov(0.0, sigma, kappa) == pytest.approx(2.0729, rel=0.01)
    assert matern_cov(177.8, sigma, kappa) / 2.0729 == pytest.approx(CORR_AT_RANGE, abs=1e-5)


def test_spde_marginal_variance_formula():
    # tau^2 = 1 / (4 pi kappa^2 sigma^2) for alpha = 2, d = 2
    lt, lk = params_from_range_sigma(30.0, 0.7)
    assert np.exp(-2 * lt) / (4 * np.pi * np.exp(2 * lk)) == pytest.approx(0.49, rel=1e-12)


def test_rw1_small():
    Q, C = rw1_precision(3, 2.0)
    np.testing.assert_array_equal((Q * 2.0).toarray(), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    np.testing.assert_array_equal(Q @ np.ones(3), 0)
    np.testing.assert_array_equal(C.toarray(), [[1, 1, 1]])


@pytest.mark.parametrize("n,s2", [(5, 1.0), (17, 0.3), (50, 4.0)])
def test_rw1_log_pdet(n, s2):
    ld, rank = log_pdet_dense(rw1_precision(n, s2)[0])
    assert rank == n - 1
    assert rw1_log_pdet(n, s2) == pytest.approx(ld, abs=1e-9)


def test_rw1_constrained_increment_variance():
    n, s2 = 50, 4.0
    Q = rw1_precision(n, s2)[0].toarray()
    w, V = np.linalg.eigh(Q)
    keep = w > 1e-9
    L = V[:, keep] / np.sqrt(w[keep])
    z = np.random.default_rng(1).standard_normal((keep.sum(), 100_000))
    x = L @ z
    np.testing.assert_allclose(x.sum(axis=0), 0, atol=1e-8)
    assert np.var(np.diff(x, axis=0)) == pytest.approx(s2, rel=0.05)


def test_ar1():
    np.testing.assert_allclose(ar1_precision(4, 0.0, 2.5).toarray(), np.eye(4) / 2.5)
    cov = np.linalg.inv(ar1_precision(20, 0.57, 1.0).toarray())
    assert cov[5, 6] / np.sqrt(cov[5, 5] * cov[6, 6]) == pytest.approx(0.57, abs=1e-10)
    n, rho, v = 5, 0.5, 1.3
    idx = np.arange(n)
    S = v * rho ** np.abs(idx[:, None] - idx[None, :])
    np.testing.assert_allclose(ar1_precision(n, rho, v).toarray(), np.linalg.inv(S), atol=1e-10)
    assert ar1_logdet(n, rho, v) == pytest.approx(-np.linalg.slogdet(S)[1], abs=1e-10)
    with pytest.raises(ValueError):
        ar1_precision(5, 1.0, 1.0)


def test_replicate_block(rng):
    Q = ar1_precision(10, 0.3, 0.8)
    assert (replicate_block(Q, 1) != Q).nnz == 0
    R = replicate_block(Q, 3)
    assert R.shape == (30, 30)
    assert R[:10, 10:].nnz == 0 and R[10:20, 20:].nnz == 0
    x = rng.standard_normal(30)
    S = np.linalg.inv(Q.toarray())
    per = sum(stats.multivariate_normal(np.zeros(10), S).logpdf(x[10 * k:10 * k + 10])
              for k in range(3))
    full = stats.multivariate_normal(np.zeros(30), np.linalg.inv(R.toarray())).logpdf(x)
    assert full == pytest.approx(per, abs=1e-10)


def test_kronecker_precision(rng):
    B = rng.standard_normal((4, 4))
    Qs = sp.csr_matrix(B @ B.T + 4 * np.eye(4))
    K = kronecker_precision(sp.identity(2), Qs).toarray()
    np.testing.assert_allclose(K, np.kron(np.eye(2), Qs.toarray()))
    Qt = ar1_precision(3, 0.6, 1.0)
    K = kronecker_precision(Qt, Qs).toarray()
    np.testing.assert_allclose(K, K.T)
    np.testing.assert_allclose(np.linalg.inv(K),
                               np.kron(np.linalg.inv(Qt.toarray()), np.linalg.inv(Qs.toarray())),
                               atol=1e-9)
    with pytest.raises(ValueError):
        kronecker_precision(sp.identity(100), sp.identity(100), cap=1000)


def test_pc_sd_calibration():
    spec = PriorSpec("pc_sd", {"u": 0.3, "alpha": 0.01})
    cdf = integrate.quad(lambda s: np.exp(prior_logdensity(spec, s)), 0, 0.3, epsabs=1e-14)[0]
    assert cdf == pytest.approx(0.99, abs=1e-12)


def test_pc_matern_joint_calibration():
    spec = PriorSpec("pc_matern_joint", {"range0": 20.0, "p_range": 0.95, "sigma0": 100.0,
                                         "p_sigma": 0.5})
    f = lambda s, r: np.exp(prior_logdensity(spec, (r, s)))
    # marginal CDF of the range at range0: integrate sigma out over (0, inf)
    p, _ = integrate.dblquad(f, 0, 20.0, 0, np.inf, epsabs=1e-12, epsrel=1e-10)
    assert p == pytest.approx(0.95, abs=1e-6)
    p_sig, _ = integrate.dblquad(f, 0, np.inf, 100.0, np.inf, epsabs=1e-12, epsrel=1e-10)
    assert p_sig == pytest.approx(0.5, abs=1e-6)


def test_loggamma_exponential_case():
    spec = PriorSpec("loggamma_precision", {"shape": 1.0, "rate": 5e-5})
    assert prior_logdensity(spec, 0.0) == pytest.approx(np.log(5e-5) - 5e-5, abs=1e-14)


def test_normal_and_inverse_gamma_against_scipy():
    spec = PriorSpec("normal", {"mean": 0.3, "var": 0.5, "lower": -1.0, "upper": 1.0})
    sd = np.sqrt(0.5)
    ref = stats.truncnorm((-1 - 0.3) / sd, (1 - 0.3) / sd, loc=0.3, scale=sd).logpdf(0.57)
    assert prior_logdensity(spec, 0.57) == pytest.approx(ref, abs=1e-12)
    assert prior_logdensity(spec, 1.0) == -np.inf
    ig = PriorSpec("inverse_gamma", {"shape": 2.0, "scale": 1.0})
    assert prior_logdensity(ig, 0.7) == pytest.approx(stats.invgamma(2.0, scale=1.0).logpdf(0.7))


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec("pc_sd", {"u": 1.0, "alpha": 1.5})
    with pytest.raises(ValueError):
        PriorSpec("wishart", {})


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 500), st.floats(0.05, 20))
def test_range_sigma_roundtrip(rho, sigma):
    r, s = range_sigma_from_params(*params_from_range_sigma(rho, sigma))
    assert r == pytest.approx(rho, rel=1e-12) and s == pytest.approx(sigma, rel=1e-12)
