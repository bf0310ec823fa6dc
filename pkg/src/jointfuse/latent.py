"""Precision builders, Matern parameterisation and hyperparameter priors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, kv, ndtr

KRON_CAP = 2_000_000


@dataclass(frozen=True)
class MaternParams:
    sigma: float
    rho: float
    kappa: float
    tau: float
    lambda_smooth: float = 1.0
    d: int = 2

    @classmethod
    def from_range_sigma(cls, rho, sigma, lambda_smooth=1.0, d=2):
        log_tau, log_kappa = params_from_range_sigma(rho, sigma, lambda_smooth, d)
        return cls(sigma, rho, np.exp(log_kappa), np.exp(log_tau), lambda_smooth, d)


def matern_cov(r, sigma: float, kappa: float, lambda_smooth: float = 1.0):
    """Matern covariance sigma^2 / (Gamma(l) 2^(l-1)) (k r)^l K_l(k r)."""
    if sigma <= 0 or kappa <= 0 or lambda_smooth <= 0:
        raise ValueError("Matern parameters must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    x = kappa * r
    with np.errstate(invalid="ignore", over="ignore"):
        val = x ** lambda_smooth * kv(lambda_smooth, x)
        val = val / (np.exp(gammaln(lambda_smooth)) * 2.0 ** (lambda_smooth - 1.0))
    val = np.where(x == 0, 1.0, val)
    val = np.where(np.isfinite(val), val, 0.0)
    return sigma ** 2 * val


def _log_tau0(lambda_smooth, d):
    alpha = lambda_smooth + d / 2.0
    return 0.5 * (gammaln(lambda_smooth) - gammaln(alpha) - (d / 2.0) * np.log(4.0 * np.pi))


def params_from_range_sigma(rho, sigma, lambda_smooth=1.0, d=2):
    """Return (log tau, log kappa) for empirical range ``rho`` and std ``sigma``."""
    if rho <= 0 or sigma <= 0:
        raise ValueError("rho and sigma must be positive")
    log_kappa = 0.5 * np.log(8.0 * lambda_smooth) - np.log(rho)
    log_tau = _log_tau0(lambda_smooth, d) - np.log(sigma) - lambda_smooth * log_kappa
    return float(log_tau), float(log_kappa)


def range_sigma_from_params(log_tau, log_kappa, lambda_smooth=1.0, d=2):
    """Inverse of :func:`params_from_range_sigma`; returns (rho, sigma)."""
    rho = np.sqrt(8.0 * lambda_smooth) / np.exp(log_kappa)
    log_sigma = _log_tau0(lambda_smooth, d) - log_tau - lambda_smooth * log_kappa
    return float(rho), float(np.exp(log_sigma))


# --------------------------------------------------------------------------
# Precision matrices
# --------------------------------------------------------------------------

def rw1_precision(n: int, sigma2: float):
    """First-order random-walk precision and its sum-to-zero constraint row.

    Returns ``(Q, C)`` with ``Q = D'D / sigma2`` (rank n-1) and ``C`` a
    1 x n sparse row of ones.
    """
    if n < 2:
        raise ValueError("random walk needs n >= 2")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    D = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
    Q = (D.T @ D) / sigma2
    return sp.csr_matrix(Q), sp.csr_matrix(np.ones((1, n)))


def rw1_log_pdet(n: int, sigma2: float) -> float:
    """Log pseudo-determinant of the RW1 precision (path Laplacian has pdet n)."""
    return (n - 1) * -np.log(sigma2) + np.log(n)


def ar1_precision(n: int, rho_ar: float, sigma2_marginal: float) -> sp.csr_matrix:
    """Stationary AR(1) precision parameterised by the marginal variance."""
    if not abs(rho_ar) < 1:
        raise ValueError("AR(1) coefficient must satisfy |rho| < 1")
    if sigma2_marginal <= 0:
        raise ValueError("variance must be positive")
    if n == 1:
        return sp.csr_matrix(np.array([[1.0 / sigma2_marginal]]))
    innov = sigma2_marginal * (1.0 - rho_ar ** 2)
    main = np.full(n, 1.0 + rho_ar ** 2)
    main[0] = main[-1] = 1.0
    off = np.full(n - 1, -rho_ar)
    return sp.csr_matrix(sp.diags([off, main, off], [-1, 0, 1]) / innov)


def ar1_logdet(n: int, rho_ar: float, sigma2_marginal: float) -> float:
    innov = sigma2_marginal * (1.0 - rho_ar ** 2)
    return -n * np.log(innov) + np.log1p(-rho_ar ** 2)


def replicate_block(Q, k: int) -> sp.csr_matrix:
    """Block diagonal with ``k`` independent copies of ``Q``."""
    if k < 1:
        raise ValueError("need at least one replicate")
    return sp.csr_matrix(sp.block_diag([Q] * k))


def kronecker_precision(Q_time, Q_space, cap: int = KRON_CAP) -> sp.csr_matrix:
    """Precision of a separable field: ``Q_time`` kron ``Q_space``."""
    n = Q_time.shape[0] * Q_space.shape[0]
    if n > cap:
        raise ValueError(f"Kronecker dimension {n} exceeds cap {cap}")
    return sp.csr_matrix(sp.kron(Q_time, Q_space))


# --------------------------------------------------------------------------
# Priors
# --------------------------------------------------------------------------

PRIOR_KINDS = ("pc_matern_joint", "pc_sd", "loggamma_precision", "normal",
               "inverse_gamma", "fixed")


@dataclass(frozen=True)
class PriorSpec:
    """A prior on one (or, for pc_matern_joint, two) natural parameters.

    Parameters by kind:

    ``pc_matern_joint``: range0, p_range (P(range < range0)), sigma0,
    p_sigma (P(sigma > sigma0)), d.  Value is ``(range, sigma)``.

    ``pc_sd``: u, alpha with P(sigma > u) = alpha.  Value is sigma.

    ``loggamma_precision``: shape, rate.  Value is log precision.

    ``normal``: mean, var, optional lower/upper truncation.

    ``inverse_gamma``: shape, scale.  Value is a variance.

    ``fixed``: value.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}")
        p = self.params
        for key in ("p_range", "p_sigma", "alpha"):
            if key in p and not 0 < p[key] < 1:
                raise ValueError(f"{key} must lie in (0, 1)")
        for key in ("range0", "sigma0", "u", "rate", "shape", "scale", "var"):
            if key in p and not p[key] > 0:
                raise ValueError(f"{key} must be positive")

    def to_dict(self):
        return {"kind": self.kind, **self.params}


def pc_matern_rates(range0, p_range, sigma0, p_sigma, d=2):
    """Closed-form rates (lambda_range, lambda_sigma) of the joint PC prior."""
    lam1 = -np.log(p_range) * range0 ** (d / 2.0)
    lam2 = -np.log(p_sigma) / sigma0
    return lam1, lam2


def prior_logdensity(spec: PriorSpec, value) -> float:
    """Log density of ``value`` under ``spec``; -inf outside the support."""
    p = spec.params
    kind = spec.kind
    if kind == "pc_matern_joint":
        rng, sig = value
        if rng <= 0 or sig <= 0:
            return -np.inf
        d = p.get("d", 2)
        lam1, lam2 = pc_matern_rates(p["range0"], p["p_range"], p["sigma0"], p["p_sigma"], d)
        return float(np.log(d / 2.0) + np.log(lam1) + (-d / 2.0 - 1.0) * np.log(rng)
                     - lam1 * rng ** (-d / 2.0) + np.log(lam2) - lam2 * sig)
    if kind == "pc_sd":
        if value <= 0:
            return -np.inf
        rate = -np.log(p["alpha"]) / p["u"]
        return float(np.log(rate) - rate * value)
    if kind == "loggamma_precision":
        a, b = p["shape"], p["rate"]
        return float(a * np.log(b) - gammaln(a) + a * value - b * np.exp(value))
    if kind == "normal":
        lo, hi = p.get("lower", -np.inf), p.get("upper", np.inf)
        if not lo < value < hi:
            return -np.inf
        sd = np.sqrt(p["var"])
        z = (value - p["mean"]) / sd
        logpdf = -0.5 * z * z - np.log(sd) - 0.5 * np.log(2 * np.pi)
        mass = ndtr((hi - p["mean"]) / sd) - ndtr((lo - p["mean"]) / sd)
        return float(logpdf - np.log(mass))
    if kind == "inverse_gamma":
        if value <= 0:
            return -np.inf
        a, s = p["shape"], p["scale"]
        return float(a * np.log(s) - gammaln(a) - (a + 1) * np.log(value) - s / value)
    if kind == "fixed":
        return 0.0 if value == p["value"] else -np.inf
    raise ValueError(kind)
