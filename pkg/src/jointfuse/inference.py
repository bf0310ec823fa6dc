"""Exact-Gaussian nested Laplace inference.

Given hyperparameters psi the latent field has an exact Gaussian conditional
posterior (all likelihoods are Gaussian).  The hyperparameter posterior is
evaluated through the usual identity

    log p(psi | y) = log p(y | theta*, psi) + log p(theta* | psi) + log p(psi)
                     - log p(theta* | y, psi) + const,

located with a quasi-Newton search and integrated with a central composite
design (or a grid, or the mode only).
"""
from __future__ import annotations

import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, minimize
from scipy.special import ndtr
from scipy.stats import truncnorm

from .io import write_npz
from .linalg import NotPositiveDefinite, SparseCholesky
from .model import ModelSpec, PriorState

LOG2PI = np.log(2.0 * np.pi)
FORMAT_VERSION = 1


class InferenceError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Conditional Gaussian posterior
# --------------------------------------------------------------------------

class LatentGaussianPosterior:
    """N(mu, Q^{-1}) conditioned on ``C theta = 0`` (if ``C`` is given)."""

    def __init__(self, Q, b, C=None):
        self.Q = sp.csc_matrix(Q)
        self.chol = SparseCholesky(self.Q)
        mu = self.chol.solve(b)
        self.C = None if C is None else sp.csr_matrix(C)
        self.S = self.V = None
        if self.C is not None and self.C.shape[0] > 0:
            self.S = self.chol.solve(self.C.T.toarray())
            if self.S.ndim == 1:
                self.S = self.S[:, None]
            self.V = self.C @ self.S
            self._Vinv = np.linalg.inv(self.V)
            mu = mu - self.S @ (self._Vinv @ (self.C @ mu))
        self.mean = mu
        self._var = None

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def n_constraints(self):
        return 0 if self.C is None else self.C.shape[0]

    def log_density_at_mean(self) -> float:
        """Log density of the constrained Gaussian evaluated at its mean."""
        k = self.n_constraints
        out = -0.5 * (self.n - k) * LOG2PI + 0.5 * self.chol.logdet()
        if k:
            out += 0.5 * np.linalg.slogdet(self.V)[1]
            CC = (self.C @ self.C.T).toarray()
            out -= 0.5 * np.linalg.slogdet(CC)[1]
        return float(out)

    def marginal_variances(self) -> np.ndarray:
        if self._var is None:
            var = self.chol.inverse_diagonal()
            if self.S is not None:
                var = var - np.einsum("ij,jk,ik->i", self.S, self._Vinv, self.S)
            self._var = np.maximum(var, 0.0)
        return self._var

    def covariance(self) -> np.ndarray:
        """Dense constrained covariance (small problems only)."""
        cov = self.chol.solve(np.eye(self.n))
        if self.S is not None:
            cov = cov - self.S @ self._Vinv @ self.S.T
        return 0.5 * (cov + cov.T)

    def sample(self, z) -> np.ndarray:
        """Map standard normals ``z`` (n x k) to constrained posterior draws."""
        x = self.chol.sqrt_solve(z)
        if self.S is not None:
            x = x - self.S @ (self._Vinv @ (self.C @ x))
        return x + (self.mean[:, None] if x.ndim == 2 else self.mean)


def conditional_posterior(spec: ModelSpec, psi, prior: PriorState | None = None):
    """Exact Gaussian p(theta | psi, y) for the model ``spec``."""
    h = spec.hyper_values(psi)
    prior = prior if prior is not None else spec.prior_state(h)
    Qlik, b = spec.gaussian_system(h)
    Q = prior.Q + Qlik
    C = prior.constraint
    if C is not None:
        # c C'C vanishes on {C theta = 0}, so the constrained Gaussian is
        # unchanged, but directions the data never reach become proper
        c = float(np.mean(Q.diagonal()))
        Q = Q + c * (C.T @ C)
    return LatentGaussianPosterior(Q, b, C), prior


@dataclass
class Evaluation:
    psi: np.ndarray
    log_post: float
    log_evidence: float
    posterior: LatentGaussianPosterior | None


def evaluate(spec: ModelSpec, psi, keep_posterior: bool = True) -> Evaluation:
    """Log hyper-posterior (up to a psi-independent constant) at ``psi``."""
    psi = np.asarray(psi, dtype=float)
    lp = spec.log_prior(psi)
    if not np.isfinite(lp):
        return Evaluation(psi, -np.inf, -np.inf, None)
    h = spec.hyper_values(psi)
    try:
        post, prior = conditional_posterior(spec, psi)
    except (NotPositiveDefinite, ValueError, np.linalg.LinAlgError, FloatingPointError):
        return Evaluation(psi, -np.inf, -np.inf, None)
    mu = post.mean
    loglik = spec.log_likelihood(mu, h)
    # prior density on the constraint subspace; the constraints span exactly
    # the null space of the intrinsic blocks, so the pseudo-determinant is
    # the right normaliser
    quad = float(mu @ (prior.Q @ mu))
    logprior = -0.5 * prior.rank * LOG2PI + 0.5 * prior.log_pdet - 0.5 * quad
    evidence = loglik + logprior - post.log_density_at_mean()
    val = evidence + lp
    if not np.isfinite(val):
        return Evaluation(psi, -np.inf, -np.inf, None)
    return Evaluation(psi, float(val), float(evidence), post if keep_posterior else None)


def log_hyper_posterior(spec: ModelSpec, psi) -> float:
    return evaluate(spec, psi, keep_posterior=False).log_post


# --------------------------------------------------------------------------
# Mode finding
# --------------------------------------------------------------------------

@dataclass
class OptimizeResult:
    mode: np.ndarray
    log_post: float
    neg_hessian: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float


def fd_gradient(f, x, step=1e-4, f0=None):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        fp, fm = f(x + e), f(x - e)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2 * step)
        else:
            f0 = f(x) if f0 is None else f0
            g[i] = (fp - f0) / step if np.isfinite(fp) else (f0 - fm) / step
    return g


def fd_hessian(f, x, step=1e-3, f0=None):
    d = len(x)
    f0 = f(x) if f0 is None else f0
    H = np.zeros((d, d))
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = step
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / step ** 2
        for j in range(i):
            ej = np.zeros(d)
            ej[j] = step
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4 * step ** 2)
    return 0.5 * (H + H.T)


def floor_pd(H, floor=1e-8):
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    return (V * np.maximum(w, floor)) @ V.T


def optimize_hyperposterior(spec: ModelSpec, psi_init=None, max_iter: int = 200,
                            grad_tol: float = 1e-3, step: float = 1e-4,
                            hess_step: float = 1e-3, max_restarts: int = 5) -> OptimizeResult:
    """Maximise the log hyper-posterior by L-BFGS-B with central FD gradients."""
    x0 = spec.psi_init if psi_init is None else np.asarray(psi_init, dtype=float)
    if not np.isfinite(log_hyper_posterior(spec, x0)):
        raise InferenceError("initial hyperparameters have zero posterior density")
    cache = {}

    def negf(x):
        key = x.tobytes()
        if key not in cache:
            v = log_hyper_posterior(spec, x)
            cache[key] = -v if np.isfinite(v) else np.inf
        return cache[key]

    def fun(x):
        f0 = negf(x)
        if not np.isfinite(f0):
            return 1e30, np.zeros_like(x)
        return f0, fd_gradient(negf, x, step, f0)

    f0, g0 = fun(x0)
    n_iter = 0
    x = x0
    if len(x0) and np.max(np.abs(g0)) >= grad_tol:
        bounds = []
        for lo, hi in spec.bounds():
            bounds.append((None if lo is None else lo + 1e-9, None if hi is None else hi - 1e-9))
        opts = {"maxiter": max_iter, "gtol": grad_tol * 0.1, "ftol": 1e-15, "maxcor": 20}
        x, fx = x0, f0
        # a stalled line search ends L-BFGS-B early; restarting drops the
        # stale curvature pairs
        for _ in range(max_restarts + 1):
            res = minimize(fun, x, jac=True, method="L-BFGS-B", bounds=bounds, options=opts)
            n_iter += int(res.nit)
            if negf(res.x) >= fx:
                break
            improved = fx - negf(res.x)
            x, fx = res.x, negf(res.x)
            if (np.max(np.abs(fd_gradient(negf, x, step, fx))) < grad_tol or improved < 1e-10
                    or n_iter >= max_iter):
                break
    fmode = negf(x)
    g = fd_gradient(negf, x, step, fmode)
    gnorm = float(np.max(np.abs(g))) if len(g) else 0.0
    H = fd_hessian(negf, x, hess_step, fmode) if len(x) else np.zeros((0, 0))
    if len(x) and not np.all(np.isfinite(H)):
        H = np.where(np.isfinite(H), H, 0.0)
    Hpd = floor_pd(H) if len(x) else H
    return OptimizeResult(x, -fmode, Hpd, gnorm < grad_tol, n_iter, gnorm)


# --------------------------------------------------------------------------
# Exploration
# --------------------------------------------------------------------------

def _popcount(v):
    return bin(v).count("1")


def fractional_factorial(d: int) -> np.ndarray:
    """Two-level design of resolution >= V (full factorial when small).

    Searches for the smallest number of base factors ``k`` and ``d - k``
    generators (products of >= 4 base factors) whose defining relation has
    no word shorter than 5.
    """
    if d <= 0:
        return np.zeros((1, 0))
    for k in range(1, d + 1):
        n_gen = d - k
        if n_gen == 0:
            gens = []
            break
        cands = [m for m in range(1, 1 << k) if _popcount(m) >= 4]
        cands.sort(key=lambda m: (-_popcount(m), m))
        gens = _search_generators(cands, n_gen)
        if gens is not None:
            break
    base = np.array(list(itertools.product([-1.0, 1.0], repeat=k)))[:, ::-1]
    cols = [base[:, i] for i in range(k)]
    for m in gens:
        col = np.ones(len(base))
        for i in range(k):
            if m >> i & 1:
                col = col * base[:, i]
        cols.append(col)
    return np.column_stack(cols)


def _search_generators(cands, n_gen):
    chosen = []

    def ok(new):
        trial = chosen + [new]
        # every product including the new generator must have length >= 5
        for r in range(1, len(trial) + 1):
            for combo in itertools.combinations(range(len(trial) - 1), r - 1):
                m = new
                for c in combo:
                    m ^= trial[c]
                if _popcount(m) + r < 5:
                    return False
        return True

    def rec(start):
        if len(chosen) == n_gen:
            return True
        for i in range(start, len(cands)):
            if ok(cands[i]):
                chosen.append(cands[i])
                if rec(i + 1):
                    return True
                chosen.pop()
        return False

    return list(chosen) if rec(0) else None


def ccd_design(d: int, f0: float = 1.1):
    """Standardised CCD points (radius f0 * sqrt(d)) and design weights."""
    if d == 0:
        return np.zeros((1, 0)), np.ones(1)
    r = f0 * np.sqrt(d)
    axial = np.vstack([np.eye(d) * r, -np.eye(d) * r])
    if d == 1:
        pts = np.vstack([np.zeros((1, 1)), axial])
    else:
        pts = np.vstack([np.zeros((1, d)), fractional_factorial(d) * f0, axial])
    n_p = len(pts)
    delta = np.exp(0.5 * d * f0 ** 2) / ((n_p - 1) * (f0 ** 2 - 1.0))
    w = np.full(n_p, delta)
    w[0] = 1.0
    return pts, w


@dataclass
class ExplorationPoint:
    psi: np.ndarray
    log_post: float
    weight: float


def _eigen_map(mode, neg_hessian):
    w, V = np.linalg.eigh(neg_hessian)
    return lambda z: mode + V @ (z / np.sqrt(w))


def _threads(threads):
    if threads is None:
        threads = int(os.environ.get("JOINTFUSE_THREADS", "1") or 1)
    return max(1, threads)


def _evaluate_many(spec, psis, threads):
    threads = _threads(threads)
    if threads == 1 or len(psis) == 1:
        return [evaluate(spec, p) for p in psis]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda p: evaluate(spec, p), psis))


def explore_hyperposterior(spec: ModelSpec, mode, neg_hessian, strategy: str = "ccd",
                           f0: float = 1.1, threads: int | None = None,
                           grid_step: float = 1.0, grid_extent: float = 3.0):
    """Weighted integration points around the mode; returns (points, evaluations)."""
    mode = np.asarray(mode, dtype=float)
    d = len(mode)
    if strategy == "empirical_bayes" or d == 0:
        ev = _evaluate_many(spec, [mode], threads)
        return [ExplorationPoint(mode, ev[0].log_post, 1.0)], ev
    to_psi = _eigen_map(mode, neg_hessian)
    if strategy == "ccd":
        z, design_w = ccd_design(d, f0)
    elif strategy == "grid":
        if d > 4:
            raise InferenceError("grid exploration only supported up to 4 hyperparameters")
        ticks = np.arange(-grid_extent, grid_extent + 1e-9, grid_step)
        z = np.array(list(itertools.product(ticks, repeat=d)))
        design_w = np.ones(len(z))
    else:
        raise InferenceError(f"unknown exploration strategy {strategy!r}")
    psis = [to_psi(zi) for zi in z]
    evs = _evaluate_many(spec, psis, threads)
    lp = np.array([e.log_post for e in evs])
    if not np.isfinite(lp).any():
        raise InferenceError("no finite exploration point")
    keep = np.isfinite(lp)
    w = np.where(keep, design_w * np.exp(np.where(keep, lp, 0) - np.max(lp[keep])), 0.0)
    w = w / w.sum()
    pts = [ExplorationPoint(psis[i], lp[i], w[i]) for i in range(len(psis)) if keep[i] and w[i] > 0]
    evs = [evs[i] for i in range(len(psis)) if keep[i] and w[i] > 0]
    return pts, evs


# --------------------------------------------------------------------------
# Fit results
# --------------------------------------------------------------------------

@dataclass
class FitResult:
    spec: ModelSpec
    mode: np.ndarray
    neg_hessian: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    log_posts: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    converged: bool = True
    n_iter: int = 0
    strategy: str = "ccd"
    timing: dict = field(default_factory=dict)
    _posteriors: list | None = None
    extra: dict = field(default_factory=dict)

    @property
    def psi_names(self):
        return self.spec.psi_names

    @property
    def spec_hash(self):
        return self.spec.spec_hash()

    def posteriors(self, threads=None) -> list:
        """Conditional Gaussian posteriors at the exploration points (recomputed if needed)."""
        if self._posteriors is None:
            evs = _evaluate_many(self.spec, list(self.points), threads)
            if any(e.posterior is None for e in evs):
                raise InferenceError("conditional posterior failed at a stored point")
            self._posteriors = [e.posterior for e in evs]
        return self._posteriors

    def hypers_at(self, k):
        return self.spec.hyper_values(self.points[k])

    def latent_mean(self):
        return self.weights @ self.means


def fit(spec: ModelSpec, strategy: str = "ccd", psi_init=None, max_iter: int = 200,
        threads: int | None = None) -> FitResult:
    t0 = time.perf_counter()
    opt = optimize_hyperposterior(spec, psi_init, max_iter=max_iter)
    t1 = time.perf_counter()
    pts, evs = explore_hyperposterior(spec, opt.mode, opt.neg_hessian, strategy, threads=threads)
    posts = [e.posterior for e in evs]
    means = np.array([p.mean for p in posts])
    sds = np.sqrt(np.array([p.marginal_variances() for p in posts]))
    t2 = time.perf_counter()
    return FitResult(spec, opt.mode, opt.neg_hessian, np.array([p.psi for p in pts]),
                     np.array([p.weight for p in pts]), np.array([p.log_post for p in pts]),
                     means, sds, opt.converged, opt.n_iter, strategy,
                     {"optimize_s": t1 - t0, "explore_s": t2 - t1}, posts)


# --------------------------------------------------------------------------
# Marginals, sampling, DIC
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Marginal:
    mean: float
    sd: float
    q025: float
    q50: float
    q975: float


def mixture_marginal(weights, means, sds, tol: float = 1e-8) -> Marginal:
    w = np.asarray(weights, dtype=float)
    m = np.asarray(means, dtype=float)
    s = np.asarray(sds, dtype=float)
    mean = float(w @ m)
    var = float(w @ (s ** 2 + m ** 2) - mean ** 2)
    sd = np.sqrt(max(var, 0.0))
    if sd == 0:
        return Marginal(mean, 0.0, mean, mean, mean)

    def cdf(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(s > 0, (x - m) / np.where(s > 0, s, 1), np.where(x >= m, np.inf, -np.inf))
        return float(w @ ndtr(z))

    lo, hi = float(np.min(m - 10 * s)) - 1e-12, float(np.max(m + 10 * s)) + 1e-12
    qs = [brentq(lambda x: cdf(x) - p, lo, hi, xtol=tol, rtol=1e-15)
          for p in (0.025, 0.5, 0.975)]
    return Marginal(mean, float(sd), *qs)


def marginal_latent(fit: FitResult, index: int) -> Marginal:
    if not 0 <= index < fit.spec.n_latent:
        raise IndexError(f"latent index {index} out of range")
    return mixture_marginal(fit.weights, fit.means[:, index], fit.sds[:, index])


@dataclass
class PosteriorDraws:
    point: np.ndarray          # exploration point index per draw
    theta: np.ndarray          # (n, n_latent)
    hypers: list               # hyper dict per draw


def sample_posterior(fit: FitResult, n: int, seed: int) -> PosteriorDraws:
    """Joint draws of (exploration point, theta); deterministic for a seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    choice = rng.choice(len(fit.weights), size=n, p=fit.weights)
    theta = np.empty((n, fit.spec.n_latent))
    posts = fit.posteriors()
    for k in range(len(fit.weights)):
        idx = np.flatnonzero(choice == k)
        if len(idx) == 0:
            continue
        zr = np.random.default_rng(np.random.SeedSequence([seed, 1, k]))
        z = zr.standard_normal((fit.spec.n_latent, len(idx)))
        theta[idx] = posts[k].sample(z).T
    hypers = [fit.hypers_at(k) for k in choice]
    return PosteriorDraws(choice, theta, hypers)


def dic(fit: FitResult, n_samples: int = 200, seed: int = 0) -> dict:
    """Deviance information criterion from posterior draws."""
    spec = fit.spec
    draws = sample_posterior(fit, n_samples, seed)
    devs = [-2.0 * spec.log_likelihood(draws.theta[i], draws.hypers[i]) for i in range(n_samples)]
    dbar = float(np.mean(devs))
    psibar = fit.weights @ fit.points
    dhat = -2.0 * spec.log_likelihood(fit.latent_mean(), spec.hyper_values(psibar))
    pd = dbar - dhat
    return {"dic": dhat + 2 * pd, "p_d": pd, "mean_deviance": dbar, "deviance_at_mean": dhat}


# --------------------------------------------------------------------------
# Hyperparameter summaries
# --------------------------------------------------------------------------

def _natural(param, x):
    if param == "log_sigma":
        return np.exp(2 * x)          # reported as a variance
    if param.startswith("log_"):
        return np.exp(x)
    return x


def hyper_summary(fit: FitResult) -> dict:
    """Posterior summaries of hyperparameters on the natural scale.

    Log-scale parameters are reported as variances (``log_sigma`` is
    converted to sigma^2), ranges and decays as-is.  Uses the Gaussian
    approximation N(mode, H^{-1}) on the working scale.
    """
    out = {}
    if len(fit.mode) == 0:
        return out
    cov = np.linalg.inv(fit.neg_hessian)
    gh_x, gh_w = np.polynomial.hermite_e.hermegauss(40)
    gh_w = gh_w / gh_w.sum()
    for i, name in enumerate(fit.psi_names):
        param = fit.spec.hypers[name].param
        m, s = fit.mode[i], np.sqrt(max(cov[i, i], 0.0))
        lo, hi = fit.spec.hypers[name].bounds
        if (lo is not None or hi is not None) and s > 0:
            # bounded parameters (e.g. AR1 correlation): truncated Gaussian
            tn = truncnorm(-np.inf if lo is None else (lo - m) / s,
                           np.inf if hi is None else (hi - m) / s, loc=m, scale=s)
            q = tn.ppf([0.025, 0.5, 0.975])
            out[name] = Marginal(float(tn.mean()), float(tn.std()), *map(float, q))
            continue
        vals = _natural(param, m + s * gh_x)
        mean = float(gh_w @ vals)
        sd = float(np.sqrt(max(gh_w @ vals ** 2 - mean ** 2, 0.0)))
        q = [float(_natural(param, m + s * z)) for z in (-1.959963984540054, 0.0, 1.959963984540054)]
        label = name.replace("log_sigma", "var").replace("log_var", "var") \
                    .replace("log_range", "range").replace("log_decay", "decay")
        out[label] = Marginal(mean, sd, *q)
    return out


def fixed_effect_summary(fit: FitResult) -> dict:
    from .model import FIXED
    comp = fit.spec.component(FIXED)
    return {n: marginal_latent(fit, fit.spec.fixed_index(n)) for n in comp.names}


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------

def save_fit(fit: FitResult, path, extra: dict | None = None, extra_arrays: dict | None = None) -> None:
    """Write the factor-free fit artifact (``.npz`` with little-endian arrays).

    ``extra`` (JSON-able) and ``extra_arrays`` ride along for callers that
    need more than the ModelSpec to rebuild the model (e.g. aligned covariates).
    """
    meta = {"format_version": FORMAT_VERSION, "model": fit.spec.name,
            "spec_hash": fit.spec_hash, "psi_names": list(fit.psi_names),
            "converged": bool(fit.converged), "n_iter": int(fit.n_iter),
            "strategy": fit.strategy, "extra": dict(extra or fit.extra or {})}
    arrays = {"mode": fit.mode, "neg_hessian": fit.neg_hessian, "points": fit.points,
              "weights": fit.weights, "log_posts": fit.log_posts, "means": fit.means,
              "sds": fit.sds}
    for k, v in (extra_arrays or {}).items():
        arrays[f"x_{k}"] = v
    arrays = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in arrays.items()}
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    write_npz(path, arrays)


def read_fit_meta(path) -> tuple[dict, dict]:
    """Return (meta, extra arrays) without attaching a model."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            extra = {k[2:]: z[k].astype(float) for k in z.files if k.startswith("x_")}
    except (OSError, KeyError, ValueError) as exc:
        raise InferenceError(f"cannot read fit artifact {path}: {exc}") from exc
    if meta.get("format_version") != FORMAT_VERSION:
        raise InferenceError(f"unsupported fit format {meta.get('format_version')}")
    return meta, extra


def load_fit(path, spec: ModelSpec) -> FitResult:
    """Load a fit artifact and attach it to ``spec`` (hash-checked)."""
    meta, _ = read_fit_meta(path)
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k].astype(float) for k in z.files if k != "meta" and not k.startswith("x_")}
    if meta["spec_hash"] != spec.spec_hash():
        raise InferenceError("fit artifact does not match the model/data it is used with")
    d = len(meta["psi_names"])
    return FitResult(spec, arrays["mode"], arrays["neg_hessian"].reshape(d, d),
                     arrays["points"].reshape(-1, d), arrays["weights"], arrays["log_posts"],
                     arrays["means"], arrays["sds"], meta["converged"], meta["n_iter"],
                     meta["strategy"], extra=meta.get("extra", {}))
