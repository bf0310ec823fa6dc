"""Competitor models: covariate alignment, linear fusion and predictive processes."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .joint import (Calendar, _fixed_columns, _overrides, _safe_var, default_noise_prior,
                    domain_extent, matern_prior, project_rows, selector)
from .latent import PriorSpec
from .mesh import TriangleMesh
from .model import (FIXED, SITETYPES, AR1Replicated, DenseGPField, FixedEffects, Hyper,
                    HyperPrior, LikelihoodBlock, ModelError, ModelSpec, ObservationBlock,
                    RandomWalk1, SpdeField, Term, exponential_correlation)


class LatticeError(ValueError):
    pass


# --------------------------------------------------------------------------
# Bilinear interpolation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Lattice:
    """Values at the centres of a regular grid; ``values[j, i]`` at (x[i], y[j])."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    @classmethod
    def from_points(cls, px, py, values, tol=1e-6):
        xs = np.unique(np.round(np.asarray(px, dtype=float) / tol) * tol)
        ys = np.unique(np.round(np.asarray(py, dtype=float) / tol) * tol)
        for a in (xs, ys):
            if len(a) < 2 or np.ptp(np.diff(a)) > 1e-6 * max(1.0, np.abs(a).max()):
                raise LatticeError("points do not form a regular lattice")
        grid = np.full((len(ys), len(xs)), np.nan)
        i = np.rint((np.asarray(px) - xs[0]) / (xs[1] - xs[0])).astype(int)
        j = np.rint((np.asarray(py) - ys[0]) / (ys[1] - ys[0])).astype(int)
        grid[j, i] = values
        if np.isnan(grid).any():
            raise LatticeError("lattice has missing cells")
        return cls(xs, ys, grid)


def bilinear_interpolate(lat: Lattice, points) -> np.ndarray:
    """Bilinear blend of the four surrounding lattice values.

    Points in the half-cell margin outside the outermost centres are clamped
    to the edge row/column; points beyond the margin raise.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    dx, dy = lat.x[1] - lat.x[0], lat.y[1] - lat.y[0]
    lo_x, hi_x = lat.x[0] - dx / 2, lat.x[-1] + dx / 2
    lo_y, hi_y = lat.y[0] - dy / 2, lat.y[-1] + dy / 2
    eps = 1e-9 * max(dx, dy)
    if np.any((p[:, 0] < lo_x - eps) | (p[:, 0] > hi_x + eps)
              | (p[:, 1] < lo_y - eps) | (p[:, 1] > hi_y + eps)):
        raise LatticeError("point outside the lattice")
    fx = np.clip((p[:, 0] - lat.x[0]) / dx, 0, len(lat.x) - 1)
    fy = np.clip((p[:, 1] - lat.y[0]) / dy, 0, len(lat.y) - 1)
    i = np.minimum(np.floor(fx).astype(int), len(lat.x) - 2)
    j = np.minimum(np.floor(fy).astype(int), len(lat.y) - 2)
    tx, ty = fx - i, fy - j
    v = lat.values
    return ((1 - tx) * (1 - ty) * v[j, i] + tx * (1 - ty) * v[j, i + 1]
            + (1 - tx) * ty * v[j + 1, i] + tx * ty * v[j + 1, i + 1])


def align_bilinear(block: ObservationBlock, targets: ObservationBlock,
                   temporal: bool) -> np.ndarray:
    """Bilinear alignment of a gridded source to target rows.

    ``temporal=True`` interpolates the same day's lattice; otherwise the
    time-averaged lattice (e.g. the mean over PCM years) is used.
    """
    out = np.empty(len(targets))
    if not temporal:
        keys = np.column_stack([block.x, block.y])
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        mean = np.bincount(inv.ravel(), weights=block.values) / np.bincount(inv.ravel())
        return bilinear_interpolate(Lattice.from_points(uniq[:, 0], uniq[:, 1], mean),
                                    targets.locations)
    for d in np.unique(targets.time):
        sel = block.time == d
        if not sel.any():
            raise LatticeError(f"no gridded values for day {d}")
        lat = Lattice.from_points(block.x[sel], block.y[sel], block.values[sel])
        rows = targets.time == d
        out[rows] = bilinear_interpolate(lat, targets.locations[rows])
    return out


def kriging_align(fit, block_name: str, targets: ObservationBlock) -> np.ndarray:
    """Posterior-mean linear predictor of a fitted separate model at ``targets``."""
    lp = fit.spec.predictor(block_name, targets)
    out = np.zeros(len(targets))
    for k, w in enumerate(fit.weights):
        out += w * lp.evaluate(fit.means[k], fit.hypers_at(k))
    return out


# --------------------------------------------------------------------------
# Linear fusion
# --------------------------------------------------------------------------

def check_fixed_rank(X: np.ndarray, names):
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        raise ModelError(f"fixed-effect design is rank deficient ({rank} < {X.shape[1]}): {list(names)}")


def build_linear_fusion_model(mesh: TriangleMesh, monitors: ObservationBlock,
                              covariates=("X1", "X2"), priors: dict | None = None,
                              fixed_prior_var: float = 1000.0,
                              domain_size: float | None = None) -> ModelSpec:
    """Monitor-only regression on aligned covariates plus z1 + z2 + z3."""
    for c in covariates:
        if c not in monitors.covariates:
            raise ModelError(f"monitor rows lack covariate {c}")
        if not np.all(np.isfinite(monitors.covariates[c])):
            raise ModelError(f"covariate {c} has non-finite values")
    size = domain_size or domain_extent(mesh)
    cal = Calendar.from_blocks(monitors)
    T = cal.n
    names = ["beta0"] + [f"beta_{c}" for c in covariates] + ["beta_URB", "beta_RKS"]
    fe = FixedEffects(names, fixed_prior_var)
    z1, z2, z3 = SpdeField("z1", mesh), RandomWalk1("z2", T), AR1Replicated("z3", T, len(SITETYPES))

    def fixed(r):
        M = _fixed_columns(fe, r, "beta0", ("beta_URB", "beta_RKS")).tolil()
        for c in covariates:
            M[:, fe.index(f"beta_{c}")] = np.asarray(r.covariates[c], dtype=float)[:, None]
        return M.tocsr()

    X = fixed(monitors).toarray()[monitors.observed]
    check_fixed_rank(X, names)

    def rows(r):
        t = cal.index(r.time)
        return [Term(FIXED, fixed(r)), Term("z1", project_rows(mesh, r)),
                Term("z2", selector(t, T)),
                Term("z3", selector(r.sitetype_codes() * T + t, z3.size))]

    sd = np.sqrt(_safe_var(monitors.values))
    hypers = [Hyper("eps.log_var", "log_var", np.log(0.2 * sd ** 2)),
              Hyper("z1.log_sigma", "log_sigma", np.log(0.5 * sd)),
              Hyper("z1.log_range", "log_range", np.log(size / 3.0)),
              Hyper("z2.log_var", "log_var", np.log(0.05 * sd ** 2)),
              Hyper("z3.log_var", "log_var", np.log(0.05 * sd ** 2)),
              Hyper("z3.rho", "rho", 0.3, bounds=(-0.99, 0.99))]
    hp = [HyperPrior(("eps.log_var",), default_noise_prior()),
          HyperPrior(("z1.log_sigma", "z1.log_range"), matern_prior(size)),
          HyperPrior(("z2.log_var",), PriorSpec("pc_sd", {"u": float(sd), "alpha": 0.01})),
          HyperPrior(("z3.log_var",), default_noise_prior()),
          HyperPrior(("z3.rho",), PriorSpec("normal", {"mean": 0.3, "var": 0.5,
                                                       "lower": -1.0, "upper": 1.0}))]
    hp = _overrides(priors, hp)
    return ModelSpec("linear-fusion", [z1, z2, z3, fe],
                     [LikelihoodBlock("monitors", monitors, "eps.log_var")], hypers, hp,
                     {"monitors": rows}, {"calendar": (cal.first, cal.n),
                                          "covariates": list(covariates)})


# --------------------------------------------------------------------------
# Gaussian predictive process
# --------------------------------------------------------------------------

def knot_grid(domain, m_side: int = 5) -> np.ndarray:
    """``m_side`` x ``m_side`` regular knots at cell centres of the domain box."""
    x0, y0, x1, y1 = domain
    xs = x0 + (np.arange(m_side) + 0.5) * (x1 - x0) / m_side
    ys = y0 + (np.arange(m_side) + 0.5) * (y1 - y0) / m_side
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _check_knots(knots):
    knots = np.asarray(knots, dtype=float).reshape(-1, 2)
    d = np.sqrt(((knots[:, None] - knots[None]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    if len(knots) > 1 and d.min() < 1e-9:
        raise np.linalg.LinAlgError("duplicate knots make the knot correlation singular")
    return knots


def gpp_correlation(knots, s, s_prime, decay: float) -> np.ndarray:
    """c(s)' H^{-1} c(s') for the exponential-correlation predictive process."""
    if decay <= 0:
        raise ValueError("decay must be positive")
    knots = _check_knots(knots)
    H = exponential_correlation(knots, knots, decay)
    cs = exponential_correlation(s, knots, decay)
    ct = exponential_correlation(s_prime, knots, decay)
    return np.einsum("ij,ij->i", cs, np.linalg.solve(H, ct.T).T)


def gpp_weights(sites, knots, decay: float) -> np.ndarray:
    """Rows c(s)' H^{-1}: map knot values to predictive-process values at ``sites``."""
    H = exponential_correlation(knots, knots, decay)
    C = exponential_correlation(sites, knots, decay)
    return np.linalg.solve(H, C.T).T


def build_gpp_model(monitors: ObservationBlock, knots=None, covariates=("X1",),
                    stationary: bool = False, time_kind: str = "ar1",
                    priors: dict | None = None, fixed_prior_var: float = 1000.0,
                    domain=None) -> ModelSpec:
    """Site-type regression plus a (predictive-process) exponential GP.

    Mean: gamma0 + sum_c gamma_c X_c + site-type offsets of the intercept and
    of every covariate slope (rural is the reference).  The latent field is
    a GP on ``knots`` (projected to sites through c(s)'H^{-1}) or, when
    ``stationary``, a full GP on the monitor sites.  Days are linked by an
    AR(1) (``time_kind='ar1'``) or independent (``'iid'``).
    """
    for c in covariates:
        if c not in monitors.covariates:
            raise ModelError(f"monitor rows lack covariate {c}")
    cal = Calendar.from_blocks(monitors)
    T = cal.n
    sites, site_idx = np.unique(monitors.locations, axis=0, return_inverse=True)
    site_idx = site_idx.ravel()
    if domain is None:
        domain = (sites[:, 0].min(), sites[:, 1].min(), sites[:, 0].max(), sites[:, 1].max())
    size = max(domain[2] - domain[0], domain[3] - domain[1])
    if stationary:
        support = sites
    else:
        support = _check_knots(knot_grid(domain) if knots is None else knots)
        per_day = np.bincount(cal.index(monitors.time)[monitors.observed], minlength=T)
        if len(per_day) and len(support) > per_day.min():
            warnings.warn(f"{len(support)} knots exceed the {per_day.min()} observations on some day")
    nu = DenseGPField("nu", support, T, time_kind)
    terms = ["gamma0"] + [f"gamma_{c}" for c in covariates]
    names = list(terms)
    for st in SITETYPES[1:]:
        names += [f"{t}_{st}" for t in terms]
    fe = FixedEffects(names, fixed_prior_var)

    def fixed(r):
        codes = r.sitetype_codes()
        cols = {"gamma0": np.ones(len(r))}
        for c in covariates:
            cols[f"gamma_{c}"] = np.asarray(r.covariates[c], dtype=float)
        X = np.zeros((len(r), fe.size))
        for t in terms:
            X[:, fe.index(t)] = cols[t]
            for k, st in enumerate(SITETYPES[1:], start=1):
                X[:, fe.index(f"{t}_{st}")] = cols[t] * (codes == k)
        return sp.csr_matrix(X)

    check_fixed_rank(fixed(monitors).toarray()[monitors.observed], names)
    m = len(support)

    def rows(r):
        t = cal.index(r.time)
        if stationary:
            idx = np.array([_site_lookup(sites, p) for p in r.locations])
            return [Term(FIXED, fixed(r)), Term("nu", selector(t * m + idx, nu.size))]
        locs = r.locations

        def weights(h, locs=locs, t=t):
            W = gpp_weights(locs, support, np.exp(h["nu.log_decay"]))
            cols = t[:, None] * m + np.arange(m)[None, :]
            rr = np.repeat(np.arange(len(locs)), m)
            return sp.csr_matrix((W.ravel(), (rr, cols.ravel())), shape=(len(locs), nu.size))
        return [Term(FIXED, fixed(r)), Term("nu", weights)]

    sd = np.sqrt(_safe_var(monitors.values))
    hypers = [Hyper("eps.log_var", "log_var", np.log(0.3 * sd ** 2)),
              Hyper("nu.log_var", "log_var", np.log(0.5 * sd ** 2)),
              Hyper("nu.log_decay", "log_decay", np.log(3.0 / (0.5 * size)))]
    hp = [HyperPrior(("eps.log_var",), PriorSpec("inverse_gamma", {"shape": 2.0, "scale": 1.0})),
          HyperPrior(("nu.log_var",), PriorSpec("inverse_gamma", {"shape": 2.0, "scale": 1.0})),
          HyperPrior(("nu.log_decay",), PriorSpec("normal", {"mean": float(np.log(3.0 / (0.5 * size))),
                                                             "var": 1.0}))]
    if time_kind == "ar1":
        hypers.append(Hyper("nu.rho", "rho", 0.3, bounds=(-0.99, 0.99)))
        hp.append(HyperPrior(("nu.rho",), PriorSpec("normal", {"mean": 0.0, "var": 1e4,
                                                               "lower": -1.0, "upper": 1.0})))
    hp = _overrides(priors, hp)
    name = "gpp-stationary" if stationary else "gpp"
    return ModelSpec(name, [nu, fe], [LikelihoodBlock("monitors", monitors, "eps.log_var")],
                     hypers, hp, {"monitors": rows},
                     {"calendar": (cal.first, cal.n), "covariates": list(covariates),
                      "support": support})


def _site_lookup(sites, p, tol=1e-9):
    d = np.abs(sites - p).max(axis=1)
    k = int(np.argmin(d))
    if d[k] > tol:
        raise ModelError("stationary GP model can only predict at monitor sites")
    return k
