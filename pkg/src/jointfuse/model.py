"""Declarative latent-Gaussian model specifications.

A :class:`ModelSpec` stacks several Gaussian likelihood blocks whose linear
predictors are sparse linear maps of one shared latent vector.  The latent
vector is the concatenation of the declared components (SPDE field, random
walk, replicated AR(1), Kronecker interactions, dense GP fields and a block
of fixed effects).  Scaling coefficients that multiply a shared component in
another block ("copy" links) are hyperparameters, so that given the
hyperparameters everything stays jointly Gaussian.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .latent import (PriorSpec, ar1_logdet, ar1_precision, kronecker_precision,
                     params_from_range_sigma, prior_logdensity, rw1_log_pdet,
                     rw1_precision)
from .linalg import SparseCholesky
from .mesh import TriangleMesh, fem_matrices

SITETYPES = ("RUR", "URB", "RKS")
FIXED = "fixed"


class ModelError(ValueError):
    pass


# --------------------------------------------------------------------------
# Observations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservationBlock:
    """Rows of one data source.  ``values`` uses NaN for missing/masked."""

    block_id: str
    x: np.ndarray
    y: np.ndarray
    time: np.ndarray
    values: np.ndarray
    sitetype: np.ndarray | None = None
    monitor_id: np.ndarray | None = None
    temporal_resolution: str = "daily"
    covariates: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.values)
        for name in ("x", "y", "time"):
            if len(getattr(self, name)) != n:
                raise ModelError(f"{self.block_id}: column {name} has wrong length")
        if self.sitetype is not None:
            bad = set(np.unique(self.sitetype)) - set(SITETYPES)
            if bad:
                raise ModelError(f"unknown site type(s) {sorted(bad)}")
        vals = np.asarray(self.values, dtype=float)
        if np.any(np.isinf(vals)):
            raise ModelError(f"{self.block_id}: infinite values")

    def __len__(self):
        return len(self.values)

    @property
    def locations(self) -> np.ndarray:
        return np.column_stack([self.x, self.y]).astype(float)

    @property
    def observed(self) -> np.ndarray:
        return ~np.isnan(np.asarray(self.values, dtype=float))

    def with_values(self, values) -> "ObservationBlock":
        return replace(self, values=np.asarray(values, dtype=float))

    def subset(self, mask) -> "ObservationBlock":
        idx = np.flatnonzero(mask) if np.asarray(mask).dtype == bool else np.asarray(mask)
        opt = lambda a: None if a is None else np.asarray(a)[idx]
        return replace(self, x=self.x[idx], y=self.y[idx], time=self.time[idx],
                       values=np.asarray(self.values, dtype=float)[idx],
                       sitetype=opt(self.sitetype), monitor_id=opt(self.monitor_id),
                       covariates={k: np.asarray(v)[idx] for k, v in self.covariates.items()})

    def sitetype_codes(self) -> np.ndarray:
        if self.sitetype is None:
            raise ModelError(f"{self.block_id}: rows carry no site type")
        lookup = {s: i for i, s in enumerate(SITETYPES)}
        return np.array([lookup[s] for s in self.sitetype], dtype=np.int64)


# --------------------------------------------------------------------------
# Latent components
# --------------------------------------------------------------------------

class SpdeField:
    """Matern (alpha=2) field on mesh nodes, hyperparameters log sigma, log range."""

    kind = "matern_spde"

    def __init__(self, name: str, mesh: TriangleMesh):
        self.name = name
        self.mesh = mesh
        self.C, self.G = fem_matrices(mesh)
        self.size = mesh.n_nodes
        self.hypers = (f"{name}.log_sigma", f"{name}.log_range")
        self.constraint = None
        self.rank = self.size

    def spatial_precision(self, log_sigma, log_range):
        log_tau, log_kappa = params_from_range_sigma(np.exp(log_range), np.exp(log_sigma))
        from .mesh import spde_precision
        return spde_precision(self.C, self.G, log_tau, log_kappa)

    def precision(self, h):
        Q = self.spatial_precision(h[self.hypers[0]], h[self.hypers[1]])
        return Q, SparseCholesky(Q).logdet()


class RandomWalk1:
    """RW1 over ``n`` consecutive times with a sum-to-zero constraint."""

    kind = "rw1"

    def __init__(self, name: str, n: int):
        self.name = name
        self.size = n
        self.hypers = (f"{name}.log_var",)
        self.constraint = sp.csr_matrix(np.ones((1, n)))
        self.rank = n - 1

    def precision(self, h):
        v = np.exp(h[self.hypers[0]])
        Q, _ = rw1_precision(self.size, v)
        return Q, rw1_log_pdet(self.size, v)


class AR1Replicated:
    """``replicates`` independent AR(1) series of length ``n`` (replicate-major).

    The log-variance hyperparameter is the innovation variance; the marginal
    variance passed to :func:`ar1_precision` is innov / (1 - rho^2).
    """

    kind = "ar1"

    def __init__(self, name: str, n: int, replicates: int = 1):
        self.name = name
        self.n = n
        self.replicates = replicates
        self.size = n * replicates
        self.hypers = (f"{name}.log_var", f"{name}.rho")
        self.constraint = None
        self.rank = self.size

    def precision(self, h):
        rho = h[self.hypers[1]]
        if not abs(rho) < 1:
            raise ValueError("AR(1) coefficient outside (-1, 1)")
        marg = np.exp(h[self.hypers[0]]) / (1.0 - rho ** 2)
        Q1 = ar1_precision(self.n, rho, marg)
        Q = sp.csr_matrix(sp.block_diag([Q1] * self.replicates)) if self.replicates > 1 else Q1
        return Q, self.replicates * ar1_logdet(self.n, rho, marg)


class SpaceTimeKron:
    """Separable space-time interaction: temporal structure kron SPDE field.

    ``time_kind='rw1'`` uses a unit-innovation random walk in time (one
    sum-over-time constraint per mesh node); ``'ar1'`` a unit-variance AR(1)
    with its own coefficient hyperparameter.
    """

    kind = "kronecker"

    def __init__(self, name: str, mesh: TriangleMesh, n_time: int, time_kind: str = "rw1"):
        if time_kind not in ("rw1", "ar1"):
            raise ModelError(f"unknown temporal structure {time_kind!r}")
        self.name = name
        self.space = SpdeField(name, mesh)
        self.n_time = n_time
        self.time_kind = time_kind
        self.size = n_time * mesh.n_nodes
        ns = mesh.n_nodes
        if time_kind == "rw1":
            if n_time < 2:
                raise ModelError("random-walk interaction needs at least 2 times")
            self.hypers = self.space.hypers
            self.constraint = sp.csr_matrix(sp.kron(np.ones((1, n_time)), sp.identity(ns)))
            self.rank = (n_time - 1) * ns
        else:
            self.hypers = self.space.hypers + (f"{name}.rho",)
            self.constraint = None
            self.rank = self.size

    def precision(self, h):
        Qs = self.space.spatial_precision(h[self.hypers[0]], h[self.hypers[1]])
        ld_s = SparseCholesky(Qs).logdet()
        ns, nt = Qs.shape[0], self.n_time
        if self.time_kind == "rw1":
            Qt, _ = rw1_precision(nt, 1.0)
            return kronecker_precision(Qt, Qs), ns * rw1_log_pdet(nt, 1.0) + (nt - 1) * ld_s
        rho = h[self.hypers[2]]
        if not abs(rho) < 1:
            raise ValueError("AR(1) coefficient outside (-1, 1)")
        Qt = ar1_precision(nt, rho, 1.0)
        return kronecker_precision(Qt, Qs), ns * ar1_logdet(nt, rho, 1.0) + nt * ld_s


def exponential_correlation(a, b, decay):
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1))
    return np.exp(-d * decay)


class DenseGPField:
    """Exponential-correlation GP at fixed ``sites`` replicated over days.

    Time structure ``'iid'`` (independent days) or ``'ar1'`` (site values
    follow a unit-variance AR(1) across days).  Hyperparameters: log
    variance, log decay and, for ``'ar1'``, the AR coefficient.  Layout is
    day-major: index ``t * n_sites + j``.
    """

    kind = "dense_gp"

    def __init__(self, name: str, sites, n_time: int, time_kind: str = "ar1"):
        if time_kind not in ("iid", "ar1"):
            raise ModelError(f"unknown temporal structure {time_kind!r}")
        self.name = name
        self.sites = np.asarray(sites, dtype=float).reshape(-1, 2)
        self.n_sites = len(self.sites)
        self.n_time = n_time
        self.time_kind = time_kind
        self.size = self.n_sites * n_time
        self.hypers = (f"{name}.log_var", f"{name}.log_decay")
        if time_kind == "ar1":
            self.hypers += (f"{name}.rho",)
        self.constraint = None
        self.rank = self.size

    def precision(self, h):
        H = exponential_correlation(self.sites, self.sites, np.exp(h[self.hypers[1]]))
        H = H * np.exp(h[self.hypers[0]])
        L = np.linalg.cholesky(H)
        Linv = np.linalg.solve(L, np.eye(self.n_sites))
        Qs = sp.csr_matrix(Linv.T @ Linv)
        ld_s = -2.0 * np.sum(np.log(np.diag(L)))
        nt = self.n_time
        if self.time_kind == "iid":
            return kronecker_precision(sp.identity(nt), Qs), nt * ld_s
        rho = h[self.hypers[2]]
        if not abs(rho) < 1:
            raise ValueError("AR(1) coefficient outside (-1, 1)")
        Qt = ar1_precision(nt, rho, 1.0)
        return kronecker_precision(Qt, Qs), self.n_sites * ar1_logdet(nt, rho, 1.0) + nt * ld_s


class FixedEffects:
    """Fixed effects with independent N(0, prior_var) priors."""

    kind = "fixed"

    def __init__(self, names, prior_var: float = 1000.0):
        self.name = FIXED
        self.names = tuple(names)
        self.size = len(self.names)
        self.prior_var = prior_var
        self.hypers = ()
        self.constraint = None
        self.rank = self.size

    def index(self, name):
        return self.names.index(name)

    def precision(self, h):
        return sp.identity(self.size, format="csr") / self.prior_var, -self.size * np.log(self.prior_var)


# --------------------------------------------------------------------------
# Hyperparameters
# --------------------------------------------------------------------------

HYPER_PARAMS = ("log_var", "log_sigma", "log_range", "rho", "lambda", "log_decay")


@dataclass(frozen=True)
class Hyper:
    """One hyperparameter on its working (transformed) scale."""

    name: str
    param: str
    init: float
    fixed: bool = False
    bounds: tuple = (None, None)

    def natural(self, value):
        return float(np.exp(value)) if self.param.startswith("log_") else float(value)


@dataclass(frozen=True)
class HyperPrior:
    names: tuple
    spec: PriorSpec


def hyper_log_prior(prior: HyperPrior, hypers: dict, values: dict) -> float:
    """Prior log density on the working scale (includes the Jacobian)."""
    spec = prior.spec
    if spec.kind == "pc_matern_joint":
        ls, lr = (values[n] for n in prior.names)
        return prior_logdensity(spec, (np.exp(lr), np.exp(ls))) + ls + lr
    (name,) = prior.names
    psi = values[name]
    param = hypers[name].param
    if param == "log_var":
        if spec.kind == "loggamma_precision":
            return prior_logdensity(spec, -psi)
        if spec.kind == "pc_sd":
            return prior_logdensity(spec, np.exp(psi / 2)) + psi / 2 - np.log(2.0)
        if spec.kind == "inverse_gamma":
            return prior_logdensity(spec, np.exp(psi)) + psi
    if param == "log_sigma" and spec.kind == "pc_sd":
        return prior_logdensity(spec, np.exp(psi)) + psi
    if spec.kind in ("normal", "fixed"):
        return prior_logdensity(spec, psi)
    raise ModelError(f"prior {spec.kind} not defined for {param} hyperparameter {name}")


# --------------------------------------------------------------------------
# Design
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Term:
    """``scale * matrix @ theta[component]``; ``scale`` names a hyperparameter.

    ``matrix`` may also be a callable ``h -> matrix`` for designs that depend
    on hyperparameters in a non-scalar way (predictive-process weights).
    """

    component: str
    matrix: object
    scale: str | None = None


class LinearPredictor:
    """Linear predictor rows grouped by scaling hyperparameter."""

    def __init__(self, groups: dict, n_rows: int, n_latent: int, dynamic=()):
        self.groups = groups
        self.n_rows = n_rows
        self.n_latent = n_latent
        self.dynamic = list(dynamic)   # (scale, offset, size, fn)

    def _embed(self, M, offset):
        return sp.csr_matrix(sp.hstack([sp.csr_matrix((self.n_rows, offset)), M,
                                        sp.csr_matrix((self.n_rows, self.n_latent - offset - M.shape[1]))]))

    def matrix(self, h: dict) -> sp.csr_matrix:
        out = sp.csr_matrix((self.n_rows, self.n_latent))
        for scale, M in self.groups.items():
            out = out + (M if scale is None else h[scale] * M)
        for scale, off, size, fn in self.dynamic:
            M = self._embed(sp.csr_matrix(fn(h)), off)
            out = out + (M if scale is None else h[scale] * M)
        return sp.csr_matrix(out)

    def evaluate(self, theta, h: dict):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros((self.n_rows,) + theta.shape[1:])
        for scale, M in self.groups.items():
            out += (M @ theta) * (1.0 if scale is None else h[scale])
        for scale, off, size, fn in self.dynamic:
            out += (fn(h) @ theta[off:off + size]) * (1.0 if scale is None else h[scale])
        return out


@dataclass(frozen=True)
class LikelihoodBlock:
    name: str
    rows: ObservationBlock
    noise: str


@dataclass
class BlockDesign:
    """Stacked observations and design for one hyperparameter point."""

    y: np.ndarray
    A: sp.csr_matrix
    noise_var: np.ndarray
    block_index: np.ndarray
    block_names: tuple
    scale_index: np.ndarray = None

    @property
    def observed(self):
        return ~np.isnan(self.y)


@dataclass
class PriorState:
    Q: sp.csr_matrix
    log_pdet: float
    rank: int
    constraint: sp.csr_matrix | None


class ModelSpec:
    """A full latent-Gaussian model: components, likelihood blocks, hypers."""

    def __init__(self, name: str, components, blocks, hypers, priors,
                 row_builders: dict, meta: dict | None = None):
        self.name = name
        self.components = list(components)
        self.blocks = list(blocks)
        self.hypers = {h.name: h for h in hypers}
        self.priors = list(priors)
        self.row_builders = dict(row_builders)
        self.meta = dict(meta or {})
        names = [c.name for c in self.components]
        if len(set(names)) != len(names):
            raise ModelError("duplicate component names")
        self.offsets = {}
        off = 0
        for c in self.components:
            self.offsets[c.name] = off
            off += c.size
        self.n_latent = off
        needed = set()
        for c in self.components:
            needed.update(c.hypers)
        needed.update(b.noise for b in self.blocks)
        missing = needed - set(self.hypers)
        if missing:
            raise ModelError(f"undeclared hyperparameters {sorted(missing)}")
        self._terms = {b.name: self.predictor(b.name, b.rows) for b in self.blocks}
        for b in self.blocks:
            for scale in self._terms[b.name].groups:
                if scale is not None and scale not in self.hypers:
                    raise ModelError(f"undeclared scaling hyperparameter {scale}")
        self._grams = None
        self._constraint = self._build_constraint()

    # -- hyperparameters ----------------------------------------------------
    @property
    def psi_names(self) -> tuple:
        return tuple(n for n, h in self.hypers.items() if not h.fixed)

    @property
    def psi_init(self) -> np.ndarray:
        return np.array([self.hypers[n].init for n in self.psi_names])

    def hyper_values(self, psi) -> dict:
        h = {n: hp.init for n, hp in self.hypers.items() if hp.fixed}
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (len(self.psi_names),):
            raise ModelError(f"psi must have length {len(self.psi_names)}")
        h.update(zip(self.psi_names, psi.tolist()))
        return h

    def bounds(self):
        return [self.hypers[n].bounds for n in self.psi_names]

    def log_prior(self, psi) -> float:
        h = self.hyper_values(psi)
        for n in self.psi_names:
            lo, hi = self.hypers[n].bounds
            if (lo is not None and h[n] <= lo) or (hi is not None and h[n] >= hi):
                return -np.inf
        total = 0.0
        for pr in self.priors:
            if all(self.hypers[n].fixed for n in pr.names):
                continue
            total += hyper_log_prior(pr, self.hypers, h)
        return total

    # -- latent layout --------------------------------------------------------
    def component(self, name):
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def latent_slice(self, name) -> slice:
        c = self.component(name)
        return slice(self.offsets[name], self.offsets[name] + c.size)

    def fixed_index(self, effect: str) -> int:
        return self.offsets[FIXED] + self.component(FIXED).index(effect)

    def _build_constraint(self):
        rows = []
        for c in self.components:
            if c.constraint is None:
                continue
            C = sp.csr_matrix(c.constraint)
            pad = sp.csr_matrix((C.shape[0], self.n_latent))
            pad = sp.hstack([sp.csr_matrix((C.shape[0], self.offsets[c.name])), C,
                             sp.csr_matrix((C.shape[0], self.n_latent - self.offsets[c.name] - c.size))])
            rows.append(pad)
        return sp.csr_matrix(sp.vstack(rows)) if rows else None

    @property
    def constraint(self):
        return self._constraint

    def predictor(self, block_name: str, rows: ObservationBlock) -> LinearPredictor:
        """Linear predictor of ``block_name`` evaluated at arbitrary ``rows``."""
        terms = self.row_builders[block_name](rows)
        groups, dynamic = {}, []
        n = len(rows)
        for t in terms:
            c = self.component(t.component)
            off = self.offsets[c.name]
            if callable(t.matrix):
                dynamic.append((t.scale, off, c.size, t.matrix))
                continue
            M = sp.csr_matrix(t.matrix)
            if M.shape != (n, c.size):
                raise ModelError(f"term on {t.component} has shape {M.shape}")
            full = sp.hstack([sp.csr_matrix((n, off)), M,
                              sp.csr_matrix((n, self.n_latent - off - c.size))])
            groups[t.scale] = groups.get(t.scale, 0) + full
        groups = {k: sp.csr_matrix(v) for k, v in groups.items()}
        return LinearPredictor(groups, n, self.n_latent, dynamic)

    def block(self, name) -> LikelihoodBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def with_block_values(self, name: str, values) -> "ModelSpec":
        blocks = [replace(b, rows=b.rows.with_values(values)) if b.name == name else b
                  for b in self.blocks]
        return ModelSpec(self.name, self.components, blocks, self.hypers.values(),
                         self.priors, self.row_builders, self.meta)

    def with_hypers(self, **changes) -> "ModelSpec":
        """Copy with some hyperparameters replaced (e.g. fixed values)."""
        hypers = [changes.get(n, h) for n, h in self.hypers.items()]
        return ModelSpec(self.name, self.components, self.blocks, hypers,
                         self.priors, self.row_builders, self.meta)

    # -- prior -----------------------------------------------------------------
    def prior_state(self, h: dict) -> PriorState:
        mats, ld, rank = [], 0.0, 0
        for c in self.components:
            Q, lc = c.precision(h)
            mats.append(Q)
            ld += lc
            rank += c.rank
        return PriorState(sp.csr_matrix(sp.block_diag(mats)), ld, rank, self._constraint)

    # -- fast Gaussian system ----------------------------------------------------
    def _gram_cache(self):
        if self._grams is None:
            cache = []
            for b in self.blocks:
                lp = self._terms[b.name]
                obs = b.rows.observed
                yo = np.asarray(b.rows.values, dtype=float)[obs]
                if lp.dynamic:
                    cache.append((b, lp, obs, None, None, yo))
                    continue
                mats = {k: M[obs] for k, M in lp.groups.items()}
                keys = list(mats)
                grams = {}
                for i, a in enumerate(keys):
                    for bkey in keys[i:]:
                        G = mats[a].T @ mats[bkey]
                        if a != bkey:
                            G = G + G.T
                        grams[(a, bkey)] = sp.csr_matrix(G)
                rhs = {k: mats[k].T @ yo for k in keys}
                cache.append((b, lp, obs, grams, rhs, yo))
            self._grams = cache
        return self._grams

    def gaussian_system(self, h: dict):
        """Return ``(A'WA, A'Wy)`` over the observed rows at hyperparameters ``h``.

        Static blocks reuse cached cross-products of their scale groups, so
        only scalar reweighting happens per evaluation.
        """
        Q = sp.csr_matrix((self.n_latent, self.n_latent))
        rhs = np.zeros(self.n_latent)
        s = lambda k: 1.0 if k is None else h[k]
        for b, lp, obs, grams, bvec, yo in self._gram_cache():
            w = 1.0 / np.exp(h[b.noise])
            if grams is None:
                A = lp.matrix(h)[obs]
                Q = Q + w * (A.T @ A)
                rhs += w * (A.T @ yo)
                continue
            for (a, c), G in grams.items():
                Q = Q + (w * s(a) * s(c)) * G
            for k, v in bvec.items():
                rhs += (w * s(k)) * v
        return sp.csr_matrix(Q), rhs

    def log_likelihood(self, theta, h: dict) -> float:
        total = 0.0
        for b, lp, obs, grams, bvec, yo in self._gram_cache():
            v = np.exp(h[b.noise])
            r = yo - lp.evaluate(theta, h)[obs]
            total += -0.5 * len(yo) * np.log(2 * np.pi * v) - 0.5 * (r @ r) / v
        return float(total)

    def n_observed(self) -> int:
        return int(sum(b.rows.observed.sum() for b in self.blocks))

    # -- identity ------------------------------------------------------------------
    def spec_hash(self) -> str:
        hsh = hashlib.sha256(self.name.encode())
        for c in self.components:
            hsh.update(f"{c.name}:{c.kind}:{c.size};".encode())
        for b in self.blocks:
            hsh.update(b.name.encode())
            for arr in (b.rows.x, b.rows.y, b.rows.time, b.rows.values):
                hsh.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            for key in sorted(b.rows.covariates):
                hsh.update(key.encode())
                hsh.update(np.ascontiguousarray(b.rows.covariates[key], dtype="<f8").tobytes())
        for n in self.psi_names:
            hsh.update(n.encode())
        return hsh.hexdigest()


def assemble_design(spec: ModelSpec, psi) -> tuple[BlockDesign, PriorState]:
    """Explicit stacked design A(psi) and block-diagonal prior precision."""
    h = spec.hyper_values(psi)
    ys, As, nv, bi, si = [], [], [], [], []
    for i, b in enumerate(spec.blocks):
        lp = spec._terms[b.name]
        ys.append(np.asarray(b.rows.values, dtype=float))
        As.append(lp.matrix(h))
        nv.append(np.full(len(b.rows), np.exp(h[b.noise])))
        bi.append(np.full(len(b.rows), i))
    design = BlockDesign(np.concatenate(ys), sp.csr_matrix(sp.vstack(As)),
                         np.concatenate(nv), np.concatenate(bi),
                         tuple(b.name for b in spec.blocks))
    return design, spec.prior_state(h)


def mask_validation(spec: ModelSpec, fold_assignment: dict, fold: int,
                    block: str = "monitors") -> ModelSpec:
    """Copy of ``spec`` with the ``block`` rows of monitors in ``fold`` set missing."""
    folds = set(fold_assignment.values())
    if fold not in folds and len(folds) > 0 and fold not in range(1, max(folds) + 1):
        raise ModelError(f"unknown fold id {fold}")
    rows = spec.block(block).rows
    if rows.monitor_id is None:
        raise ModelError("block has no monitor ids")
    ids = set(map(str, rows.monitor_id))
    missing = ids - set(map(str, fold_assignment))
    if missing:
        raise ModelError(f"monitors without a fold: {sorted(missing)[:5]}")
    held = np.array([fold_assignment[str(m)] == fold for m in rows.monitor_id], dtype=bool)
    values = np.asarray(rows.values, dtype=float).copy()
    values[held] = np.nan
    out = spec.with_block_values(block, values)
    out.meta = dict(spec.meta, masked_rows=np.flatnonzero(held), masked_fold=fold)
    return out


RowBuilder = Callable[[ObservationBlock], list]
