"""Synthetic misaligned datasets and brute-force dense Gaussian oracles."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from shapely.geometry import box

from .latent import params_from_range_sigma
from .linalg import SparseCholesky
from .mesh import TriangleMesh, build_mesh, fem_matrices, projector, spde_precision
from .model import SITETYPES, ModelSpec, ObservationBlock, assemble_design

DENSE_CAP = 500


@dataclass
class JointTruth:
    """Generating parameters of the joint model (natural scale)."""

    alpha_pcm: float = 2.0
    alpha_aqum: float = 2.5
    alpha_mon: float = 2.4
    beta_URB: float = 0.15
    beta_RKS: float = 0.35
    var_eps_pcm: float = 0.01
    var_eps_aqum: float = 0.02
    var_eps_mon: float = 0.02
    z1_sigma: float = 0.6
    z1_range: float = 35.0
    z2_var: float = 0.02
    z3_var: float = 0.01
    z3_rho: float = 0.57
    lambda_12: float = 1.1
    lambda_13: float = 1.3
    lambda_23: float = 0.9

    def to_dict(self):
        return asdict(self)


@dataclass
class Geometry:
    """Domain, gridded-source cell centres and monitor sites (km)."""

    domain: tuple = (0.0, 0.0, 100.0, 100.0)
    pcm_cells: np.ndarray = None
    aqum_cells: np.ndarray = None
    monitors: np.ndarray = None
    sitetypes: np.ndarray = None
    monitor_ids: np.ndarray = None
    pcm_shape: tuple = ()
    aqum_shape: tuple = ()

    @property
    def boundary(self):
        return box(*self.domain)


def cell_centres(domain, n):
    x0, y0, x1, y1 = domain
    xs = x0 + (np.arange(n) + 0.5) * (x1 - x0) / n
    ys = y0 + (np.arange(n) + 0.5) * (y1 - y0) / n
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def default_geometry(seed: int = 0, domain=(0.0, 0.0, 100.0, 100.0), n_pcm: int = 20,
                     n_aqum: int = 5, n_urban: int = 30, n_rural: int = 10,
                     urban_centre=(55.0, 50.0), urban_spread: float = 12.0) -> Geometry:
    """Gridded sources plus clustered urban/roadside and scattered rural monitors."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    x0, y0, x1, y1 = domain
    pad = 2.0
    urb = []
    while len(urb) < n_urban:
        p = rng.normal(urban_centre, urban_spread)
        if x0 + pad < p[0] < x1 - pad and y0 + pad < p[1] < y1 - pad:
            urb.append(p)
    rur = np.column_stack([rng.uniform(x0 + pad, x1 - pad, n_rural),
                           rng.uniform(y0 + pad, y1 - pad, n_rural)])
    sites = np.vstack([np.array(urb), rur])
    n_rks = n_urban // 2
    types = np.array(["RKS"] * n_rks + ["URB"] * (n_urban - n_rks) + ["RUR"] * n_rural)
    ids = np.array([f"M{i + 1:03d}" for i in range(len(sites))])
    return Geometry(tuple(domain), cell_centres(domain, n_pcm), cell_centres(domain, n_aqum),
                    sites, types, ids, (n_pcm, n_pcm), (n_aqum, n_aqum))


def default_mesh(geom: Geometry, max_edge_inner: float = 8.0, max_edge_outer: float = 20.0,
                 cutoff: float = 1.0) -> TriangleMesh:
    return build_mesh(geom.monitors, geom.boundary, max_edge_inner=max_edge_inner,
                      max_edge_outer=max_edge_outer, cutoff=cutoff)


@dataclass
class SimulatedData:
    pcm: ObservationBlock
    aqum: ObservationBlock
    monitors: ObservationBlock
    truth: JointTruth
    latent: dict = field(default_factory=dict)


def sample_spde(mesh: TriangleMesh, sigma, rng_range, rng):
    C, G = fem_matrices(mesh)
    lt, lk = params_from_range_sigma(rng_range, sigma)
    Q = spde_precision(C, G, lt, lk)
    return SparseCholesky(Q).sqrt_solve(rng.standard_normal(mesh.n_nodes))


def sample_rw1(n, var, rng):
    x = np.concatenate([[0.0], np.cumsum(rng.normal(0.0, np.sqrt(var), n - 1))])
    return x - x.mean()


def sample_ar1(n, innov_var, rho, rng):
    x = np.empty(n)
    x[0] = rng.normal(0.0, np.sqrt(innov_var / (1 - rho ** 2)))
    for t in range(1, n):
        x[t] = rho * x[t - 1] + rng.normal(0.0, np.sqrt(innov_var))
    return x


def simulate_joint(truth: JointTruth, mesh: TriangleMesh, geom: Geometry, n_days: int = 60,
                   n_years: int = 2, seed: int = 0) -> SimulatedData:
    """Forward-simulate the three observation blocks from the joint model."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
    z1 = sample_spde(mesh, truth.z1_sigma, truth.z1_range, rng)
    z2 = sample_rw1(n_days, truth.z2_var, rng)
    z3 = np.vstack([sample_ar1(n_days, truth.z3_var, truth.z3_rho, rng) for _ in SITETYPES])

    P = projector(mesh, geom.pcm_cells).require_valid()
    z1_pcm = P @ z1
    rows = np.repeat(np.arange(len(geom.pcm_cells)), n_years)
    years = np.tile(np.arange(n_years), len(geom.pcm_cells))
    y1 = truth.alpha_pcm + z1_pcm[rows] + rng.normal(0, np.sqrt(truth.var_eps_pcm), len(rows))
    pcm = ObservationBlock("pcm", geom.pcm_cells[rows, 0], geom.pcm_cells[rows, 1], years, y1,
                           temporal_resolution="annual")

    A = projector(mesh, geom.aqum_cells).require_valid() @ z1
    cells = np.tile(np.arange(len(geom.aqum_cells)), n_days)
    days = np.repeat(np.arange(n_days), len(geom.aqum_cells))
    y2 = (truth.alpha_aqum + truth.lambda_12 * A[cells] + z2[days]
          + rng.normal(0, np.sqrt(truth.var_eps_aqum), len(cells)))
    aqum = ObservationBlock("aqum", geom.aqum_cells[cells, 0], geom.aqum_cells[cells, 1], days, y2)

    M = projector(mesh, geom.monitors).require_valid() @ z1
    sites = np.tile(np.arange(len(geom.monitors)), n_days)
    days = np.repeat(np.arange(n_days), len(geom.monitors))
    codes = np.array([SITETYPES.index(s) for s in geom.sitetypes])[sites]
    beta = np.array([0.0, truth.beta_URB, truth.beta_RKS])
    y3 = (truth.alpha_mon + beta[codes] + truth.lambda_13 * M[sites] + truth.lambda_23 * z2[days]
          + z3[codes, days] + rng.normal(0, np.sqrt(truth.var_eps_mon), len(sites)))
    mon = ObservationBlock("monitors", geom.monitors[sites, 0], geom.monitors[sites, 1], days, y3,
                           sitetype=geom.sitetypes[sites], monitor_id=geom.monitor_ids[sites])
    return SimulatedData(pcm, aqum, mon, truth, {"z1": z1, "z2": z2, "z3": z3})


def truth_psi(spec: ModelSpec, truth: JointTruth) -> np.ndarray:
    """Map a :class:`JointTruth` onto the working hyperparameter vector of ``spec``."""
    t = truth
    lookup = {"eps_pcm.log_var": np.log(t.var_eps_pcm), "eps_aqum.log_var": np.log(t.var_eps_aqum),
              "eps_mon.log_var": np.log(t.var_eps_mon), "z1.log_sigma": np.log(t.z1_sigma),
              "z1.log_range": np.log(t.z1_range), "z2.log_var": np.log(t.z2_var),
              "z3.log_var": np.log(t.z3_var), "z3.rho": t.z3_rho, "lambda_12": t.lambda_12,
              "lambda_13": t.lambda_13, "lambda_23": t.lambda_23}
    return np.array([lookup[n] for n in spec.psi_names])


# --------------------------------------------------------------------------
# Dense oracle
# --------------------------------------------------------------------------

@dataclass
class DenseOracle:
    mean: np.ndarray
    cov: np.ndarray
    log_evidence: float


def dense_prior_covariance(spec: ModelSpec, h: dict) -> np.ndarray:
    """Block-diagonal prior covariance; intrinsic blocks use the pseudo-inverse."""
    blocks = []
    for c in spec.components:
        Q = c.precision(h)[0]
        Q = Q.toarray() if sp.issparse(Q) else np.asarray(Q)
        blocks.append(np.linalg.pinv(Q, hermitian=True) if c.constraint is not None
                      else np.linalg.inv(Q))
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n))
    o = 0
    for b in blocks:
        out[o:o + len(b), o:o + len(b)] = b
        o += len(b)
    return 0.5 * (out + out.T)


def dense_oracle_posterior(spec: ModelSpec, psi) -> DenseOracle:
    """Covariance-form Gaussian conditioning and evidence for small models."""
    if spec.n_latent > DENSE_CAP:
        raise ValueError(f"latent dimension {spec.n_latent} exceeds the dense cap {DENSE_CAP}")
    design, _ = assemble_design(spec, psi)
    h = spec.hyper_values(psi)
    S = dense_prior_covariance(spec, h)
    obs = design.observed
    A = design.A.toarray()[obs]
    y = design.y[obs]
    D = np.diag(design.noise_var[obs])
    if len(y) == 0:
        return DenseOracle(np.zeros(spec.n_latent), S, 0.0)
    K = A @ S @ A.T + D
    Kc = np.linalg.cholesky(K)
    alpha = np.linalg.solve(Kc.T, np.linalg.solve(Kc, y))
    SA = S @ A.T
    mean = SA @ alpha
    W = np.linalg.solve(Kc, SA.T)
    cov = S - W.T @ W
    logev = -0.5 * len(y) * np.log(2 * np.pi) - np.sum(np.log(np.diag(Kc))) - 0.5 * y @ alpha
    return DenseOracle(mean, 0.5 * (cov + cov.T), float(logev))


def synthetic_roads_and_landcover(geom: Geometry, seed: int = 0, urban_radius_km: float = 15.0,
                                  cell_m: float = 1000.0):
    """Road network (metres) and urban/rural raster consistent with ``geom``.

    Every roadside monitor gets a short road passing 1-8 m (minor) or
    15-45 m (major) from it; a few long major roads cross the domain.  The
    land cover is urban inside a disc around the monitor cluster centre.
    """
    from .sitetype import LandCoverRaster, RoadSet
    rng = np.random.default_rng(np.random.SeedSequence([seed, 404]))
    x0, y0, x1, y1 = (v * 1000.0 for v in geom.domain)
    lines, classes = [], []
    for k in range(4):
        if k % 2 == 0:
            yy = rng.uniform(y0, y1)
            lines.append(np.array([[x0, yy], [x1, yy + rng.uniform(-5000, 5000)]]))
        else:
            xx = rng.uniform(x0, x1)
            lines.append(np.array([[xx, y0], [xx + rng.uniform(-5000, 5000), y1]]))
        classes.append("major")
    for p, st in zip(geom.monitors * 1000.0, geom.sitetypes):
        if st != "RKS":
            continue
        theta = rng.uniform(0, np.pi)
        u = np.array([np.cos(theta), np.sin(theta)])
        nrm = np.array([-u[1], u[0]])
        major = rng.uniform() < 0.4
        off = rng.uniform(15, 45) if major else rng.uniform(1, 8)
        c = p + off * nrm
        lines.append(np.array([c - 300 * u, c + 300 * u]))
        classes.append("major" if major else "minor")
    centre = np.mean(geom.monitors[geom.sitetypes != "RUR"], axis=0) * 1000.0
    nx, ny = int(np.ceil((x1 - x0) / cell_m)), int(np.ceil((y1 - y0) / cell_m))
    cx = x0 + (np.arange(nx) + 0.5) * cell_m
    cy = y0 + (np.arange(ny) + 0.5) * cell_m
    gx, gy = np.meshgrid(cx, cy)
    urban = np.hypot(gx - centre[0], gy - centre[1]) <= urban_radius_km * 1000.0
    codes = np.where(urban, 1, 2)
    raster = LandCoverRaster(x0, y0, cell_m, codes, {1: "urban", 2: "rural"})
    ids = tuple(f"R{i + 1:03d}" for i in range(len(lines)))
    return RoadSet(tuple(lines), tuple(classes), ids), raster
