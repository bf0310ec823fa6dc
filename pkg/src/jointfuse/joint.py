"""Builders for the joint fusion model and the separate per-source models."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .latent import PriorSpec
from .mesh import TriangleMesh, projector
from .model import (FIXED, SITETYPES, AR1Replicated, FixedEffects, Hyper, HyperPrior,
                    LikelihoodBlock, ModelError, ModelSpec, ObservationBlock, RandomWalk1,
                    SpaceTimeKron, SpdeField, Term)

JOINT_VARIANTS = ("joint", "joint-pcm-only", "joint-aqum-only")
LAMBDA_PRIORS = {"lambda_12": (1.1, 100.0), "lambda_13": (1.3, 100.0), "lambda_23": (0.9, 100.0)}


def project_rows(mesh: TriangleMesh, rows: ObservationBlock) -> sp.csr_matrix:
    """Projector for block rows, computed once per distinct location."""
    locs = rows.locations
    uniq, inv = np.unique(locs, axis=0, return_inverse=True)
    P = projector(mesh, uniq).require_valid()
    return sp.csr_matrix(P[inv.ravel()])


def selector(index, size: int) -> sp.csr_matrix:
    index = np.asarray(index, dtype=np.int64)
    if len(index) and (index.min() < 0 or index.max() >= size):
        raise ModelError("time index outside the model calendar")
    return sp.csr_matrix((np.ones(len(index)), (np.arange(len(index)), index)),
                         shape=(len(index), size))


class Calendar:
    """Consecutive day indexing shared by the daily latent blocks."""

    def __init__(self, first: int, n: int):
        self.first = int(first)
        self.n = int(n)

    @classmethod
    def from_blocks(cls, *blocks):
        days = np.concatenate([np.asarray(b.time) for b in blocks if b is not None])
        if len(days) == 0:
            raise ModelError("no daily rows to define the calendar")
        return cls(days.min(), days.max() - days.min() + 1)

    def index(self, days):
        return np.asarray(days, dtype=np.int64) - self.first


def _fixed_columns(fe: FixedEffects, rows, intercept, sitetype_effects=()):
    n = len(rows)
    M = sp.lil_matrix((n, fe.size))
    M[:, fe.index(intercept)] = 1.0
    if sitetype_effects:
        codes = rows.sitetype_codes()
        for k, st in enumerate(SITETYPES):
            name = f"beta_{st}"
            if name in sitetype_effects:
                M[np.flatnonzero(codes == k), fe.index(name)] = 1.0
    return M.tocsr()


def _safe_var(v, floor=1e-4):
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    return max(float(np.var(v)) if len(v) > 1 else 1.0, floor)


def default_noise_prior():
    return PriorSpec("loggamma_precision", {"shape": 1.0, "rate": 5e-5})


def matern_prior(domain_size):
    return PriorSpec("pc_matern_joint", {"range0": domain_size / 5.0, "p_range": 0.95,
                                         "sigma0": 100.0, "p_sigma": 0.5})


def _overrides(priors, prior_list):
    """Apply user prior overrides {hyper name: prior dict}."""
    if not priors:
        return prior_list
    out = []
    for pr in prior_list:
        key = pr.names[0] if len(pr.names) == 1 else pr.names[0].split(".")[0]
        if key in priors:
            d = dict(priors[key])
            kind = d.pop("kind")
            pr = HyperPrior(pr.names, PriorSpec(kind, d))
        out.append(pr)
    unknown = set(priors) - {p.names[0] if len(p.names) == 1 else p.names[0].split(".")[0]
                             for p in prior_list}
    if unknown:
        raise ModelError(f"priors given for unknown hyperparameters {sorted(unknown)}")
    return out


def domain_extent(mesh: TriangleMesh) -> float:
    bx = np.asarray(mesh.boundary)
    return float(max(np.ptp(bx[:, 0]), np.ptp(bx[:, 1])))


def build_joint_model(mesh: TriangleMesh, pcm: ObservationBlock | None,
                      aqum: ObservationBlock | None, monitors: ObservationBlock,
                      variant: str = "joint", lambdas: str = "free",
                      priors: dict | None = None, fixed_prior_var: float = 1000.0,
                      domain_size: float | None = None) -> ModelSpec:
    """Three-likelihood joint model (or its one-covariate reductions).

    ``variant``: ``joint`` uses PCM and AQUM, ``joint-pcm-only`` drops the
    AQUM block and z2, ``joint-aqum-only`` drops PCM (z1 then enters AQUM
    unscaled).  ``lambdas='fixed'`` pins every scaling coefficient at 1.
    """
    if variant not in JOINT_VARIANTS:
        raise ModelError(f"unknown joint variant {variant!r}")
    use_pcm = variant in ("joint", "joint-pcm-only")
    use_aqum = variant in ("joint", "joint-aqum-only")
    if use_pcm and pcm is None or use_aqum and aqum is None:
        raise ModelError(f"variant {variant} needs the corresponding data blocks")
    if monitors.sitetype is None:
        raise ModelError("monitor rows need a site type")
    size = domain_size or domain_extent(mesh)
    cal = Calendar.from_blocks(aqum if use_aqum else None, monitors)
    T = cal.n

    z1 = SpdeField("z1", mesh)
    z3 = AR1Replicated("z3", T, len(SITETYPES))
    effects = []
    if use_pcm:
        effects.append("alpha_pcm")
    if use_aqum:
        effects.append("alpha_aqum")
    effects += ["alpha_mon", "beta_URB", "beta_RKS"]
    fe = FixedEffects(effects, fixed_prior_var)
    comps = [z1]
    z2 = None
    if use_aqum:
        z2 = RandomWalk1("z2", T)
        comps.append(z2)
    comps += [z3, fe]

    blocks, builders, hypers, hp = [], {}, [], []
    ref = monitors.values
    if use_pcm:
        blocks.append(LikelihoodBlock("pcm", pcm, "eps_pcm.log_var"))
        hypers.append(Hyper("eps_pcm.log_var", "log_var", np.log(0.2 * _safe_var(pcm.values))))
        hp.append(HyperPrior(("eps_pcm.log_var",), default_noise_prior()))
        builders["pcm"] = lambda r: [Term(FIXED, _fixed_columns(fe, r, "alpha_pcm")),
                                     Term("z1", project_rows(mesh, r))]
        ref = pcm.values
    if use_aqum:
        blocks.append(LikelihoodBlock("aqum", aqum, "eps_aqum.log_var"))
        hypers.append(Hyper("eps_aqum.log_var", "log_var", np.log(0.2 * _safe_var(aqum.values))))
        hp.append(HyperPrior(("eps_aqum.log_var",), default_noise_prior()))
        s12 = "lambda_12" if use_pcm else None

        def aqum_rows(r, s12=s12):
            return [Term(FIXED, _fixed_columns(fe, r, "alpha_aqum")),
                    Term("z1", project_rows(mesh, r), s12),
                    Term("z2", selector(cal.index(r.time), T))]
        builders["aqum"] = aqum_rows
        if not use_pcm:
            ref = aqum.values
    blocks.append(LikelihoodBlock("monitors", monitors, "eps_mon.log_var"))
    hypers.append(Hyper("eps_mon.log_var", "log_var", np.log(0.2 * _safe_var(monitors.values))))
    hp.append(HyperPrior(("eps_mon.log_var",), default_noise_prior()))

    def mon_rows(r):
        terms = [Term(FIXED, _fixed_columns(fe, r, "alpha_mon", ("beta_URB", "beta_RKS"))),
                 Term("z1", project_rows(mesh, r), "lambda_13")]
        t = cal.index(r.time)
        if use_aqum:
            terms.append(Term("z2", selector(t, T), "lambda_23"))
        terms.append(Term("z3", selector(r.sitetype_codes() * T + t, z3.size)))
        return terms
    builders["monitors"] = mon_rows

    sd_ref = np.sqrt(_safe_var(ref))
    hypers += [Hyper("z1.log_sigma", "log_sigma", np.log(sd_ref)),
               Hyper("z1.log_range", "log_range", np.log(size / 3.0))]
    hp.append(HyperPrior(("z1.log_sigma", "z1.log_range"), matern_prior(size)))
    if use_aqum:
        daily = np.array([np.nanmean(aqum.values[aqum.time == d]) for d in np.unique(aqum.time)])
        v2 = _safe_var(np.diff(daily)) if len(daily) > 2 else 0.1
        hypers.append(Hyper("z2.log_var", "log_var", np.log(v2)))
        hp.append(HyperPrior(("z2.log_var",), PriorSpec("pc_sd", {
            "u": float(np.sqrt(_safe_var(aqum.values))), "alpha": 0.01})))
    hypers += [Hyper("z3.log_var", "log_var", np.log(0.05 * _safe_var(monitors.values))),
               Hyper("z3.rho", "rho", 0.3, bounds=(-0.99, 0.99))]
    hp += [HyperPrior(("z3.log_var",), default_noise_prior()),
           HyperPrior(("z3.rho",), PriorSpec("normal", {"mean": 0.3, "var": 0.5,
                                                        "lower": -1.0, "upper": 1.0}))]
    fixed_lam = lambdas == "fixed"
    links = ["lambda_13"]
    if use_pcm and use_aqum:
        links = ["lambda_12", "lambda_13", "lambda_23"]
    elif use_aqum:
        links = ["lambda_13", "lambda_23"]
    for name in links:
        m, v = LAMBDA_PRIORS[name]
        hypers.append(Hyper(name, "lambda", 1.0 if fixed_lam else m, fixed=fixed_lam))
        hp.append(HyperPrior((name,), PriorSpec("normal", {"mean": m, "var": v})))
    hp = _overrides(priors, hp)
    return ModelSpec(variant, comps, blocks, hypers, hp, builders,
                     {"calendar": (cal.first, cal.n), "variant": variant})


SEPARATE_VARIANTS = ("i", "ii", "iii")


def build_separate_model(source: str, variant: str, block: ObservationBlock,
                         mesh: TriangleMesh, priors: dict | None = None,
                         fixed_prior_var: float = 1000.0,
                         domain_size: float | None = None) -> ModelSpec:
    """Single-source model with spatial/temporal/interaction structure.

    PCM: (i) alpha + z1(s); (ii) alpha + z1(s) + z2(year); (iii) alpha +
    z(s, year) separable interaction.  AQUM: (i) alpha + z2(t); (ii) alpha +
    z1(s) + z2(t); (iii) alpha + z(s, t).  Interactions use a random walk in
    time kron the SPDE field.
    """
    if source not in ("pcm", "aqum"):
        raise ModelError(f"unknown source {source!r}")
    if variant not in SEPARATE_VARIANTS:
        raise ModelError(f"unknown separate-model variant {variant!r}")
    size = domain_size or domain_extent(mesh)
    cal = Calendar.from_blocks(block)
    T = cal.n
    use_space = not (source == "aqum" and variant == "i")
    use_time = variant == "ii" or (source == "aqum" and variant == "i")
    inter = variant == "iii"
    if (use_time or inter) and T < 2:
        raise ModelError("temporal structure needs at least 2 time points")
    fe = FixedEffects(["alpha"], fixed_prior_var)
    comps, hypers, hp = [], [], []
    sd = np.sqrt(_safe_var(block.values))
    hypers.append(Hyper("eps.log_var", "log_var", np.log(0.2 * sd ** 2)))
    hp.append(HyperPrior(("eps.log_var",), default_noise_prior()))
    if inter:
        comps.append(SpaceTimeKron("z", mesh, T, "rw1"))
        hypers += [Hyper("z.log_sigma", "log_sigma", np.log(sd)),
                   Hyper("z.log_range", "log_range", np.log(size / 3.0))]
        hp.append(HyperPrior(("z.log_sigma", "z.log_range"), matern_prior(size)))
    else:
        if use_space:
            comps.append(SpdeField("z1", mesh))
            hypers += [Hyper("z1.log_sigma", "log_sigma", np.log(sd)),
                       Hyper("z1.log_range", "log_range", np.log(size / 3.0))]
            hp.append(HyperPrior(("z1.log_sigma", "z1.log_range"), matern_prior(size)))
        if use_time:
            comps.append(RandomWalk1("z2", T))
            hypers.append(Hyper("z2.log_var", "log_var", np.log(0.1 * sd ** 2)))
            hp.append(HyperPrior(("z2.log_var",), PriorSpec("pc_sd", {"u": float(sd), "alpha": 0.01})))
    comps.append(fe)

    def rows(r):
        terms = [Term(FIXED, _fixed_columns(fe, r, "alpha"))]
        t = cal.index(r.time)
        if inter:
            P = project_rows(mesh, r)
            ns = mesh.n_nodes
            P = P.tocoo()
            terms.append(Term("z", sp.csr_matrix((P.data, (P.row, t[P.row] * ns + P.col)),
                                                 shape=(len(r), T * ns))))
        else:
            if use_space:
                terms.append(Term("z1", project_rows(mesh, r)))
            if use_time:
                terms.append(Term("z2", selector(t, T)))
        return terms

    hp = _overrides(priors, hp)
    return ModelSpec(f"separate-{source}-{variant}", comps,
                     [LikelihoodBlock(source, block, "eps.log_var")], hypers, hp,
                     {source: rows}, {"calendar": (cal.first, cal.n), "source": source,
                                      "variant": variant})
