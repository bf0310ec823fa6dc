"""Model menu: build any supported model from data, mesh and configuration."""
from __future__ import annotations

import dataclasses
import os

import numpy as np

from . import io
from .baselines import (align_bilinear, build_gpp_model, build_linear_fusion_model,
                        kriging_align, knot_grid)
from .inference import fit as run_fit, fixed_effect_summary, hyper_summary, dic
from .joint import JOINT_VARIANTS, build_joint_model, build_separate_model
from .mesh import TriangleMesh, build_mesh, read_mesh, write_mesh
from .model import ModelError, ModelSpec

MODELS = JOINT_VARIANTS + ("linear-fusion", "gpp", "gpp-stationary",
                           "separate-i", "separate-ii", "separate-iii")
MONITOR_MODELS = JOINT_VARIANTS + ("linear-fusion", "gpp", "gpp-stationary")
ALIGNMENTS = ("bilinear", "kriging")
MESH_FILE = "mesh.txt"
OBS_FILE = "observations.csv"


def load_data(data_dir) -> dict:
    path = os.path.join(data_dir, OBS_FILE)
    if not os.path.exists(path):
        raise io.DataError(f"no {OBS_FILE} in {data_dir}")
    return io.read_observations(path)


def mesh_for(cfg: dict, data: dict, data_dir=None) -> TriangleMesh:
    """The dataset's stored mesh if present, else one built from the config."""
    if data_dir is not None and os.path.exists(os.path.join(data_dir, MESH_FILE)):
        return read_mesh(os.path.join(data_dir, MESH_FILE))
    return build_config_mesh(cfg, data["monitors"].locations)


def build_config_mesh(cfg: dict, locations) -> TriangleMesh:
    x0, y0, x1, y1 = io.get(cfg, "domain")
    boundary = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    uniq = np.unique(np.asarray(locations, dtype=float), axis=0)
    return build_mesh(uniq, boundary, max_edge_inner=io.get(cfg, "mesh.max_edge_inner"),
                      max_edge_outer=io.get(cfg, "mesh.max_edge_outer"),
                      cutoff=io.get(cfg, "mesh.cutoff"))


def save_mesh(mesh, data_dir):
    write_mesh(mesh, os.path.join(data_dir, MESH_FILE))


def _domain_size(cfg):
    x0, y0, x1, y1 = io.get(cfg, "domain")
    return max(x1 - x0, y1 - y0)


def _model_kwargs(cfg):
    return {"priors": io.get(cfg, "model.priors") or None,
            "fixed_prior_var": float(io.get(cfg, "model.fixed_prior_var")),
            "domain_size": _domain_size(cfg)}


def aligned_covariates(cfg: dict, data: dict, mesh: TriangleMesh, method: str,
                       strategy: str | None = None) -> dict:
    """X1 (AQUM) and X2 (PCM) at the monitor rows by bilinear or kriging alignment."""
    mon = data["monitors"]
    if "pcm" not in data or "aqum" not in data:
        raise io.DataError("alignment needs both PCM and AQUM rows")
    if method == "bilinear":
        return {"X1": align_bilinear(data["aqum"], mon, temporal=True),
                "X2": align_bilinear(data["pcm"], mon, temporal=False)}
    if method != "kriging":
        raise io.ConfigError(f"unknown alignment method {method!r} (key 'alignment')")
    strategy = strategy or io.get(cfg, "inference.strategy")
    kw = _model_kwargs(cfg)
    fp = run_fit(build_separate_model("pcm", "i", data["pcm"], mesh, **kw), strategy=strategy)
    fa = run_fit(build_separate_model("aqum", "ii", data["aqum"], mesh, **kw), strategy=strategy)
    return {"X1": kriging_align(fa, "aqum", dataclasses.replace(mon, block_id="aqum")),
            "X2": kriging_align(fp, "pcm", dataclasses.replace(mon, block_id="pcm"))}


def build_model_spec(name: str, cfg: dict, data: dict, mesh: TriangleMesh,
                     source: str = "pcm", covariates: dict | None = None) -> ModelSpec:
    """Model ``name`` from the menu :data:`MODELS`.

    ``covariates`` (X1, X2 at the monitor rows) is required by the
    linear-fusion and predictive-process models; see :func:`aligned_covariates`.
    """
    if name not in MODELS:
        raise ModelError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
    kw = _model_kwargs(cfg)
    if name in JOINT_VARIANTS:
        lam = io.get(cfg, "model.lambdas")
        if lam not in ("free", "fixed"):
            raise io.ConfigError("config key 'model.lambdas' must be 'free' or 'fixed'")
        return build_joint_model(mesh, data.get("pcm"), data.get("aqum"), data["monitors"],
                                 variant=name, lambdas=lam, **kw)
    if name.startswith("separate-"):
        if source not in data:
            raise io.DataError(f"no {source} rows for a separate model")
        return build_separate_model(source, name.split("-")[1], data[source], mesh, **kw)
    if covariates is None:
        raise ModelError(f"model {name} needs aligned covariates")
    mon = dataclasses.replace(data["monitors"], covariates=dict(covariates))
    if name == "linear-fusion":
        return build_linear_fusion_model(mesh, mon, ("X1", "X2"), **kw)
    gcov = tuple(io.get(cfg, "gpp.covariates"))
    time_kind = io.get(cfg, "gpp.time")
    m = int(io.get(cfg, "gpp.knots_per_side"))
    domain = tuple(io.get(cfg, "domain"))
    return build_gpp_model(mon, knot_grid(domain, m), gcov, stationary=name == "gpp-stationary",
                           time_kind=time_kind, priors=kw["priors"],
                           fixed_prior_var=kw["fixed_prior_var"], domain=domain)


def fit_summary(fit, n_dic_samples: int = 200, seed: int = 0) -> dict:
    """JSON-ready posterior summary (hyperparameters, fixed effects, DIC)."""
    as_dict = lambda m: {"mean": m.mean, "sd": m.sd, "q025": m.q025, "q50": m.q50, "q975": m.q975}
    return {"model": fit.spec.name,
            "converged": bool(fit.converged),
            "n_iter": int(fit.n_iter),
            "n_points": int(len(fit.weights)),
            "strategy": fit.strategy,
            "hyperparameters": {k: as_dict(v) for k, v in hyper_summary(fit).items()},
            "fixed_effects": {k: as_dict(v) for k, v in fixed_effect_summary(fit).items()},
            "dic": dic(fit, n_dic_samples, seed)}
