"""Command-line interface: ``jointfuse <command> [options]``.

Exit status is 0 on success, 2 for input/configuration problems and 1 for
numerical failures during inference.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import io
from .baselines import LatticeError
from .inference import InferenceError, fit as run_fit, load_fit, read_fit_meta, save_fit
from .joint import JOINT_VARIANTS
from .linalg import NotPositiveDefinite
from .mesh import MeshError
from .model import ModelError
from .prediction import PredictionGrid, predict_eta3, write_ascii_grid, write_prediction_csv
from .scoring import (PooledPredictions, read_scores_csv, score_report, write_scores_csv)
from .sitetype import (SiteTypeError, accuracy, classify, read_landcover, read_roads_csv,
                       write_landcover, write_roads_csv)
from .synthetic import (JointTruth, default_geometry, default_mesh, simulate_joint,
                        synthetic_roads_and_landcover)
from .validation import FoldError, assign_folds, cross_validate
from . import workflow

USER_ERRORS = (io.ConfigError, io.DataError, ModelError, FoldError, LatticeError, SiteTypeError,
               MeshError, FileNotFoundError)
NUMERIC_ERRORS = (InferenceError, NotPositiveDefinite, np.linalg.LinAlgError)


class UsageError(Exception):
    pass


def _config(args) -> dict:
    cfg = io.load_config(args.config) if getattr(args, "config", None) else io.default_config()
    for attr, key in (("seed", "seed"), ("strategy", "inference.strategy"),
                      ("folds", "cv.folds"), ("alignment", "alignment")):
        v = getattr(args, attr, None)
        if v is not None:
            io.set_key(cfg, key, v)
    return cfg


def _require(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_simulate(args):
    cfg = _config(args)
    seed = int(io.get(cfg, "seed"))
    sim_cfg = io.get(cfg, "simulation")
    try:
        truth = JointTruth(**io.get(cfg, "simulation.truth"))
    except TypeError as exc:
        raise io.ConfigError(f"bad key in 'simulation.truth': {exc}") from exc
    geom = default_geometry(seed, tuple(io.get(cfg, "domain")),
                            n_pcm=int(io.get(cfg, "simulation.pcm_cells_per_side")),
                            n_aqum=int(io.get(cfg, "simulation.aqum_cells_per_side")),
                            n_urban=int(io.get(cfg, "simulation.n_urban")),
                            n_rural=int(io.get(cfg, "simulation.n_rural")))
    mesh = default_mesh(geom, io.get(cfg, "mesh.max_edge_inner"),
                        io.get(cfg, "mesh.max_edge_outer"), io.get(cfg, "mesh.cutoff"))
    sim = simulate_joint(truth, mesh, geom, n_days=int(sim_cfg["n_days"]),
                         n_years=int(sim_cfg["n_years"]), seed=seed)
    os.makedirs(args.out, exist_ok=True)
    io.write_observations(os.path.join(args.out, workflow.OBS_FILE), [sim.pcm, sim.aqum, sim.monitors])
    workflow.save_mesh(mesh, args.out)
    io.dump_json({"seed": seed, "truth": truth.to_dict(),
                  "latent": {k: np.asarray(v).tolist() for k, v in sim.latent.items()},
                  "sites": {"id": geom.monitor_ids.tolist(), "sitetype": geom.sitetypes.tolist(),
                            "x_km": geom.monitors[:, 0].tolist(), "y_km": geom.monitors[:, 1].tolist()}},
                 os.path.join(args.out, "truth.json"))
    roads, lc = synthetic_roads_and_landcover(geom, seed)
    write_roads_csv(os.path.join(args.out, "roads.csv"), roads)
    write_landcover(os.path.join(args.out, "landcover.asc"), lc)
    print(f"simulated {len(sim.pcm)} PCM, {len(sim.aqum)} AQUM and {len(sim.monitors)} monitor rows "
          f"-> {args.out}")
    return 0


def _model_inputs(cfg, args, data_dir):
    data = workflow.load_data(data_dir)
    mesh = workflow.mesh_for(cfg, data, data_dir)
    covs = None
    if args.model in ("linear-fusion", "gpp", "gpp-stationary"):
        covs = workflow.aligned_covariates(cfg, data, mesh, io.get(cfg, "alignment"))
    return data, mesh, covs


def cmd_fit(args):
    cfg = _config(args)
    _check_model(args.model, workflow.MODELS)
    data, mesh, covs = _model_inputs(cfg, args, args.data)
    spec = workflow.build_model_spec(args.model, cfg, data, mesh, args.source, covs)
    ft = run_fit(spec, strategy=io.get(cfg, "inference.strategy"),
                 max_iter=int(io.get(cfg, "inference.max_iter")))
    extra = {"model": args.model, "source": args.source, "alignment": io.get(cfg, "alignment")}
    save_fit(ft, args.out, extra=extra, extra_arrays=covs)
    summary = workflow.fit_summary(ft, seed=int(io.get(cfg, "seed")))
    io.dump_json(summary, os.path.splitext(args.out)[0] + ".summary.json")
    print(f"model {spec.name}: converged={ft.converged} iterations={ft.n_iter} "
          f"points={len(ft.weights)} DIC={summary['dic']['dic']:.3f}")
    for k, m in summary["hyperparameters"].items():
        print(f"  {k:24s} {m['mean']:12.5g} [{m['q025']:.5g}, {m['q975']:.5g}]")
    for k, m in summary["fixed_effects"].items():
        print(f"  {k:24s} {m['mean']:12.5g} [{m['q025']:.5g}, {m['q975']:.5g}]")
    if not ft.converged:
        _log("warning: hyperparameter optimisation did not converge")
    return 0


def _check_model(name, allowed):
    if name not in allowed:
        raise ModelError(f"model {name!r} not available here; choose from {', '.join(allowed)}")


def save_predictions(path, pp: PooledPredictions, model: str = ""):
    io.write_npz(path, {"site": np.array([k[0] for k in pp.keys]),
                        "day": np.array([k[1] for k in pp.keys], dtype="<i8"),
                        "obs": pp.obs, "draws": pp.draws, "sitetype": pp.sitetypes.astype(str),
                        "fold": pp.folds.astype("<i8"), "model": np.array(model)})


def load_predictions(path) -> PooledPredictions:
    _require(path, "predictions file")
    with np.load(path, allow_pickle=False) as z:
        keys = [(str(s), int(d)) for s, d in zip(z["site"], z["day"])]
        return PooledPredictions(keys, z["obs"], z["draws"], z["sitetype"], z["fold"])


def cmd_cv(args):
    cfg = _config(args)
    _check_model(args.model, workflow.MONITOR_MODELS)
    data, mesh, covs = _model_inputs(cfg, args, args.data)
    spec = workflow.build_model_spec(args.model, cfg, data, mesh, covariates=covs)
    mon = data["monitors"]
    n_folds = int(io.get(cfg, "cv.folds"))
    folds = assign_folds(mon.monitor_id, mon.sitetype, n_folds, int(io.get(cfg, "seed")))
    pp = cross_validate(spec, folds, strategy=io.get(cfg, "inference.strategy"),
                        n_eta=int(io.get(cfg, "cv.n_eta")), n_y=int(io.get(cfg, "cv.n_y")),
                        seed=int(io.get(cfg, "seed")),
                        callback=lambda f, ft: _log(f"fold {f}/{n_folds} converged={ft.converged}"))
    if args.predictions:
        save_predictions(args.predictions, pp, args.model)
    reports = score_report(pp.obs, pp.draws, pp.keys, pp.sitetypes,
                           stratify=args.stratify or io.get(cfg, "scoring.stratify"),
                           scale=io.get(cfg, "scoring.scale"))
    write_scores_csv(args.out, reports, {"model": args.model})
    _print_reports(args.model, reports)
    return 0


def _print_reports(label, reports):
    for r in reports:
        print(f"{label} [{r.stratum}] n={r.n} RMSE={r.rmse:.4f} PMCC={r.pmcc:.3f} "
              f"CRPS={r.crps:.4f} cov95={r.coverage95:.1f}")


def cmd_predict(args):
    cfg = _config(args)
    _require(args.fit, "fit file")
    meta, _ = read_fit_meta(args.fit)
    extra = meta.get("extra", {})
    model = extra.get("model")
    if model not in JOINT_VARIANTS:
        raise ModelError(f"prediction maps need a joint model fit, got {model!r}")
    data = workflow.load_data(args.data)
    mesh = workflow.mesh_for(cfg, data, args.data)
    spec = workflow.build_model_spec(model, cfg, data, mesh, extra.get("source", "pcm"))
    ft = load_fit(args.fit, spec)
    days = ([int(d) for d in args.days.split(",")] if args.days
            else [int(d) for d in io.get(cfg, "prediction.days")])
    grid = PredictionGrid.regular(io.get(cfg, "domain"), float(io.get(cfg, "prediction.resolution")),
                                  days, io.get(cfg, "prediction.sitetype"))
    pred = predict_eta3(ft, grid, int(io.get(cfg, "prediction.n_samples")),
                        int(io.get(cfg, "seed")), io.get(cfg, "scoring.scale"))
    os.makedirs(args.out, exist_ok=True)
    for di, d in enumerate(pred.days):
        for name in ("mean", "sd", "q025", "q975"):
            write_ascii_grid(os.path.join(args.out, f"{name}_day{d}.asc"), getattr(pred, name)[di], grid)
    write_prediction_csv(os.path.join(args.out, "predictions.csv"), pred, grid)
    print(f"wrote {len(pred.days)} day(s) of {grid.nx}x{grid.ny} maps -> {args.out}")
    return 0


def cmd_score(args):
    pp = load_predictions(args.predictions)
    reports = score_report(pp.obs, pp.draws, pp.keys, pp.sitetypes, stratify=args.stratify,
                           scale=args.scale)
    label = args.label or os.path.splitext(os.path.basename(args.predictions))[0]
    if args.out:
        write_scores_csv(args.out, reports, {"model": label})
    _print_reports(label, reports)
    return 0


def _read_points(path):
    """Site id, x, y (metres) and reference label from an observation or point CSV."""
    _require(path, "points file")
    ids, xy, ref = [], [], []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or ())
        km = {"x_km", "y_km"} <= cols
        if not km and not {"x", "y"} <= cols:
            raise io.DataError("points file needs x_km,y_km or x,y columns")
        for row in reader:
            if "source" in row and row["source"] != "monitors":
                continue
            sid = row.get("monitor_id") or row.get("site_id") or str(len(ids))
            if sid in seen:
                continue
            seen.add(sid)
            ids.append(sid)
            if km:
                xy.append((float(row["x_km"]) * 1000.0, float(row["y_km"]) * 1000.0))
            else:
                xy.append((float(row["x"]), float(row["y"])))
            ref.append(row.get("sitetype", ""))
    if not ids:
        raise io.DataError("no points to classify")
    return ids, np.array(xy), np.array(ref)


def cmd_classify(args):
    _require(args.roads, "roads file")
    _require(args.landcover, "land-cover raster")
    roads = read_roads_csv(args.roads)
    lc = read_landcover(args.landcover)
    ids, xy, ref = _read_points(args.points)
    labels = classify(xy, roads, lc, args.rule)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site_id", "x", "y", "sitetype", "reference"])
        for i in range(len(ids)):
            w.writerow([ids[i], repr(float(xy[i, 0])), repr(float(xy[i, 1])), labels[i], ref[i]])
    counts = {s: int(np.sum(labels == s)) for s in ("RUR", "URB", "RKS")}
    print(f"rule {args.rule}: {counts}")
    if np.all(ref != ""):
        print(f"agreement with reference labels: {accuracy(labels, ref):.3f}")
    return 0


def cmd_compare(args):
    if args.labels and len(args.labels) != len(args.inputs):
        raise UsageError("--labels must match --inputs in length")
    for p in args.inputs:
        _require(p, "scores file")
    rows = []
    for i, p in enumerate(args.inputs):
        label = args.labels[i] if args.labels else os.path.splitext(os.path.basename(p))[0]
        for r in read_scores_csv(p):
            r = dict(r)
            r["model"] = label
            rows.append(r)
    fields = ["model"] + [k for k in rows[0] if k != "model"] if rows else ["model"]
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"{r['model']:20s} [{r.get('stratum', '')}] PMCC={r.get('pmcc', '')} "
              f"CRPS={r.get('crps', '')} RMSE={r.get('rmse', '')}")
    return 0


def cmd_default_config(args):
    cfg = io.default_config()
    if args.out:
        io.dump_json(cfg, args.out)
    else:
        print(json.dumps(cfg, indent=2, sort_keys=True))
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jointfuse", description="Joint Bayesian fusion of gridded model output "
                                             "and monitor data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        sp.add_argument("--seed", type=int)
        if data:
            sp.add_argument("--data", required=True, help="directory holding observations.csv")

    s = sub.add_parser("simulate", help="simulate a synthetic dataset")
    common(s, data=False)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit one model and save the posterior")
    common(s)
    s.add_argument("--model", required=True, help=", ".join(workflow.MODELS))
    s.add_argument("--source", default="pcm", choices=("pcm", "aqum"))
    s.add_argument("--strategy", choices=("ccd", "grid", "empirical_bayes"))
    s.add_argument("--alignment", choices=workflow.ALIGNMENTS)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("cv", help="site-level cross-validation")
    common(s)
    s.add_argument("--model", required=True, help=", ".join(workflow.MONITOR_MODELS))
    s.add_argument("--folds", type=int)
    s.add_argument("--strategy", choices=("ccd", "grid", "empirical_bayes"))
    s.add_argument("--alignment", choices=workflow.ALIGNMENTS)
    s.add_argument("--stratify", choices=("none", "site", "day", "sitetype"))
    s.add_argument("--predictions", help="save pooled predictive draws (.npz)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_cv)

    s = sub.add_parser("predict", help="prediction maps from a joint-model fit")
    common(s)
    s.add_argument("--fit", required=True)
    s.add_argument("--days", help="comma-separated day indices")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("score", help="score saved predictive draws")
    s.add_argument("--predictions", required=True)
    s.add_argument("--stratify", default="none", choices=("none", "site", "day", "sitetype"))
    s.add_argument("--scale", default="log", choices=("log", "concentration"))
    s.add_argument("--label")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("classify", help="site-type classification from roads and land cover")
    s.add_argument("--roads", required=True)
    s.add_argument("--landcover", required=True)
    s.add_argument("--points", required=True)
    s.add_argument("--rule", default="R3", choices=("R1", "R2", "R3"))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_classify)

    s = sub.add_parser("compare", help="stack score tables from several models")
    s.add_argument("--inputs", nargs="+", required=True)
    s.add_argument("--labels", nargs="+")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("default-config", help="print or write the default configuration")
    s.add_argument("--out")
    s.set_defaults(func=cmd_default_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1
    except USER_ERRORS + (UsageError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
