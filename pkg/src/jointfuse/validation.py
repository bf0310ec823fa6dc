"""K-fold cross-validation over monitors with pooled predictive scoring."""
from __future__ import annotations

import numpy as np

from .inference import fit
from .model import ModelSpec, mask_validation
from .prediction import predictive_samples
from .scoring import PooledPredictions, pool_folds


class FoldError(ValueError):
    pass


def assign_folds(monitor_ids, sitetypes, n_folds: int = 6, seed: int = 0) -> dict:
    """Site-type stratified fold assignment (monitor id -> fold 1..n_folds).

    Monitors of each site type are shuffled with a seeded generator and dealt
    round-robin, continuing the deal across site types so fold sizes differ
    by at most one.
    """
    if n_folds < 2:
        raise FoldError("need at least 2 folds")
    ids = np.asarray(monitor_ids).astype(str)
    st = np.asarray(sitetypes).astype(str)
    uniq, first = np.unique(ids, return_index=True)
    types = st[first]
    for m in uniq:
        if len(set(st[ids == m])) != 1:
            raise FoldError(f"monitor {m} has more than one site type")
    if len(uniq) < n_folds:
        raise FoldError(f"{len(uniq)} monitors cannot fill {n_folds} folds")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303]))
    out, pos = {}, 0
    for t in sorted(set(types)):
        members = uniq[types == t]
        for m in members[rng.permutation(len(members))]:
            out[str(m)] = pos % n_folds + 1
            pos += 1
    return out


def check_partition(folds: dict, monitor_ids) -> None:
    ids = set(np.asarray(monitor_ids).astype(str))
    missing = ids - set(folds)
    if missing:
        raise FoldError(f"monitors without a fold: {sorted(missing)[:5]}")
    extra = set(folds) - ids
    if extra:
        raise FoldError(f"fold file names unknown monitors: {sorted(extra)[:5]}")
    bad = {f for f in folds.values() if not isinstance(f, (int, np.integer)) or f < 1}
    if bad:
        raise FoldError(f"fold ids must be positive integers, got {sorted(bad)[:5]}")


def cross_validate(spec: ModelSpec, folds: dict, strategy: str = "ccd", n_eta: int = 50,
                   n_y: int = 100, seed: int = 0, block: str = "monitors",
                   threads: int | None = None, psi_init=None, callback=None) -> PooledPredictions:
    """Fit with each fold masked, then draw predictive samples at its rows.

    Each fold's optimisation starts from the previous fold's mode.
    """
    rows = spec.block(block).rows
    check_partition(folds, rows.monitor_id)
    per_fold = []
    start = psi_init
    for f in sorted(set(folds.values())):
        masked = mask_validation(spec, folds, f, block)
        held = masked.meta["masked_rows"]
        if len(held) == 0:
            continue
        ft = fit(masked, strategy=strategy, psi_init=start, threads=threads)
        start = ft.mode
        target = rows.subset(held)
        ps = predictive_samples(ft, target, n_eta, n_y, seed, block)
        per_fold.append((ps.keys, target.values, ps.draws, target.sitetype))
        if callback is not None:
            callback(f, ft)
    return pool_folds(per_fold)
