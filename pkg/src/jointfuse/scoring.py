"""Predictive scores computed from predictive sample sets."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass

import numpy as np


def crps_empirical(samples, y: float) -> float:
    """Empirical CRPS, mean|X - y| - 1/(2Q^2) sum|X_q - X_r|, in O(Q log Q)."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    q = len(x)
    if q == 0:
        raise ValueError("need at least one sample")
    i = np.arange(1, q + 1)
    # sum_{q,r}|x_q - x_r| = 2 sum_i (2i - q - 1) x_(i)
    spread = np.sum((2 * i - q - 1) * x) / q ** 2
    return float(np.mean(np.abs(x - y)) - spread)


def crps_naive(samples, y: float) -> float:
    x = np.asarray(samples, dtype=float).ravel()
    return float(np.mean(np.abs(x - y)) - np.abs(x[:, None] - x[None, :]).sum() / (2 * len(x) ** 2))


def crps_gaussian(mu, sigma, y):
    """Closed-form CRPS of N(mu, sigma^2)."""
    from scipy.stats import norm
    z = (y - mu) / sigma
    return sigma * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / np.sqrt(np.pi))


@dataclass(frozen=True)
class ScoreReport:
    stratum: str
    n: int
    rmse: float
    mape: float
    pmcc: float
    crps: float
    log_score: float
    corr: float
    coverage95: float

    def to_dict(self):
        return asdict(self)


FIELDS = ("stratum", "n", "rmse", "mape", "pmcc", "crps", "log_score", "corr", "coverage95")


def _report(label, y, draws) -> ScoreReport:
    y = np.asarray(y, dtype=float)
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or len(draws) != len(y):
        raise ValueError("predictions must be (n_pairs, Q) aligned with observations")
    if len(y) == 0:
        raise ValueError("no pairs to score")
    yhat = draws.mean(1)
    var = draws.var(1, ddof=1) if draws.shape[1] > 1 else np.zeros(len(y))
    err = y - yhat
    rmse = float(np.sqrt(np.mean(err ** 2)))
    if np.any(y == 0):
        mape = float("nan")
    else:
        mape = float(100 * np.mean(np.abs(err / y)))
    pmcc = float(np.sum(err ** 2) + np.sum(var))
    crps = float(np.mean([crps_empirical(d, v) for d, v in zip(draws, y)]))
    with np.errstate(divide="ignore"):
        s2 = np.maximum(var, 1e-300)
        logdens = -0.5 * np.log(2 * np.pi * s2) - 0.5 * err ** 2 / s2
    log_score = float(-np.mean(logdens))
    if len(y) >= 2 and np.std(y) > 0 and np.std(yhat) > 0:
        corr = float(np.corrcoef(y, yhat)[0, 1])
    else:
        corr = float("nan")
    lo, hi = np.quantile(draws, [0.025, 0.975], axis=1)
    cover = float(100 * np.mean((y >= lo) & (y <= hi)))
    return ScoreReport(label, len(y), rmse, mape, pmcc, crps, log_score, corr, cover)


def score_report(obs, draws, keys=None, sitetypes=None, stratify: str = "none",
                 scale: str = "log") -> list[ScoreReport]:
    """Scores for aligned observations and predictive draws (rows x Q).

    ``stratify``: ``none`` (one pooled row), ``site``, ``day`` or
    ``sitetype``; site and day come from ``keys`` = [(site, day), ...].
    ``scale='concentration'`` exponentiates both observations and draws.
    """
    obs = np.asarray(obs, dtype=float)
    draws = np.asarray(draws, dtype=float)
    if scale == "concentration":
        obs, draws = np.exp(obs), np.exp(draws)
    elif scale != "log":
        raise ValueError(f"unknown scale {scale!r}")
    if stratify == "none":
        return [_report("all", obs, draws)]
    if stratify in ("site", "day"):
        if keys is None:
            raise ValueError("keys needed for site/day strata")
        labels = np.array([str(k[0] if stratify == "site" else k[1]) for k in keys])
    elif stratify == "sitetype":
        if sitetypes is None:
            raise ValueError("site types needed for sitetype strata")
        labels = np.asarray(sitetypes).astype(str)
    else:
        raise ValueError(f"unknown stratification {stratify!r}")
    uniq = sorted(set(labels), key=lambda s: (len(s), s) if stratify == "day" else s)
    return [_report(u, obs[labels == u], draws[labels == u]) for u in uniq]


@dataclass
class PooledPredictions:
    keys: list
    obs: np.ndarray
    draws: np.ndarray
    sitetypes: np.ndarray
    folds: np.ndarray


def pool_folds(per_fold) -> PooledPredictions:
    """Concatenate per-fold (keys, obs, draws, sitetypes) tuples; keys must be disjoint."""
    keys, obs, draws, st, folds = [], [], [], [], []
    seen = set()
    for f, (k, o, d, s) in enumerate(per_fold, start=1):
        for key in k:
            if key in seen:
                raise ValueError(f"(site, day) {key} predicted in more than one fold")
            seen.add(key)
        keys += list(k)
        obs.append(np.asarray(o, dtype=float))
        draws.append(np.asarray(d, dtype=float))
        st.append(np.asarray(s))
        folds.append(np.full(len(k), f))
    if not keys:
        raise ValueError("no predictions to pool")
    return PooledPredictions(keys, np.concatenate(obs), np.vstack(draws), np.concatenate(st),
                             np.concatenate(folds))


def write_scores_csv(path, reports, extra: dict | None = None):
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(extra) + list(FIELDS))
        for r in reports:
            d = r.to_dict()
            w.writerow(list(extra.values()) + [_fmt(d[k]) for k in FIELDS])


def _fmt(v):
    return f"{v:.10g}" if isinstance(v, float) else str(v)


def read_scores_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
