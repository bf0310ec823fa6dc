"""Posterior prediction of the monitor-scale linear predictor and predictive draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inference import FitResult, sample_posterior
from .model import SITETYPES, ObservationBlock


@dataclass(frozen=True)
class PredictionGrid:
    """Regular lattice of cell centres with a site type per cell."""

    x0: float
    y0: float
    resolution: float
    nx: int
    ny: int
    days: tuple
    sitetype: np.ndarray

    @classmethod
    def regular(cls, bbox, resolution: float = 2.0, days=(0,), sitetype="URB"):
        x0, y0, x1, y1 = bbox
        nx = int(round((x1 - x0) / resolution))
        ny = int(round((y1 - y0) / resolution))
        if nx < 1 or ny < 1:
            raise ValueError("grid resolution larger than the box")
        st = np.full(nx * ny, sitetype) if isinstance(sitetype, str) else np.asarray(sitetype)
        if len(st) != nx * ny or not set(np.unique(st)) <= set(SITETYPES):
            raise ValueError("site types must be one of RUR/URB/RKS per cell")
        return cls(float(x0), float(y0), float(resolution), nx, ny, tuple(int(d) for d in days), st)

    @property
    def centres(self) -> np.ndarray:
        xs = self.x0 + (np.arange(self.nx) + 0.5) * self.resolution
        ys = self.y0 + (np.arange(self.ny) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def rows(self, day: int) -> ObservationBlock:
        c = self.centres
        n = len(c)
        return ObservationBlock("monitors", c[:, 0], c[:, 1], np.full(n, day), np.full(n, np.nan),
                                sitetype=self.sitetype, monitor_id=np.array([f"cell{i}" for i in range(n)]))


@dataclass
class GridPrediction:
    days: tuple
    mean: np.ndarray      # (n_days, n_cells)
    sd: np.ndarray
    q025: np.ndarray
    q975: np.ndarray


def eta_draws(fit: FitResult, rows: ObservationBlock, n_samples: int, seed: int,
              block: str = "monitors"):
    """Posterior draws of the ``block`` linear predictor at ``rows`` (n_samples x n_rows)."""
    draws = sample_posterior(fit, n_samples, seed)
    lp = fit.spec.predictor(block, rows)
    out = np.empty((n_samples, len(rows)))
    for k in np.unique(draws.point):
        idx = np.flatnonzero(draws.point == k)
        out[idx] = lp.evaluate(draws.theta[idx].T, fit.hypers_at(k)).T
    return out, draws


def predict_eta3(fit: FitResult, grid: PredictionGrid, n_samples: int = 200, seed: int = 0,
                 scale: str = "log") -> GridPrediction:
    """Per-cell, per-day posterior summaries of the monitor linear predictor."""
    draws = sample_posterior(fit, n_samples, seed)
    stats = {k: [] for k in ("mean", "sd", "q025", "q975")}
    for day in grid.days:
        lp = fit.spec.predictor("monitors", grid.rows(day))
        eta = np.empty((n_samples, grid.nx * grid.ny))
        for k in np.unique(draws.point):
            idx = np.flatnonzero(draws.point == k)
            eta[idx] = lp.evaluate(draws.theta[idx].T, fit.hypers_at(k)).T
        eta = backtransform(eta, scale)
        stats["mean"].append(eta.mean(0))
        stats["sd"].append(eta.std(0, ddof=1) if n_samples > 1 else np.zeros(eta.shape[1]))
        q = np.quantile(eta, [0.025, 0.975], axis=0)
        stats["q025"].append(q[0])
        stats["q975"].append(q[1])
    return GridPrediction(grid.days, *(np.array(stats[k]) for k in ("mean", "sd", "q025", "q975")))


@dataclass
class PredictiveSamples:
    """Predictive draws per row: ``draws[i]`` has ``n_eta * n_y`` values (log scale)."""

    keys: list           # (site id, day) per row
    draws: np.ndarray    # (n_rows, Q)

    def __len__(self):
        return len(self.keys)


def predictive_samples(fit: FitResult, rows: ObservationBlock, n_eta: int = 50, n_y: int = 100,
                       seed: int = 0, block: str = "monitors") -> PredictiveSamples:
    """Two-stage predictive sampling with measurement-error inflation.

    Each of ``n_eta`` joint posterior draws supplies a noise variance and a
    linear predictor; ``n_y`` Gaussian draws are made around each.  Noise
    streams are keyed on the row's (site, day) so row order and splitting
    the rows into chunks do not change the draws.
    """
    eta, draws = eta_draws(fit, rows, n_eta, seed, block)
    noise = fit.spec.block(block).noise
    var = np.array([h[noise] for h in draws.hypers])
    var = np.exp(var)
    ids = rows.monitor_id if rows.monitor_id is not None else np.arange(len(rows)).astype(str)
    keys = [(str(m), int(d)) for m, d in zip(ids, rows.time)]
    out = np.empty((len(rows), n_eta * n_y))
    sd = np.sqrt(var)[:, None]
    for i, (m, d) in enumerate(keys):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 7, _key_int(m), d]))
        z = rng.standard_normal((n_eta, n_y))
        out[i] = (eta[:, i][:, None] + sd * z).ravel()
    return PredictiveSamples(keys, out)


def _key_int(s: str) -> int:
    """Stable non-negative integer from a site id (independent of hash seeds)."""
    return int.from_bytes(str(s).encode()[:32].ljust(32, b"\0"), "little") % (2 ** 63)


def backtransform(samples, scale: str = "log"):
    if scale == "log":
        return np.asarray(samples, dtype=float)
    if scale == "concentration":
        return np.exp(samples)
    raise ValueError(f"unknown scale {scale!r}")


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def write_ascii_grid(path, values, grid: PredictionGrid, nodata: float = -9999.0):
    """ESRI ASCII grid, first data row = northernmost cells."""
    v = np.asarray(values, dtype=float).reshape(grid.ny, grid.nx)[::-1]
    v = np.where(np.isfinite(v), v, nodata)
    with open(path, "w") as fh:
        fh.write(f"ncols {grid.nx}\nnrows {grid.ny}\nxllcorner {grid.x0!r}\n"
                 f"yllcorner {grid.y0!r}\ncellsize {grid.resolution!r}\nNODATA_value {nodata:g}\n")
        for row in v:
            fh.write(" ".join(f"{x:.10g}" for x in row) + "\n")


def read_ascii_grid(path):
    """Return (header dict, values with row 0 = southernmost)."""
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    for line in lines[:6]:
        k, v = line.split()
        header[k.lower()] = float(v)
    vals = np.array([[float(x) for x in l.split()] for l in lines[6:] if l.strip()])
    vals = np.where(vals == header.get("nodata_value", np.nan), np.nan, vals)
    return header, vals[::-1]


def write_prediction_csv(path, pred: GridPrediction, grid: PredictionGrid):
    c = grid.centres
    with open(path, "w") as fh:
        fh.write("x,y,day,mean,sd,q025,q975\n")
        for di, day in enumerate(pred.days):
            for i in range(len(c)):
                fh.write(f"{c[i, 0]:.6f},{c[i, 1]:.6f},{day},{pred.mean[di, i]:.10g},"
                         f"{pred.sd[di, i]:.10g},{pred.q025[di, i]:.10g},{pred.q975[di, i]:.10g}\n")
