"""Observation CSV format, run configuration and small serialisation helpers."""
from __future__ import annotations

import copy
import csv
import io as io_
import json
import zipfile

import numpy as np

from .model import ObservationBlock

OBS_COLUMNS = ("source", "monitor_id", "sitetype", "x_km", "y_km", "day", "value_log")
SOURCES = ("pcm", "aqum", "monitors")


class ConfigError(KeyError):
    """A required configuration key is missing or has an invalid value."""

    def __str__(self):
        return str(self.args[0]) if self.args else "configuration error"


class DataError(ValueError):
    pass


# --------------------------------------------------------------------------
# Observations
# --------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))


def write_observations(path, blocks) -> None:
    """Write blocks to the long CSV format (PCM ``day`` holds the year index)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for b in blocks:
            ids = b.monitor_id
            if ids is None:
                prefix = {"pcm": "P", "aqum": "A"}.get(b.block_id, "C")
                keys = np.column_stack([b.x, b.y])
                _, inv = np.unique(keys, axis=0, return_inverse=True)
                ids = np.array([f"{prefix}{i + 1:05d}" for i in inv.ravel()])
            st = b.sitetype if b.sitetype is not None else np.full(len(b), "")
            for i in range(len(b)):
                w.writerow([b.block_id, ids[i], st[i], repr(float(b.x[i])), repr(float(b.y[i])),
                            int(b.time[i]), _fmt(b.values[i])])


def read_observations(path) -> dict:
    """Read the observation CSV into ``{source: ObservationBlock}``."""
    cols = {s: {c: [] for c in OBS_COLUMNS} for s in SOURCES}
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot read observations: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing = set(OBS_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"observation file lacks columns {sorted(missing)}")
        for n, row in enumerate(reader, start=2):
            src = row["source"]
            if src not in SOURCES:
                raise DataError(f"line {n}: unknown source {src!r}")
            for c in OBS_COLUMNS:
                cols[src][c].append(row[c])
    out = {}
    for src, c in cols.items():
        if not c["source"]:
            continue
        try:
            x = np.array(c["x_km"], dtype=float)
            y = np.array(c["y_km"], dtype=float)
            t = np.array(c["day"], dtype=np.int64)
            v = np.array([float(s) if s.strip() else np.nan for s in c["value_log"]])
        except ValueError as exc:
            raise DataError(f"{src}: malformed number ({exc})") from exc
        is_mon = src == "monitors"
        out[src] = ObservationBlock(
            src, x, y, t, v,
            sitetype=np.array(c["sitetype"]) if is_mon else None,
            monitor_id=np.array(c["monitor_id"]) if is_mon else None,
            temporal_resolution="annual" if src == "pcm" else "daily")
    if "monitors" not in out:
        raise DataError("observation file has no monitor rows")
    return out


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "seed": 0,
    "domain": [0.0, 0.0, 100.0, 100.0],
    "simulation": {
        "n_days": 60,
        "n_years": 2,
        "pcm_cells_per_side": 20,
        "aqum_cells_per_side": 5,
        "n_urban": 30,
        "n_rural": 10,
        "truth": {},
    },
    "mesh": {"max_edge_inner": 8.0, "max_edge_outer": 20.0, "cutoff": 1.0},
    "model": {"lambdas": "free", "priors": {}, "fixed_prior_var": 1000.0},
    "inference": {"strategy": "ccd", "max_iter": 200},
    "alignment": "bilinear",
    "gpp": {"knots_per_side": 5, "time": "ar1", "covariates": ["X1"]},
    "cv": {"folds": 6, "n_eta": 50, "n_y": 100},
    "scoring": {"scale": "log", "stratify": "none"},
    "prediction": {"resolution": 2.0, "n_samples": 200, "sitetype": "URB", "days": [0]},
    "sitetype": {"rule": "R3"},
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def get(cfg: dict, dotted: str):
    """Required config value by dotted key; raises :class:`ConfigError` naming the key."""
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"missing config key '{dotted}'")
        node = node[part]
    return node


def set_key(cfg: dict, dotted: str, value) -> None:
    node = cfg
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def dump_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_npz(path, arrays: dict) -> None:
    """``.npz`` archive with fixed member timestamps so equal data gives equal bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            buf = io_.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(info, buf.getvalue())
