"""Rural / urban / road-kerb-side classification from roads and land cover.

Distances are in metres.  Rules (closed inequalities, centreline distance):

R1: within 4 m of any road.
R2: within 10 m of any road.
R3: within 50 m of a major road or within 10 m of a minor road.

Points that fail the rule take the land-cover class of the nearest raster
cell (``urban`` -> URB, anything else -> RUR).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import shapely
from shapely.geometry import LineString

RULES = {
    "R1": {"major": 4.0, "minor": 4.0},
    "R2": {"major": 10.0, "minor": 10.0},
    "R3": {"major": 50.0, "minor": 10.0},
}
ROAD_CLASSES = ("major", "minor")


class SiteTypeError(ValueError):
    pass


@dataclass(frozen=True)
class RoadSet:
    """Polylines (each an (k, 2) vertex array) with a class per road."""

    lines: tuple
    classes: tuple
    ids: tuple = ()

    def __post_init__(self):
        if len(self.lines) != len(self.classes):
            raise SiteTypeError("one class per road required")
        for ln, c in zip(self.lines, self.classes):
            if c not in ROAD_CLASSES:
                raise SiteTypeError(f"unknown road class {c!r}")
            if len(ln) < 2:
                raise SiteTypeError("roads need at least two vertices")

    def filtered(self, class_filter=None):
        if class_filter is None or class_filter == "any":
            keep = ROAD_CLASSES
        elif isinstance(class_filter, str):
            keep = (class_filter,)
        else:
            keep = tuple(class_filter)
        return [np.asarray(l, dtype=float) for l, c in zip(self.lines, self.classes) if c in keep]


def distance_to_roads(points, roads: RoadSet, class_filter=None) -> np.ndarray:
    """Minimum point-to-segment distance to the roads of ``class_filter``."""
    lines = roads.filtered(class_filter)
    if not lines:
        raise SiteTypeError(f"no roads of class {class_filter!r}")
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    geoms = [LineString(l) for l in lines]
    tree = shapely.STRtree(geoms)
    pts = shapely.points(p)
    idx = tree.query_nearest(pts, all_matches=False)
    out = np.empty(len(p))
    out[idx[0]] = shapely.distance(pts[idx[0]], np.asarray(geoms, dtype=object)[idx[1]])
    return out


def distance_brute_force(points, roads: RoadSet, class_filter=None) -> np.ndarray:
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    best = np.full(len(p), np.inf)
    for line in roads.filtered(class_filter):
        for a, b in zip(line[:-1], line[1:]):
            ab = b - a
            L = ab @ ab
            t = np.zeros(len(p)) if L == 0 else np.clip(((p - a) @ ab) / L, 0, 1)
            d = np.hypot(*(p - (a + t[:, None] * ab)).T)
            best = np.minimum(best, d)
    return best


@dataclass(frozen=True)
class LandCoverRaster:
    """Categorical raster; ``codes[0]`` is the southernmost row."""

    x0: float
    y0: float
    cellsize: float
    codes: np.ndarray
    legend: dict

    def lookup(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        ny, nx = self.codes.shape
        fx = (p[:, 0] - self.x0) / self.cellsize
        fy = (p[:, 1] - self.y0) / self.cellsize
        if np.any((fx < 0) | (fy < 0) | (fx > nx) | (fy > ny)):
            raise SiteTypeError("point outside the land-cover raster")
        i = np.minimum(fx.astype(int), nx - 1)
        j = np.minimum(fy.astype(int), ny - 1)
        labels = [self.legend.get(int(c), self.legend.get(str(int(c)), "rural"))
                  for c in self.codes[j, i]]
        return np.array(["URB" if str(l).lower() == "urban" else "RUR" for l in labels])


def classify(points, roads: RoadSet, landcover: LandCoverRaster, rule: str = "R3") -> np.ndarray:
    """Site type per point under ``rule``."""
    if rule not in RULES:
        raise SiteTypeError(f"unknown rule {rule!r}")
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    base = landcover.lookup(p)
    thr = RULES[rule]
    rks = np.zeros(len(p), dtype=bool)
    for cls in ROAD_CLASSES:
        if roads.filtered(cls):
            rks |= distance_to_roads(p, roads, cls) <= thr[cls]
    return np.where(rks, "RKS", base)


def accuracy(classified, truth) -> float:
    a, b = np.asarray(classified), np.asarray(truth)
    if a.shape != b.shape:
        raise SiteTypeError("label sets differ in length")
    if len(a) == 0:
        raise SiteTypeError("no labels to compare")
    return float(np.mean(a == b))


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------

def read_roads_csv(path) -> RoadSet:
    """CSV with columns road_id, class, vertex_index, x, y (metres)."""
    roads = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rid = row["road_id"]
            roads.setdefault(rid, [row["class"], []])
            if roads[rid][0] != row["class"]:
                raise SiteTypeError(f"road {rid} changes class")
            roads[rid][1].append((int(row["vertex_index"]), float(row["x"]), float(row["y"])))
    lines, classes, ids = [], [], []
    for rid in sorted(roads):
        cls, verts = roads[rid]
        verts.sort()
        lines.append(np.array([(x, y) for _, x, y in verts]))
        classes.append(cls)
        ids.append(rid)
    return RoadSet(tuple(lines), tuple(classes), tuple(ids))


def write_roads_csv(path, roads: RoadSet):
    ids = roads.ids or tuple(f"R{i + 1}" for i in range(len(roads.lines)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id", "class", "vertex_index", "x", "y"])
        for rid, cls, line in zip(ids, roads.classes, roads.lines):
            for k, (x, y) in enumerate(line):
                w.writerow([rid, cls, k, repr(float(x)), repr(float(y))])


def read_landcover(path, legend_path=None) -> LandCoverRaster:
    """ESRI ASCII grid plus a JSON legend {code: label}; default ``<path>.legend.json``."""
    from .prediction import read_ascii_grid
    header, vals = read_ascii_grid(path)
    legend_path = legend_path or str(path) + ".legend.json"
    with open(legend_path) as fh:
        legend = {int(k): v for k, v in json.load(fh).items()}
    x0 = header.get("xllcorner", header.get("xllcenter"))
    y0 = header.get("yllcorner", header.get("yllcenter"))
    return LandCoverRaster(x0, y0, header["cellsize"], np.nan_to_num(vals, nan=-1).astype(int), legend)


def write_landcover(path, raster: LandCoverRaster, legend_path=None):
    ny, nx = raster.codes.shape
    with open(path, "w") as fh:
        fh.write(f"ncols {nx}\nnrows {ny}\nxllcorner {raster.x0!r}\nyllcorner {raster.y0!r}\n"
                 f"cellsize {raster.cellsize!r}\nNODATA_value -9999\n")
        for row in raster.codes[::-1]:
            fh.write(" ".join(str(int(c)) for c in row) + "\n")
    with open(legend_path or str(path) + ".legend.json", "w") as fh:
        json.dump({str(k): v for k, v in sorted(raster.legend.items())}, fh, sort_keys=True)
