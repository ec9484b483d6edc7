"""Point-relation densities: tetrahedron samples, binned class densities and
the feature log-likelihood ratio used to rank candidate features."""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateTriple, EmptyClass, OutOfNeighborhood, UnknownClass

NO_EVIDENCE = float("-inf")
_SQRT3 = np.sqrt(3.0)
_TINY = 1e-9
LOWER = np.array([0.0, -1.0, 0.0])
UPPER = np.array([1.0, 1.0, 1.0])


@dataclass(frozen=True)
class RelationConfig:
    R: float = 15.0
    eps: float = 1.0
    sample_len: int = 50
    bins: tuple = (15, 20, 10)

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("R must be > 0")
        if not 0 < self.eps < self.R:
            raise ValueError("eps must satisfy 0 < eps < R")
        if int(self.sample_len) < 1:
            raise ValueError("sample_len must be >= 1")
        bins = tuple(int(b) for b in self.bins)
        if len(bins) != 3 or min(bins) < 1:
            raise ValueError("bins must be three positive integers")
        object.__setattr__(self, "bins", bins)


def delta_map_batch(c, x1, x2, x3, R, gaze) -> np.ndarray:
    """Vectorized tetrahedron map for arrays of shape ``(n, 3)``.

    No validity checks; collinear triples map to ``u2 = u3 = 0``.
    """
    c, x1, x2, x3 = (np.asarray(v, dtype=float).reshape(-1, 3) for v in (c, x1, x2, x3))
    g = np.asarray(gaze, dtype=float)
    r = (np.linalg.norm(x1 - c, axis=1) + np.linalg.norm(x2 - c, axis=1) + np.linalg.norm(x3 - c, axis=1)) / 3.0
    cross = np.cross(x2 - x1, x3 - x1)
    twice_area = np.linalg.norm(cross, axis=1)
    flat = twice_area <= _TINY * np.maximum(r * r, _TINY)
    safe = np.where(flat, 1.0, twice_area)
    d = np.abs(np.einsum("ij,ij->i", x1 - c, cross)) / safe
    side = (x1 + x2 + x3) / 3.0 - c
    sgn = np.where(side @ g < 0, -1.0, 1.0)
    d = np.where(flat, 0.0, sgn * d)
    q = 4.0 * (0.5 * twice_area) / (3.0 * _SQRT3)
    r2 = r * r

    den2 = r2 - q
    u2 = np.where(den2 > _TINY, d / np.sqrt(np.maximum(den2, _TINY)), np.sign(d))
    den3 = r2 - d * d
    u3 = np.where(den3 > _TINY, q / np.maximum(den3, _TINY), np.where(q > 0, 1.0, 0.0))
    out = np.column_stack([r / R, u2, u3])
    return np.clip(out, LOWER, UPPER)


def delta_map(c, x1, x2, x3, R, gaze) -> np.ndarray:
    """Map an inspection point and a data-point triple to ``(u1, u2, u3)``.

    ``u1`` is the mean radius over ``R``, ``u2`` the signed plane distance
    normalized by ``sqrt(r^2 - 4a/(3 sqrt 3))`` and ``u3`` the triangle
    regularity ``4a / (3 sqrt 3 (r^2 - d^2))``; both reach 1 for an
    equilateral triple.  The sign of the plane distance follows the gaze
    component of the triangle centroid relative to ``c``.
    """
    pts = [np.asarray(x, dtype=float).reshape(3) for x in (x1, x2, x3)]
    for p, q in combinations(pts, 2):
        if np.linalg.norm(p - q) <= _TINY:
            raise DegenerateTriple("coincident triple points")
    cc = np.asarray(c, dtype=float).reshape(3)
    r = np.mean([np.linalg.norm(p - cc) for p in pts])
    if r >= R:
        raise OutOfNeighborhood(f"mean distance {r:g} >= R={R:g}")
    return delta_map_batch(cc, *pts, R, gaze)[0]


@dataclass
class TetraSamples:
    """Flat Δ-samples for a batch of inspection points."""

    owner: np.ndarray  # index into the batch of centers
    triples: np.ndarray  # (n, 3) point indices
    deltas: np.ndarray  # (n, 3)
    n_centers: int

    def for_center(self, i) -> np.ndarray:
        return self.deltas[self.owner == i]


def _neighbors(points, centers, R, tree):
    tree = tree if tree is not None else cKDTree(points)
    lists = tree.query_ball_point(centers, R, return_sorted=True)
    lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    flat = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(lens.sum()))
    owner = np.repeat(np.arange(len(centers)), lens)
    return owner, flat


def sample_tetra_batch(points, centers, cfg: RelationConfig, gaze, rng, tree=None, sample_len=None) -> TetraSamples:
    """Draw up to ``sample_len`` tetrahedron samples around each center.

    Neighbors within ``R`` are bucketed in distance rings of width ``eps``;
    a triple is drawn uniformly from all same-ring triples (ring chosen with
    probability proportional to its triple count).  When a center has no more
    ring triples than ``sample_len`` all of them are returned once.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    l = int(cfg.sample_len if sample_len is None else sample_len)
    nc = len(centers)
    empty = TetraSamples(np.zeros(0, np.int64), np.zeros((0, 3), np.int64), np.zeros((0, 3)), nc)
    if nc == 0 or len(points) < 3:
        return empty
    owner, idx = _neighbors(points, centers, cfg.R, tree)
    dist = np.linalg.norm(points[idx] - centers[owner], axis=1)
    keep = (dist < cfg.R) & (dist > _TINY)
    owner, idx, dist = owner[keep], idx[keep], dist[keep]
    n_rings = int(np.ceil(cfg.R / cfg.eps)) + 1
    ring = np.floor(dist / cfg.eps).astype(np.int64)
    key = owner * n_rings + ring
    order = np.lexsort((idx, key))
    key, idx, owner = key[order], idx[order], owner[order]
    gkeys, gstart, gcount = np.unique(key, return_index=True, return_counts=True)
    gowner = gkeys // n_rings
    gw = gcount * (gcount - 1) * (gcount - 2) // 6
    total = np.bincount(gowner, weights=gw.astype(float), minlength=nc)

    own_parts, tri_parts = [], []
    # centers with few ring triples: enumerate every triple once
    few = np.flatnonzero((total > 0) & (total <= l))
    if len(few):
        for ci in few:
            for gi in np.flatnonzero((gowner == ci) & (gw > 0)):
                members = idx[gstart[gi]:gstart[gi] + gcount[gi]]
                combos = np.array(list(combinations(members, 3)), dtype=np.int64)
                own_parts.append(np.full(len(combos), ci, dtype=np.int64))
                tri_parts.append(combos)
    many = total > l
    if many.any():
        cw = np.cumsum(gw.astype(float))
        base = np.concatenate([[0.0], cw])
        first_group = np.searchsorted(gowner, np.arange(nc), side="left")
        centers_m = np.flatnonzero(many)
        o = np.repeat(centers_m, l)
        u = rng.random(len(o)) * total[o] + base[first_group[o]]
        gi = np.searchsorted(cw, u, side="right")
        gi = np.minimum(gi, len(gw) - 1)
        n = gcount[gi]
        r = rng.random((len(o), 3))
        i = np.floor(r[:, 0] * n).astype(np.int64)
        j = np.floor(r[:, 1] * (n - 1)).astype(np.int64)
        k = np.floor(r[:, 2] * (n - 2)).astype(np.int64)
        j += j >= i
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        k += k >= lo
        k += k >= hi
        s = gstart[gi]
        own_parts.append(o)
        tri_parts.append(np.column_stack([idx[s + i], idx[s + j], idx[s + k]]))
    if not own_parts:
        return empty
    own = np.concatenate(own_parts)
    tri = np.concatenate(tri_parts)
    srt = np.argsort(own, kind="stable")
    own, tri = own[srt], tri[srt]
    deltas = delta_map_batch(centers[own], points[tri[:, 0]], points[tri[:, 1]], points[tri[:, 2]], cfg.R, gaze)
    return TetraSamples(own, tri, deltas, nc)


def sample_tetra(scan, center, cfg: RelationConfig, seed: int) -> np.ndarray:
    """Δ-samples ``(k, 3)`` around one inspection point, ``k <= sample_len``."""
    rng = np.random.default_rng(seed)
    return sample_tetra_batch(scan.points, np.asarray(center, dtype=float)[None], cfg, scan.gaze, rng).deltas


@dataclass(frozen=True)
class DensityGrid:
    bins: tuple
    mass: np.ndarray  # shape bins, sums to one
    alpha: float
    count: int

    @property
    def log_mass(self):
        return np.log(self.mass)


@dataclass(frozen=True)
class DensityModel:
    """Binned densities for the non-feature class 0 and shape classes 1..m."""

    grids: tuple
    cfg: RelationConfig
    _log: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shapes = {g.mass.shape for g in self.grids}
        if len(shapes) != 1:
            raise ValueError("all grids must share bin dimensions")
        object.__setattr__(self, "grids", tuple(self.grids))
        object.__setattr__(self, "_log", np.stack([g.log_mass.ravel() for g in self.grids]))

    @property
    def m(self) -> int:
        return len(self.grids) - 1

    @property
    def alpha(self) -> float:
        return self.grids[0].alpha

    def log_ratio(self, s: int) -> np.ndarray:
        """Flat per-bin ``ln p(.|s) - ln p(.|0)``."""
        if not 1 <= s <= self.m:
            raise UnknownClass(f"shape class {s} not in 1..{self.m}")
        return self._log[s] - self._log[0]

    def flat_bins(self, deltas) -> np.ndarray:
        return bin_index(deltas, self.cfg.bins)


def bin_index(deltas, bins) -> np.ndarray:
    """Row-major flat bin of each Δ over ``[0,1] x [-1,1] x [0,1]``."""
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 3)
    n = np.asarray(bins)
    frac = (deltas - LOWER) / (UPPER - LOWER)
    ijk = np.clip(np.floor(frac * n).astype(np.int64), 0, n - 1)
    return (ijk[:, 0] * n[1] + ijk[:, 1]) * n[2] + ijk[:, 2]


def train_density(samples, cfg: RelationConfig, alpha: float = 0.5) -> DensityModel:
    """Laplace-smoothed histograms from per-class Δ-samples.

    ``samples`` maps shape class (``0`` for non-features, ``1..m``) to an
    ``(n, 3)`` array of Δ values.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    classes = sorted(samples)
    if 0 not in samples:
        raise EmptyClass("non-feature class 0 has no samples")
    if classes != list(range(len(classes))):
        raise ValueError("shape classes must be 0..m without gaps")
    nbins = int(np.prod(cfg.bins))
    grids = []
    for s in classes:
        d = np.asarray(samples[s], dtype=float).reshape(-1, 3)
        if len(d) == 0:
            raise EmptyClass(f"class {s} has no samples")
        counts = np.bincount(bin_index(d, cfg.bins), minlength=nbins).astype(float)
        mass = (counts + alpha) / (len(d) + alpha * nbins)
        grids.append(DensityGrid(cfg.bins, mass.reshape(cfg.bins), float(alpha), int(len(d))))
    return DensityModel(tuple(grids), cfg)


def phi_from_deltas(deltas, s: int, dm: DensityModel) -> float:
    """Sum of per-sample log-ratios; ``NO_EVIDENCE`` for an empty list."""
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 3)
    if len(deltas) == 0:
        dm.log_ratio(s)
        return NO_EVIDENCE
    return float(dm.log_ratio(s)[dm.flat_bins(deltas)].sum())


def phi_score(scan, s: int, f, dm: DensityModel, seed: int) -> float:
    """Feature log-likelihood ratio of shape class ``s`` at location ``f``."""
    dm.log_ratio(s)
    return phi_from_deltas(sample_tetra(scan, f, dm.cfg, seed), s, dm)


def phi_all(scan, dm: DensityModel, seed: int, centers=None, tree=None) -> np.ndarray:
    """Φ for every shape class at every center (default: every scan point).

    Returns an array ``(m, n_centers)``; row ``s - 1`` holds class ``s``.
    All classes share the same Δ-samples per center.
    """
    pts = scan.points
    centers = pts if centers is None else np.asarray(centers, dtype=float).reshape(-1, 3)
    rng = np.random.default_rng(seed)
    ts = sample_tetra_batch(pts, centers, dm.cfg, scan.gaze, rng, tree=tree)
    out = np.full((dm.m, len(centers)), NO_EVIDENCE)
    if len(ts.owner) == 0:
        return out
    flat = dm.flat_bins(ts.deltas)
    has = np.bincount(ts.owner, minlength=len(centers)) > 0
    for s in range(1, dm.m + 1):
        acc = np.bincount(ts.owner, weights=dm.log_ratio(s)[flat], minlength=len(centers))
        out[s - 1, has] = acc[has]
    return out
