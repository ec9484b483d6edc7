"""Curvature cornerness baseline: local quadric fit and the C score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateFit, InsufficientSupport, UnknownClass
from .models import CONCAVE_CORNER, CONVEX_CORNER

MIN_SUPPORT = 6


@dataclass(frozen=True)
class CurvaturePair:
    """Principal curvatures in 1/mm, ``c1 >= c2``, positive = convex toward the sensor."""

    c1: float
    c2: float

    def __post_init__(self):
        if not (np.isfinite(self.c1) and np.isfinite(self.c2)):
            raise ValueError("curvatures must be finite")
        if self.c1 < self.c2:
            raise ValueError("c1 must be >= c2")


def local_frame(pts, gaze):
    """Orthonormal ``(e_u, e_v, e_w)`` with ``e_w`` the plane normal facing the sensor."""
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    w = vt[2]
    if w @ gaze > 0:
        w = -w
    u = vt[0]
    v = np.cross(w, u)
    return u, v, w


def fit_quadric_points(pts, gaze, origin) -> CurvaturePair:
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    if len(pts) < MIN_SUPPORT:
        raise InsufficientSupport(f"{len(pts)} points, need {MIN_SUPPORT}")
    g = np.asarray(gaze, dtype=float)
    eu, ev, ew = local_frame(pts, g)
    d = pts - np.asarray(origin, dtype=float)
    u, v, w = d @ eu, d @ ev, d @ ew
    A = np.column_stack([u * u, u * v, v * v, u, v, np.ones_like(u)])
    coef, _, rank, _ = np.linalg.lstsq(A, w, rcond=None)
    if rank < 6:
        raise DegenerateFit("rank-deficient quadric fit")
    al, be, ga = coef[:3]
    # w points toward the sensor, so a surface bulging toward it has a
    # negative Hessian; the sign flip makes convex positive
    hess = -np.array([[2 * al, be], [be, 2 * ga]])
    c = np.linalg.eigvalsh(hess)
    return CurvaturePair(float(c[1]), float(c[0]))


def fit_quadric(scan, f, R: float, tree=None) -> CurvaturePair:
    """Principal curvatures of the scan patch within ``R`` of ``f``."""
    f = np.asarray(f, dtype=float)
    if tree is None:
        tree = cKDTree(scan.points)
    idx = tree.query_ball_point(f, R)
    return fit_quadric_points(scan.points[np.sort(idx)], scan.gaze, f)


def c_score(s: int, pair: CurvaturePair) -> float:
    if s == CONVEX_CORNER:
        return min(pair.c1, pair.c2)
    if s == CONCAVE_CORNER:
        return min(-pair.c1, -pair.c2)
    raise UnknownClass(f"no cornerness score for class {s}")


def c_all(scan, R: float, classes=(CONVEX_CORNER, CONCAVE_CORNER)):
    """``(len(classes), n)`` C scores at every scan point; ``-inf`` where no fit exists."""
    tree = cKDTree(scan.points)
    out = np.full((len(classes), len(scan.points)), -np.inf)
    for i, p in enumerate(scan.points):
        try:
            pair = fit_quadric(scan, p, R, tree)
        except (InsufficientSupport, DegenerateFit):
            continue
        for k, s in enumerate(classes):
            out[k, i] = c_score(s, pair)
    return out
