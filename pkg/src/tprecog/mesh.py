"""Closed triangle meshes and the point queries the likelihood needs.

Triangles are stored counter-clockwise as seen from outside; normals are the
inward unit normals.  All queries are brute force over triangles, vectorized
in chunks of points; meshes in this package have at most a few thousand
triangles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonWatertightMesh

OUTSIDE, SURFACE, INTERIOR = 0, 1, 2

_CHUNK = 1 << 18  # point-triangle pairs per vectorized block


@dataclass(frozen=True)
class Surface:
    normal: np.ndarray


class _Interior:
    def __repr__(self):
        return "Interior"


class _Outside:
    def __repr__(self):
        return "Outside"


Interior = _Interior()
Outside = _Outside()


class TriMesh:
    """Immutable triangle mesh with per-triangle inward normals."""

    def __init__(self, vertices, triangles, require_watertight: bool = True):
        v = np.array(vertices, dtype=float).reshape(-1, 3)
        t = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(t) == 0:
            raise ValueError("mesh has no triangles")
        if t.min() < 0 or t.max() >= len(v):
            raise ValueError("triangle index out of range")
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        cross = np.cross(b - a, c - a)
        norm = np.linalg.norm(cross, axis=1)
        if np.any(norm <= 0):
            raise ValueError("mesh contains zero-area triangles")
        self.vertices = v
        self.triangles = t
        self.areas = 0.5 * norm
        self.normals = -cross / norm[:, None]
        self.watertight = _is_watertight(t)
        if require_watertight and not self.watertight:
            raise NonWatertightMesh("mesh is not a closed edge-manifold surface")
        for arr in (self.vertices, self.triangles, self.areas, self.normals):
            arr.flags.writeable = False
        self._occupancy = None
        self._buckets = {}

    @property
    def corners(self):
        t = self.triangles
        return self.vertices[t[:, 0]], self.vertices[t[:, 1]], self.vertices[t[:, 2]]

    def volume(self) -> float:
        a, b, c = self.corners
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def area(self) -> float:
        return float(self.areas.sum())

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, rotation, translation) -> "TriMesh":
        v = self.vertices @ np.asarray(rotation).T + np.asarray(translation)
        return TriMesh(v, self.triangles, require_watertight=self.watertight)


def _is_watertight(tris: np.ndarray) -> bool:
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts != 1):
        return False
    rev = {tuple(e) for e in uniq[:, ::-1]}
    return all(tuple(e) in rev for e in uniq)


def _seg_dist2(p, a, b):
    ab = b - a
    denom = np.einsum("...k,...k->...", ab, ab)
    t = np.einsum("...k,...k->...", p - a, ab) / denom
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[..., None] * ab
    d = p - proj
    return np.einsum("...k,...k->...", d, d), proj


def closest_on_triangles(points, a, b, c):
    """Squared distances and closest points between every point and triangle.

    Returns arrays of shape ``(n_points, n_tris)`` and ``(n_points, n_tris, 3)``.
    """
    p = np.asarray(points, dtype=float)[:, None, :]
    return _closest_pairs(p, a[None], b[None], c[None])


def _closest_pairs(p, a, b, c):
    """Elementwise point-triangle squared distance and closest point (broadcasting)."""
    ab, ac = b - a, c - a
    nrm = np.cross(ab, ac)
    nn = np.einsum("...k,...k->...", nrm, nrm)
    ap = p - a
    s = np.einsum("...k,...k->...", ap, nrm) / nn
    proj = p - s[..., None] * nrm
    # barycentric coordinates of the projection
    v0, v1, v2 = ab, ac, proj - a
    d00 = np.einsum("...k,...k->...", v0, v0)
    d01 = np.einsum("...k,...k->...", v0, v1)
    d11 = np.einsum("...k,...k->...", v1, v1)
    d20 = np.einsum("...k,...k->...", v2, v0)
    d21 = np.einsum("...k,...k->...", v2, v1)
    den = d00 * d11 - d01 * d01
    bv = (d11 * d20 - d01 * d21) / den
    bw = (d00 * d21 - d01 * d20) / den
    inside = (bv >= 0) & (bw >= 0) & (bv + bw <= 1)
    d_plane = s * s * nn
    best_d = np.where(inside, d_plane, np.inf)
    best_p = np.array(np.broadcast_to(proj, best_d.shape + (3,)))
    for e0, e1 in ((a, b), (b, c), (c, a)):
        d, q = _seg_dist2(p, np.broadcast_to(e0, best_p.shape), np.broadcast_to(e1, best_p.shape))
        better = d < best_d
        best_d = np.where(better, d, best_d)
        best_p[better] = q[better]
    return best_d, best_p


def nearest_on_subset(points, mesh: TriMesh, tri_mask, max_dist=None):
    """Nearest point among the triangles selected by ``tri_mask``.

    Returns ``(distance, triangle_index, closest_point)`` per query point;
    distance is ``inf`` and index ``-1`` when no triangle is selected.  With
    ``max_dist`` set, only triangles whose bounding box lies within
    ``max_dist`` are considered, so farther points may report ``inf`` or a
    distance to a triangle that is not the nearest; results within
    ``max_dist`` are exact.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    idx = np.flatnonzero(tri_mask)
    dist = np.full(n, np.inf)
    which = np.full(n, -1, dtype=np.int64)
    close = np.zeros((n, 3))
    if len(idx) == 0 or n == 0:
        return dist, which, close
    if max_dist is not None:
        return _nearest_pruned(points, mesh, idx, max_dist, dist, which, close)
    a, b, c = (x[idx] for x in mesh.corners)
    step = max(1, _CHUNK // len(idx))
    for lo in range(0, n, step):
        d2, q = closest_on_triangles(points[lo:lo + step], a, b, c)
        j = np.argmin(d2, axis=1)
        rows = np.arange(len(j))
        dist[lo:lo + step] = np.sqrt(d2[rows, j])
        which[lo:lo + step] = idx[j]
        close[lo:lo + step] = q[rows, j]
    return dist, which, close


class _TriangleBuckets:
    """Grid cells mapped to the triangles whose bounding box, grown by
    ``reach``, overlaps them; a point can only lie within ``reach`` of the
    triangles listed for its cell."""

    def __init__(self, mesh: TriMesh, reach: float, cells_per_axis: int = 16):
        a, b, c = mesh.corners
        tlo = np.minimum(np.minimum(a, b), c) - reach
        thi = np.maximum(np.maximum(a, b), c) + reach
        lo, hi = tlo.min(axis=0), thi.max(axis=0)
        self.h = float(np.max(hi - lo)) / cells_per_axis
        self.origin = lo
        self.shape = np.floor((hi - lo) / self.h).astype(np.int64) + 1
        klo = np.floor((tlo - lo) / self.h).astype(np.int64)
        khi = np.floor((thi - lo) / self.h).astype(np.int64)
        cells, tris = [], []
        for t, (l, u) in enumerate(zip(klo, khi)):
            g = np.stack(np.meshgrid(*(np.arange(l[i], u[i] + 1) for i in range(3)), indexing="ij"), -1)
            flat = np.ravel_multi_index(g.reshape(-1, 3).T, self.shape)
            cells.append(flat)
            tris.append(np.full(len(flat), t))
        cells, tris = np.concatenate(cells), np.concatenate(tris)
        order = np.lexsort((tris, cells))
        self.tris = tris[order]
        self.start = np.searchsorted(cells[order], np.arange(np.prod(self.shape) + 1))

    def pairs(self, points):
        """``(point_index, triangle_index)`` pairs worth an exact distance test."""
        k = np.floor((points - self.origin) / self.h).astype(np.int64)
        ok = np.flatnonzero(np.all((k >= 0) & (k < self.shape), axis=1))
        flat = np.ravel_multi_index(k[ok].T, self.shape)
        lo, hi = self.start[flat], self.start[flat + 1]
        counts = hi - lo
        pi = np.repeat(ok, counts)
        offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
        return pi, self.tris[np.repeat(lo, counts) + offs]


def _nearest_pruned(points, mesh, idx, max_dist, dist, which, close):
    key = float(max_dist)
    if key not in mesh._buckets:
        mesh._buckets[key] = _TriangleBuckets(mesh, key)
    pi, ti = mesh._buckets[key].pairs(points)
    # keep selected triangles only, renumbered into the subset
    pos = np.full(len(mesh.triangles), -1)
    pos[idx] = np.arange(len(idx))
    ti = pos[ti]
    keep = ti >= 0
    pi, ti = pi[keep], ti[keep]
    if len(pi) == 0:
        return dist, which, close
    a, b, c = (x[idx] for x in mesh.corners)
    d2, q = _closest_pairs(points[pi], a[ti], b[ti], c[ti])
    # per point: smallest distance, ties to the lowest triangle index
    order = np.lexsort((ti, d2, pi))
    first = np.ones(len(order), dtype=bool)
    first[1:] = pi[order][1:] != pi[order][:-1]
    sel = order[first]
    dist[pi[sel]] = np.sqrt(d2[sel])
    which[pi[sel]] = idx[ti[sel]]
    close[pi[sel]] = q[sel]
    return dist, which, close


def winding_number(points, mesh: TriMesh) -> np.ndarray:
    """Generalized winding number (1 inside, 0 outside a closed mesh)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    a, b, c = mesh.corners
    out = np.zeros(len(points))
    step = max(1, _CHUNK // len(a))
    for lo in range(0, len(points), step):
        p = points[lo:lo + step, None, :]
        ra, rb, rc = a[None] - p, b[None] - p, c[None] - p
        la = np.linalg.norm(ra, axis=2)
        lb = np.linalg.norm(rb, axis=2)
        lc = np.linalg.norm(rc, axis=2)
        num = np.einsum("...k,...k->...", ra, np.cross(rb, rc))
        den = (la * lb * lc + np.einsum("...k,...k->...", ra, rb) * lc
               + np.einsum("...k,...k->...", rb, rc) * la + np.einsum("...k,...k->...", rc, ra) * lb)
        out[lo:lo + step] = 2.0 * np.arctan2(num, den).sum(axis=1) / (4.0 * np.pi)
    return out


class _Occupancy:
    """Inside/outside labels for grid cells that no triangle touches.

    A cell clear of every triangle's bounding box lies entirely on one side of
    the surface, so the winding number at its center labels all of it.  Other
    cells are marked mixed and left to the exact test.
    """

    MIXED = -1

    def __init__(self, mesh: TriMesh, cells_per_axis: int = None):
        if cells_per_axis is None:
            # bound the one-off build cost (cells x triangles)
            cells_per_axis = int(np.clip((2e6 / len(mesh.triangles)) ** (1 / 3), 4, 32))
        lo, hi = mesh.bounds()
        span = float(np.max(hi - lo))
        self.h = span / cells_per_axis
        # offset by a fraction of a cell so axis-aligned faces avoid cell walls
        self.origin = lo - 1.37 * self.h
        self.shape = np.floor((hi - self.origin) / self.h).astype(np.int64) + 2
        label = np.zeros(self.shape, dtype=np.int8)
        a, b, c = mesh.corners
        tlo = np.floor((np.minimum(np.minimum(a, b), c) - self.origin) / self.h).astype(np.int64)
        thi = np.floor((np.maximum(np.maximum(a, b), c) - self.origin) / self.h).astype(np.int64)
        for l, u in zip(tlo, thi):
            label[l[0]:u[0] + 1, l[1]:u[1] + 1, l[2]:u[2] + 1] = self.MIXED
        clear = np.argwhere(label == 0)
        centers = self.origin + (clear + 0.5) * self.h
        label[tuple(clear.T)] = winding_number(centers, mesh) > 0.5
        self.label = label

    def lookup(self, points) -> np.ndarray:
        """1 inside, 0 outside, ``MIXED`` where the exact test is needed."""
        k = np.floor((points - self.origin) / self.h).astype(np.int64)
        ok = np.all((k >= 0) & (k < self.shape), axis=1)
        out = np.zeros(len(points), dtype=np.int8)
        out[ok] = self.label[tuple(k[ok].T)]
        return out


def contains(points, mesh: TriMesh) -> np.ndarray:
    """Volume membership of points (closed mesh required)."""
    if not mesh.watertight:
        raise NonWatertightMesh("volume membership needs a watertight mesh")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if mesh._occupancy is None:
        mesh._occupancy = _Occupancy(mesh)
    lab = mesh._occupancy.lookup(points)
    mixed = lab == _Occupancy.MIXED
    inside = lab == 1
    if mixed.any():
        inside[mixed] = winding_number(points[mixed], mesh) > 0.5
    return inside


def ray_hits(origins, direction, a, b, c, tmin: float = 1e-6) -> np.ndarray:
    """Whether rays ``origin + t * direction`` (t > tmin) hit any triangle.

    Candidate pairs come from a 2D grid over the triangles' bounding boxes
    projected along ``direction``; only pairs sharing a cell are tested.
    """
    origins = np.asarray(origins, dtype=float).reshape(-1, 3)
    d = np.asarray(direction, dtype=float)
    hit = np.zeros(len(origins), dtype=bool)
    if len(a) == 0 or len(origins) == 0:
        return hit
    e1, e2 = b - a, c - a
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    a, b, c, e1, e2, pvec, det = a[ok], b[ok], c[ok], e1[ok], e2[ok], pvec[ok], det[ok]
    if len(a) == 0:
        return hit
    inv = 1.0 / det

    # 2D grid in the plane perpendicular to the rays
    dn = d / np.linalg.norm(d)
    u = np.cross(dn, [1.0, 0.0, 0.0] if abs(dn[0]) < 0.9 else [0.0, 1.0, 0.0])
    u /= np.linalg.norm(u)
    basis = np.stack([u, np.cross(dn, u)], axis=1)
    ta, tb, tc = a @ basis, b @ basis, c @ basis
    tlo = np.minimum(np.minimum(ta, tb), tc)
    thi = np.maximum(np.maximum(ta, tb), tc)
    po = origins @ basis
    lo, hi = tlo.min(axis=0), thi.max(axis=0)
    span = np.maximum(hi - lo, 1e-9)
    pad = 1e-9 * float(span.max())
    n = int(np.clip(np.sqrt(len(a)), 1, 256))
    size = span / n

    def cell(xy):
        return np.clip(np.floor((xy - lo) / size).astype(np.int64), 0, n - 1)

    c0, c1 = cell(tlo - pad), cell(thi + pad)
    wx, wy = c1[:, 0] - c0[:, 0] + 1, c1[:, 1] - c0[:, 1] + 1
    cnt = wx * wy
    tri = np.repeat(np.arange(len(a)), cnt)
    k = np.arange(len(tri)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
    cx = c0[tri, 0] + k % wx[tri]
    cy = c0[tri, 1] + k // wx[tri]
    cid = cx * n + cy
    order = np.argsort(cid, kind="stable")
    tri_sorted = tri[order]
    start = np.searchsorted(cid[order], np.arange(n * n + 1))

    inside = np.all((po >= lo - pad) & (po <= hi + pad), axis=1)
    oi = np.flatnonzero(inside)
    oc = cell(po[oi])
    ocid = oc[:, 0] * n + oc[:, 1]
    ocnt = start[ocid + 1] - start[ocid]
    step = max(1, _CHUNK // max(1, int(ocnt.mean()))) if len(oi) else 1
    for lo_i in range(0, len(oi), step):
        sl = slice(lo_i, lo_i + step)
        o_idx, cc, nn = oi[sl], ocid[sl], ocnt[sl]
        if nn.sum() == 0:
            continue
        pr = np.repeat(np.arange(len(o_idx)), nn)
        off = np.arange(len(pr)) - np.repeat(np.cumsum(nn) - nn, nn)
        t_idx = tri_sorted[start[cc][pr] + off]
        tvec = origins[o_idx[pr]] - a[t_idx]
        uu = np.einsum("ij,ij->i", tvec, pvec[t_idx]) * inv[t_idx]
        qvec = np.cross(tvec, e1[t_idx])
        vv = (qvec @ d) * inv[t_idx]
        tt = np.einsum("ij,ij->i", qvec, e2[t_idx]) * inv[t_idx]
        h = (uu >= 0) & (vv >= 0) & (uu + vv <= 1) & (tt > tmin)
        hit[o_idx[np.unique(pr[h])]] = True
    return hit


def classify_points(mesh: TriMesh, pose, pts, gaze, delta_s: float, self_occlusion: bool = False):
    """Vectorized point classification against a posed mesh.

    Returns ``(labels, normals)`` where labels hold ``OUTSIDE``, ``SURFACE`` or
    ``INTERIOR`` and ``normals`` holds the posed inward normal of the nearest
    sensor-facing surface point for ``SURFACE`` rows (zeros elsewhere).
    """
    if delta_s <= 0:
        raise ValueError("delta_s must be positive")
    if not mesh.watertight:
        raise NonWatertightMesh("volume membership needs a watertight mesh")
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    rot = pose.rotation
    local = (pts - pose.translation) @ rot
    g_local = rot.T @ np.asarray(gaze, dtype=float)
    labels = np.zeros(len(pts), dtype=np.int8)
    normals = np.zeros((len(pts), 3))
    lo, hi = mesh.bounds()
    near = np.all((local >= lo - delta_s) & (local <= hi + delta_s), axis=1)
    idx = np.flatnonzero(near)
    if len(idx) == 0:
        return labels, normals
    q = local[idx]
    front = mesh.normals @ g_local > 0
    dist, tri, closest = nearest_on_subset(q, mesh, front, max_dist=delta_s)
    surf = dist <= delta_s
    if self_occlusion and surf.any():
        a, b, c = mesh.corners
        rows = np.flatnonzero(surf)
        blocked = ray_hits(closest[rows], -g_local, a, b, c, tmin=1e-6)
        surf[rows[blocked]] = False
    labels[idx[surf]] = SURFACE
    normals[idx[surf]] = mesh.normals[tri[surf]] @ rot.T
    rest = ~surf
    if rest.any():
        inside = contains(q[rest], mesh)
        labels[idx[rest][inside]] = INTERIOR
    return labels, normals


def classify_point(mesh: TriMesh, pose, pt, gaze, delta_s: float, self_occlusion: bool = False):
    """Classify one point as ``Surface(normal)``, ``Interior`` or ``Outside``."""
    labels, normals = classify_points(mesh, pose, np.asarray(pt, dtype=float)[None], gaze, delta_s, self_occlusion)
    if labels[0] == SURFACE:
        return Surface(normals[0])
    if labels[0] == INTERIOR:
        return Interior
    return Outside
