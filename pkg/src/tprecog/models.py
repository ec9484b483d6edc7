"""Object models: meshes with labeled point features, plus test-object builders."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .geometry import Pose, solve_rigid_from_triple, triangle_area
from .mesh import TriMesh, nearest_on_subset

CONVEX_CORNER = 1
CONCAVE_CORNER = 2
SHAPE_NAMES = {CONVEX_CORNER: "convex corner", CONCAVE_CORNER: "concave corner"}


@dataclass(frozen=True)
class ObjectModel:
    class_id: int
    mesh: TriMesh
    features: tuple  # ((shape_class, location), ...)
    name: str = ""

    def __post_init__(self):
        if int(self.class_id) < 1:
            raise ValueError("class_id must be >= 1")
        feats = tuple((int(s), np.asarray(f, dtype=float).reshape(3)) for s, f in self.features)
        if feats:
            locs = np.array([f for _, f in feats])
            dist, _, _ = nearest_on_subset(locs, self.mesh, np.ones(len(self.mesh.triangles), bool))
            if np.any(dist > 1e-6):
                raise ValueError("feature locations must lie on the mesh surface")
        object.__setattr__(self, "features", feats)

    @property
    def feature_classes(self) -> np.ndarray:
        return np.array([s for s, _ in self.features], dtype=np.int64)

    @property
    def feature_locations(self) -> np.ndarray:
        return np.array([f for _, f in self.features], dtype=float).reshape(-1, 3)


def voxel_mesh(xs, ys, zs, filled) -> TriMesh:
    """Closed boundary surface of a union of cells on a rectilinear grid."""
    xs, ys, zs = (np.asarray(a, dtype=float) for a in (xs, ys, zs))
    filled = np.asarray(filled, dtype=bool)
    nx, ny, nz = filled.shape
    vid = {}
    verts = []
    tris = []

    def vertex(i, j, k):
        key = (i, j, k)
        if key not in vid:
            vid[key] = len(verts)
            verts.append((xs[i], ys[j], zs[k]))
        return vid[key]

    def occ(i, j, k):
        if 0 <= i < nx and 0 <= j < ny and 0 <= k < nz:
            return filled[i, j, k]
        return False

    for i, j, k in zip(*np.nonzero(filled)):
        cell = (i, j, k)
        for axis in range(3):
            for side in (0, 1):
                nb = list(cell)
                nb[axis] += 1 if side else -1
                if occ(*nb):
                    continue
                u, v = [ax for ax in range(3) if ax != axis]
                corners = []
                for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                    idx = list(cell)
                    idx[axis] += side
                    idx[u] += du
                    idx[v] += dv
                    corners.append(vertex(*idx))
                outward = np.zeros(3)
                outward[axis] = 1.0 if side else -1.0
                p = [np.array(verts[c]) for c in corners]
                if np.dot(np.cross(p[1] - p[0], p[2] - p[0]), outward) < 0:
                    corners = corners[::-1]
                tris.append((corners[0], corners[1], corners[2]))
                tris.append((corners[0], corners[2], corners[3]))
    return TriMesh(np.array(verts), np.array(tris))


def voxel_corner_features(xs, ys, zs, filled):
    """Convex (one of eight cells filled) and concave (seven of eight) corners."""
    filled = np.asarray(filled, dtype=bool)
    padded = np.pad(filled, 1)
    feats = []
    for i in range(len(xs)):
        for j in range(len(ys)):
            for k in range(len(zs)):
                n = int(padded[i:i + 2, j:j + 2, k:k + 2].sum())
                if n == 1:
                    feats.append((CONVEX_CORNER, (xs[i], ys[j], zs[k])))
                elif n == 7:
                    feats.append((CONCAVE_CORNER, (xs[i], ys[j], zs[k])))
    return feats


def voxel_model(class_id, xs, ys, zs, filled, name="") -> ObjectModel:
    mesh = voxel_mesh(xs, ys, zs, filled)
    return ObjectModel(class_id, mesh, tuple(voxel_corner_features(xs, ys, zs, filled)), name)


def box_model(class_id, size=(100.0, 100.0, 100.0), name="box") -> ObjectModel:
    sx, sy, sz = size
    return voxel_model(class_id, [0, sx], [0, sy], [0, sz], np.ones((1, 1, 1), bool), name)


def notched_cube(class_id=1, edge=130.0, notch=30.0, name="notched cube") -> ObjectModel:
    """Cube with a small cube removed at each of its eight corners, centered at the origin."""
    h = edge / 2.0
    g = [-h, notch - h, h - notch, h]
    filled = np.ones((3, 3, 3), bool)
    for i in (0, 2):
        for j in (0, 2):
            for k in (0, 2):
                filled[i, j, k] = False
    return voxel_model(class_id, g, g, g, filled, name)


def notched_half(class_id=2, edge=130.0, notch=30.0, name="notched half") -> ObjectModel:
    """Lower half of :func:`notched_cube`: the four bottom notches, flat top.

    Centered on its own bounding box, so it sits ``edge / 4`` above the
    cube's lower half when both share a pose.
    """
    h, q = edge / 2.0, edge / 4.0
    g = [-h, notch - h, h - notch, h]
    gz = [-q, notch - q, q]
    filled = np.ones((3, 3, 2), bool)
    for i in (0, 2):
        for j in (0, 2):
            filled[i, j, 0] = False
    return voxel_model(class_id, g, g, gz, filled, name)


def uv_sphere_mesh(radius: float, n_lat: int = 32, n_lon: int = 64, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Latitude/longitude sphere with poles on the z axis."""
    center = np.asarray(center, dtype=float)
    verts = [center + (0, 0, radius)]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append(center + radius * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]))
    verts.append(center - (0, 0, radius))
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    tris = []
    for j in range(n_lon):
        tris.append((0, ring(1, j), ring(1, j + 1)))
        tris.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append((a, c, d))
            tris.append((a, d, b))
    return TriMesh(np.array(verts), np.array(tris))


def sphere_model(class_id, radius=40.0, n_lat=24, n_lon=48, name="sphere") -> ObjectModel:
    return ObjectModel(class_id, uv_sphere_mesh(radius, n_lat, n_lon), (), name)


def model_symmetries(model: ObjectModel, tol: float = 1e-6):
    """Rigid motions mapping the model's labeled features and vertices onto themselves.

    Candidates come from matching one reference feature triple to every
    label- and distance-compatible ordered triple; the identity is always
    first in the returned list.
    """
    locs = model.feature_locations
    labels = model.feature_classes
    n = len(locs)
    if n < 3:
        return [Pose.identity()]
    ref = None
    for tri in _triples_by_area(locs):
        ref = tri
        break
    ref_d = _pair_dists(locs[list(ref)])
    verts = model.mesh.vertices
    out = [Pose.identity()]
    seen = [np.eye(3)]
    for cand in permutations(range(n), 3):
        if any(labels[c] != labels[r] for c, r in zip(cand, ref)):
            continue
        if np.max(np.abs(_pair_dists(locs[list(cand)]) - ref_d)) > tol * 10 + 1e-9:
            continue
        pose = solve_rigid_from_triple(locs[list(ref)], locs[list(cand)])
        if any(np.allclose(pose.rotation, r, atol=1e-6) for r in seen):
            continue
        if not _maps_onto(pose.apply(locs), locs, labels, labels, tol * 10 + 1e-6):
            continue
        if not _maps_onto(pose.apply(verts), verts, None, None, tol * 10 + 1e-6):
            continue
        seen.append(pose.rotation)
        out.append(pose)
    return out


def _pair_dists(p):
    return np.array([np.linalg.norm(p[0] - p[1]), np.linalg.norm(p[1] - p[2]), np.linalg.norm(p[2] - p[0])])


def _triples_by_area(locs):
    best = None
    best_area = 0.0
    n = len(locs)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a = triangle_area(locs[i], locs[j], locs[k])
                if a > best_area:
                    best, best_area = (i, j, k), a
    if best is not None:
        yield best


def _maps_onto(moved, target, la, lb, tol):
    d = np.linalg.norm(moved[:, None, :] - target[None, :, :], axis=2)
    if la is not None:
        d = np.where(la[:, None] == lb[None, :], d, np.inf)
    return bool(np.all(d.min(axis=1) <= tol))
