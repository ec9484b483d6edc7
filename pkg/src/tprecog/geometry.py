"""Rigid poses, range scans and the three-point alignment solver.

Points are plain ``numpy`` arrays of shape ``(3,)`` (or ``(n, 3)`` for sets),
lengths in millimetres.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateTriple

MIN_TRIANGLE_AREA = 1e-6  # mm^2


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


_EYE = np.eye(3)


@dataclass(frozen=True)
class Pose:
    """Rigid transform ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose must be finite")
        # same tolerance as np.allclose(r @ r.T, I, atol=1e-9), without its overhead
        if np.any(np.abs(r @ r.T - _EYE) > 1e-9 + 1e-5 * _EYE) or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation must be orthonormal with determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, q, t) -> "Pose":
        return cls(quat_to_matrix(q), t)

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self o other`` (apply ``other`` first)."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def apply(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.rotation.T + self.translation

    def quaternion(self) -> np.ndarray:
        return matrix_to_quat(self.rotation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


def apply_pose(pose: Pose, pt) -> np.ndarray:
    """Map a point (or an ``(n, 3)`` array of points) through ``pose``."""
    return pose.apply(pt)


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    k = unit(axis)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = unit(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(r) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] > r[2, 2]:
        s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def rotation_angle(r) -> float:
    """Angle in radians of the rotation ``r``, accurate near 0 and near pi."""
    r = np.asarray(r, dtype=float)
    sin = 0.5 * np.linalg.norm([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    cos = (np.trace(r) - 1.0) / 2.0
    return float(np.arctan2(sin, cos))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat_to_matrix(q)


def triangle_area(p0, p1, p2) -> float:
    return 0.5 * float(np.linalg.norm(np.cross(np.subtract(p1, p0), np.subtract(p2, p0))))


def _kabsch(src: np.ndarray, dst: np.ndarray):
    """Batched least-squares rotation/translation for ``(n, k, 3)`` point sets."""
    cs = src.mean(axis=1, keepdims=True)
    cd = dst.mean(axis=1, keepdims=True)
    h = np.einsum("nki,nkj->nij", src - cs, dst - cd)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(np.einsum("nji,nkj->nik", vt, u)))
    d[d == 0] = 1.0
    diag = np.ones((len(src), 3))
    diag[:, 2] = d
    rot = np.einsum("nji,nj,nkj->nik", vt, diag, u)
    trans = cd[:, 0, :] - np.einsum("nij,nj->ni", rot, cs[:, 0, :])
    return rot, trans


def solve_rigid_batch(src, dst):
    """Vectorized :func:`solve_rigid_from_triple` without degeneracy checks.

    Returns ``(rotations, translations)`` of shapes ``(n, 3, 3)`` and ``(n, 3)``.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    return _kabsch(src, dst)


def solve_rigid_from_triple(src, dst) -> Pose:
    """Least-squares rigid pose mapping the three ``src`` points onto ``dst``.

    The rotation is the proper rotation closest in Frobenius norm to the
    cross-covariance of the centered triples, so small shape differences
    between the two triples are orthogonalized away.
    """
    src = np.asarray(src, dtype=float).reshape(3, 3)
    dst = np.asarray(dst, dtype=float).reshape(3, 3)
    for tri in (src, dst):
        if triangle_area(*tri) <= MIN_TRIANGLE_AREA:
            raise DegenerateTriple("triple is collinear or has coincident points")
    rot, trans = _kabsch(src[None], dst[None])
    r = rot[0]
    # re-orthonormalize to machine precision for the Pose invariant check
    u, _, vt = np.linalg.svd(r)
    return Pose(u @ vt, trans[0])


@dataclass(frozen=True)
class Placement:
    """Ground-truth object placement in a synthetic scan."""

    class_id: int
    pose: Pose


@dataclass(frozen=True)
class TrueFeature:
    """Ground-truth feature value of a synthetic scan (posed location)."""

    shape_class: int
    location: np.ndarray
    visible: bool
    class_id: int = 0


@dataclass(frozen=True)
class RangeScan:
    """One view of a scene: data points plus the sensor gaze direction."""

    points: np.ndarray
    gaze: np.ndarray
    placements: tuple = ()
    features: tuple = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("scan points must be finite")
        g = np.array(self.gaze, dtype=float).reshape(3)
        if abs(np.linalg.norm(g) - 1.0) > 1e-9:
            raise ValueError("gaze must be a unit vector")
        pts.flags.writeable = False
        g.flags.writeable = False
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "gaze", g)
        object.__setattr__(self, "placements", tuple(self.placements))
        object.__setattr__(self, "features", tuple(self.features))

    def __len__(self):
        return len(self.points)

    def subset(self, mask) -> "RangeScan":
        return RangeScan(self.points[mask], self.gaze, self.placements, self.features, dict(self.meta))

    def visible_features(self):
        return [f for f in self.features if f.visible]


def dedupe_points(pts: np.ndarray) -> np.ndarray:
    """Drop exact duplicate rows, keeping first occurrences in order."""
    if len(pts) == 0:
        return pts
    _, idx = np.unique(pts, axis=0, return_index=True)
    return pts[np.sort(idx)]
