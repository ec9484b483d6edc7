"""Synthetic single-view range scans drawn from the generative surface model.

Surface points are drawn on sensor-facing triangles with intensity
proportional to ``area * exp(2a(cos(phi) - 1))``, hidden points are removed
by ray casting toward the sensor, and a depth buffer keeps the nearest point
per pixel so the result is 2.5-D.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyView
from .geometry import Placement, Pose, RangeScan, TrueFeature, dedupe_points, unit
from .mesh import ray_hits


@dataclass(frozen=True)
class SynthParams:
    a: float = 1.0
    b: float = 1e-6
    noise_sigma: float = 0.0
    outlier_count: int = 0
    outlier_fraction: float = 0.0  # extra outliers per visible surface point
    pixel_pitch: float = 2.0
    surface_point_budget: int = 20000
    rng_seed: int = 0

    def __post_init__(self):
        # a = 0 is accepted as the flat-intensity limit
        if self.a < 0:
            raise ValueError("a must be >= 0")
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.outlier_count < 0:
            raise ValueError("outlier_count must be >= 0")
        if self.outlier_fraction < 0:
            raise ValueError("outlier_fraction must be >= 0")
        if self.pixel_pitch <= 0:
            raise ValueError("pixel_pitch must be > 0")
        if self.surface_point_budget < 1:
            raise ValueError("surface_point_budget must be >= 1")


@dataclass(frozen=True)
class ScenePlacement:
    model: object  # ObjectModel
    pose: Pose


def falloff(cos_phi, a: float):
    """Surface point intensity ``f(phi) = exp(2a(cos phi - 1))``."""
    return np.exp(2.0 * a * (np.asarray(cos_phi) - 1.0))


def view_basis(gaze):
    """Two unit vectors spanning the image plane orthogonal to ``gaze``."""
    g = unit(gaze)
    helper = np.array([1.0, 0.0, 0.0]) if abs(g[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit(np.cross(g, helper))
    e2 = np.cross(g, e1)
    return e1, e2


def pixel_ids(points, gaze, pitch):
    e1, e2 = view_basis(gaze)
    u = np.floor(points @ e1 / pitch).astype(np.int64)
    v = np.floor(points @ e2 / pitch).astype(np.int64)
    return u, v


def depth_buffer(points, gaze, pitch):
    """Indices of the nearest point (along gaze) in every occupied pixel."""
    if len(points) == 0:
        return np.zeros(0, dtype=np.int64)
    u, v = pixel_ids(points, gaze, pitch)
    depth = points @ np.asarray(gaze)
    order = np.lexsort((depth, v, u))
    uu, vv = u[order], v[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = (uu[1:] != uu[:-1]) | (vv[1:] != vv[:-1])
    return np.sort(order[first])


def _posed(placement):
    mesh = placement.model.mesh
    pose = placement.pose
    verts = pose.apply(mesh.vertices)
    t = mesh.triangles
    normals = mesh.normals @ pose.rotation.T
    return verts[t[:, 0]], verts[t[:, 1]], verts[t[:, 2]], normals, mesh.areas


def _split_budget(weights, budget):
    weights = np.asarray(weights, dtype=float)
    if weights.sum() <= 0:
        return np.zeros(len(weights), dtype=np.int64)
    share = budget * weights / weights.sum()
    counts = np.floor(share).astype(np.int64)
    rest = budget - counts.sum()
    order = np.argsort(-(share - counts), kind="stable")
    counts[order[:rest]] += 1
    return counts


def compose_scene(placements, params: SynthParams, gaze=(0.0, 0.0, 1.0)) -> RangeScan:
    """Sample a multi-object scene through one shared visibility and depth pass."""
    if len(placements) < 1:
        raise ValueError("need at least one placement")
    g = unit(gaze)
    rng = np.random.default_rng(params.rng_seed)
    posed = [_posed(p) for p in placements]
    all_a = np.concatenate([p[0] for p in posed])
    all_b = np.concatenate([p[1] for p in posed])
    all_c = np.concatenate([p[2] for p in posed])

    weights = []
    for a_, b_, c_, nrm, area in posed:
        cos = nrm @ g
        w = np.where(cos > 0, area * falloff(np.clip(cos, 0, 1), params.a), 0.0)
        weights.append(w)
    counts = _split_budget([w.sum() for w in weights], params.surface_point_budget)

    samples = []
    for (a_, b_, c_, _, _), w, k in zip(posed, weights, counts):
        if k == 0:
            continue
        tri = rng.choice(len(w), size=k, p=w / w.sum())
        r1 = np.sqrt(rng.random(k))
        r2 = rng.random(k)
        pts = ((1 - r1)[:, None] * a_[tri] + (r1 * (1 - r2))[:, None] * b_[tri]
               + (r1 * r2)[:, None] * c_[tri])
        samples.append(pts)
    pts = np.concatenate(samples) if samples else np.zeros((0, 3))
    scale = float(np.max(np.ptp(np.concatenate([all_a, all_b, all_c]), axis=0)))
    if len(pts):
        visible = ~ray_hits(pts, -g, all_a, all_b, all_c, tmin=1e-9 * max(scale, 1.0))
        pts = pts[visible]
    pts = pts[depth_buffer(pts, g, params.pixel_pitch)]
    if len(pts) == 0:
        raise EmptyView("no visible surface point")
    clean = pts
    if params.noise_sigma > 0:
        pts = pts + rng.normal(scale=params.noise_sigma, size=pts.shape)
    n_out = params.outlier_count + int(round(params.outlier_fraction * len(clean)))
    if n_out > 0:
        verts = np.concatenate([all_a, all_b, all_c])
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        pad = 0.05 * (hi - lo)
        lo, hi = lo - pad, hi + pad
        out = lo + (hi - lo) * rng.random((n_out, 3))
        pts = np.concatenate([pts, out])
    pts = dedupe_points(pts)

    feats = []
    radius = max(2.0 * params.pixel_pitch, 3.0)
    for pl in placements:
        model = pl.model
        if not model.features:
            continue
        locs = pl.pose.apply(model.feature_locations)
        unoccluded = ~ray_hits(locs, -g, all_a, all_b, all_c, tmin=1e-6 * max(scale, 1.0))
        for (s, _), loc, ok in zip(model.features, locs, unoccluded):
            support = int(np.count_nonzero(np.linalg.norm(clean - loc, axis=1) <= radius))
            feats.append(TrueFeature(s, loc, bool(ok and support >= 3), model.class_id))
    meta = {"n_surface": int(len(clean)), "n_outliers": int(n_out), "pixel_pitch": params.pixel_pitch}
    return RangeScan(pts, g, tuple(Placement(p.model.class_id, p.pose) for p in placements), tuple(feats), meta)


def sample_object_scan(model, pose: Pose, gaze, params: SynthParams) -> RangeScan:
    """Synthetic scan of a single posed object."""
    return compose_scene([ScenePlacement(model, pose)], params, gaze)
