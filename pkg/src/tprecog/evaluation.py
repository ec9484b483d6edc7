"""Scene suites, density training from labeled scans, rank reports and recognition metrics."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import rankdata

from .errors import EmptyClass, EmptyView
from .geometry import Pose, rotation_about, rotation_angle, unit
from .relation import phi_all, sample_tetra_batch, train_density
from .search import recognize_sequential, symmetry_table
from .synth import ScenePlacement, compose_scene


# -- scenes ------------------------------------------------------------------

def oblique_gaze(rng, elevation_deg=(35.0, 60.0)) -> np.ndarray:
    """Gaze looking down at a random azimuth and an elevation in the given range."""
    az = rng.uniform(0.0, 2.0 * np.pi)
    el = np.radians(rng.uniform(*elevation_deg))
    return unit([-np.cos(el) * np.cos(az), -np.cos(el) * np.sin(az), -np.sin(el)])


def _resting(model, yaw, xy):
    lo, hi = model.mesh.bounds()
    return Pose(rotation_about([0, 0, 1], yaw), [xy[0], xy[1], -lo[2]])


def two_object_scene(first, second, params, seed: int, stack_prob: float = 0.5):
    """``first`` rests on the ground; ``second`` is stacked on it or stands beside it.

    Both get random yaw, and the view is a random oblique gaze.  Stacked
    placements offset the upper object by up to 25 mm.
    """
    rng = np.random.default_rng(seed)
    y1, y2 = rng.uniform(0.0, 2.0 * np.pi, 2)
    p1 = _resting(first, y1, (0.0, 0.0))
    lo1, hi1 = first.mesh.bounds()
    lo2, hi2 = second.mesh.bounds()
    if rng.random() < stack_prob:
        off = rng.uniform(-25.0, 25.0, 2)
        p2 = Pose(rotation_about([0, 0, 1], y2), [off[0], off[1], hi1[2] - lo1[2] - lo2[2]])
    else:
        reach = 0.5 * (np.linalg.norm((hi1 - lo1)[:2]) + np.linalg.norm((hi2 - lo2)[:2]))
        ang, d = rng.uniform(0.0, 2.0 * np.pi), reach + rng.uniform(10.0, 50.0)
        p2 = _resting(second, y2, (d * np.cos(ang), d * np.sin(ang)))
    gaze = oblique_gaze(rng)
    return compose_scene([ScenePlacement(first, p1), ScenePlacement(second, p2)], params, gaze)


def single_object_scene(model, params, seed: int):
    """One object resting with random yaw under a random oblique gaze."""
    rng = np.random.default_rng(seed)
    pose = _resting(model, rng.uniform(0.0, 2.0 * np.pi), (0.0, 0.0))
    return compose_scene([ScenePlacement(model, pose)], params, oblique_gaze(rng))


# -- training ----------------------------------------------------------------

def labeled_centers(scan, radius: float, margin: float, n_nonfeature: int, rng):
    """``{s: point indices}`` near visible true features, plus class 0 far from all features."""
    tree = cKDTree(scan.points)
    out = {}
    for f in scan.visible_features():
        idx = tree.query_ball_point(f.location, radius)
        if idx:
            out.setdefault(f.shape_class, []).extend(sorted(idx))
    if scan.features:
        floc = np.array([f.location for f in scan.features])
        d, _ = cKDTree(floc).query(scan.points)
        far = np.flatnonzero(d > margin)
    else:
        far = np.arange(len(scan.points))
    if len(far):
        out[0] = sorted(rng.choice(far, size=min(n_nonfeature, len(far)), replace=False).tolist())
    return {s: np.array(v, dtype=np.int64) for s, v in out.items()}


def collect_samples(scans, rel_cfg, radius, margin, n_nonfeature, sample_len, seed: int):
    """Δ-samples per shape class from labeled scans."""
    rng = np.random.default_rng(seed)
    samples = {}
    for scan in scans:
        tree = cKDTree(scan.points)
        for s, idx in sorted(labeled_centers(scan, radius, margin, n_nonfeature, rng).items()):
            ts = sample_tetra_batch(scan.points, scan.points[idx], rel_cfg, scan.gaze, rng, tree=tree,
                                    sample_len=sample_len)
            samples.setdefault(s, []).append(ts.deltas)
    return {s: np.concatenate(v) for s, v in samples.items()}


def train_from_scans(scans, cfg, m: int, seed: int = 0):
    """Density model over shape classes ``0..m`` from labeled scans."""
    rel = cfg.relation_config()
    samples = collect_samples(scans, rel, cfg.feature_radius, cfg.nonfeature_margin,
                              cfg.nonfeature_per_scan, cfg.train_sample_len, seed)
    for s in range(m + 1):
        if s not in samples or len(samples[s]) == 0:
            raise EmptyClass(f"no training samples for class {s}")
    return train_density({s: samples[s] for s in range(m + 1)}, rel, cfg.alpha)


# -- rank reports ------------------------------------------------------------

@dataclass
class RankReport:
    name: str
    ranks: np.ndarray  # normalized ranks of true feature values, 1 = best
    edges: np.ndarray
    counts: np.ndarray

    @property
    def median(self) -> float:
        return float(np.median(self.ranks)) if len(self.ranks) else float("nan")

    def fraction_below(self, level: float = 0.6) -> float:
        return float(np.mean(self.ranks < level)) if len(self.ranks) else float("nan")


def normalized_ranks(scores) -> np.ndarray:
    """Ranks of all values scaled to ``[0, 1]``; the highest score gets 1, ties share the mean."""
    flat = np.asarray(scores, dtype=float).ravel()
    if len(flat) == 1:
        return np.ones(1)
    return (rankdata(flat, method="average") - 1.0) / (len(flat) - 1.0)


def true_feature_ranks(scores, scan, radius: float) -> np.ndarray:
    """Normalized ranks of the feature values ``(s, nearest data point)`` of visible true features.

    ``scores`` has one row per shape class ``1..m`` and one column per point.
    """
    scores = np.asarray(scores, dtype=float)
    ranks = normalized_ranks(scores).reshape(scores.shape)
    tree = cKDTree(scan.points)
    out = []
    for f in scan.visible_features():
        d, j = tree.query(f.location)
        if d <= radius and 1 <= f.shape_class <= scores.shape[0]:
            out.append(ranks[f.shape_class - 1, j])
    return np.array(out)


def rank_report(name, ranks, n_bins: int = 10) -> RankReport:
    ranks = np.asarray(ranks, dtype=float)
    counts, edges = np.histogram(ranks, bins=n_bins, range=(0.0, 1.0))
    return RankReport(name, ranks, edges, counts)


def write_rank_csv(path, report: RankReport):
    total = max(int(report.counts.sum()), 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lo", "bin_hi", "count", "frequency"])
        for lo, hi, c in zip(report.edges[:-1], report.edges[1:], report.counts):
            w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c), f"{c / total:.6f}"])


def phi_scores(scan, dm, seed: int):
    return phi_all(scan, dm, seed)


# -- recognition -------------------------------------------------------------

def pose_error(pose: Pose, truth: Pose, symmetries=(Pose.identity(),)):
    """``(degrees, mm)`` to the closest symmetric variant of ``truth``."""
    best = None
    for q in symmetries:
        t = truth.compose(q)
        e = (np.degrees(rotation_angle(pose.rotation.T @ t.rotation)),
             float(np.linalg.norm(pose.translation - t.translation)))
        if best is None or (e[0], e[1]) < best:
            best = e
    return best


@dataclass
class RecognitionRecord:
    scene: int
    n_points: int
    found: bool
    c: int
    rot_err: float
    trans_err: float
    success: bool
    evaluations: int
    wall_time: float
    second_found: bool
    second_success: bool


def _match(res, scan, syms, rot_tol, trans_tol, exclude=None):
    """Errors against the same-class ground truth placement (``exclude``: index to skip)."""
    best = (float("nan"), float("nan"), False, None)
    for k, pl in enumerate(scan.placements):
        if pl.class_id != res.c or k == exclude:
            continue
        r, t = pose_error(res.pose, pl.pose, syms.get(res.c, (Pose.identity(),)))
        ok = r < rot_tol and t < trans_tol
        if best[3] is None or ok > best[2] or (ok == best[2] and r + t < best[0] + best[1]):
            best = (r, t, ok, k)
    return best


def evaluate_scene(k, scan, models, dm, index, lp, scfg, cfg, symmetries=None):
    syms = symmetries if symmetries is not None else symmetry_table(models)
    t0 = time.perf_counter()
    results = recognize_sequential(scan, models, dm, index, lp, scfg, seed=k, max_objects=cfg.max_objects)
    wall = time.perf_counter() - t0
    first = results[0]
    rot = trans = float("nan")
    ok = second_found = second_ok = False
    if first.found:
        rot, trans, ok, which = _match(first, scan, syms, cfg.rot_tol_deg, cfg.trans_tol)
        if len(results) > 1 and results[1].found:
            second_found = True
            _, _, second_ok, _ = _match(results[1], scan, syms, cfg.rot_tol_deg, cfg.trans_tol, exclude=which)
    return RecognitionRecord(k, len(scan.points), first.found, first.c if first.found else -1, rot, trans,
                             bool(ok), sum(r.evaluations for r in results), wall, second_found, bool(second_ok))


RECORD_FIELDS = list(RecognitionRecord.__dataclass_fields__)


def write_records_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RECORD_FIELDS)
        for r in records:
            row = []
            for name in RECORD_FIELDS:
                v = getattr(r, name)
                row.append(f"{v:.4f}" if isinstance(v, float) else (int(v) if isinstance(v, bool) else v))
            w.writerow(row)


@dataclass
class SuiteSummary:
    n_scenes: int
    n_found: int
    success_rate: float
    second_rate: float
    max_wall_time: float


def summarize(records) -> SuiteSummary:
    n = len(records)
    found = [r for r in records if r.found]
    ok = [r for r in records if r.success]
    second = [r for r in ok if r.second_success]
    return SuiteSummary(n, len(found), len(ok) / n if n else float("nan"),
                        len(second) / len(ok) if ok else float("nan"),
                        max((r.wall_time for r in records), default=0.0))


def safe_scene(make, seed, tries: int = 5):
    """Retry synthesis with shifted seeds when a view sees nothing."""
    for i in range(tries):
        try:
            return make(seed + 7919 * i)
        except EmptyView:
            continue
    raise EmptyView(f"no visible points for seed {seed}")
