"""Hypothesize-and-test recognition ordered by truncated probability.

Feature candidates are scored by point-relation densities, candidate
triples draw object hypotheses from the hash index, and hypotheses are
tested with the generative likelihood in order of decreasing score
``ln(gamma) + Phi1 + Phi2 + Phi3`` until one is accepted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import MIN_TRIANGLE_AREA, Pose, solve_rigid_batch
from .hashing import match_batch, update_weights
from .likelihood import log_likelihood
from .mesh import OUTSIDE, classify_points
from .models import model_symmetries
from .relation import NO_EVIDENCE, phi_all

ACCEPTED = "accepted"
BEST_EFFORT = "best_effort"
NONE_FOUND = "none_found"


@dataclass(frozen=True)
class FeatureCandidate:
    s: int
    f: np.ndarray
    phi: float
    point: int = -1  # index into the scan, -1 if not from a scan


@dataclass(frozen=True)
class Hypothesis:
    c: int
    pose: Pose
    tp: float
    source: tuple  # candidate indices of the drawing triple
    gamma: float
    handle: tuple = None


@dataclass(frozen=True)
class SearchConfig:
    xi: float = 0.0
    theta: float = None  # None: use LikelihoodParams.theta
    max_hypotheses: int = None  # None: evaluate every hypothesis
    delta_rot: float = math.radians(1.0)
    delta_t: float = 2.0
    max_triple_distance: float = None  # None: index span + 2 q_d
    fallback: bool = False
    merge_symmetric: bool = True  # poses equal up to a model symmetry are duplicates

    def __post_init__(self):
        if self.max_hypotheses is not None and self.max_hypotheses < 1:
            raise ValueError("max_hypotheses must be >= 1")
        if self.delta_rot < 0 or self.delta_t < 0:
            raise ValueError("dedup thresholds must be >= 0")


@dataclass
class RecognitionResult:
    outcome: str
    c: int = None
    pose: Pose = None
    L: float = None
    tp: float = None
    evaluations: int = 0
    log: list = field(default_factory=list)  # (tp, L, c) in evaluation order
    n_candidates: int = 0
    n_hypotheses: int = 0

    @property
    def found(self) -> bool:
        return self.outcome != NONE_FOUND


def select_candidates(scan, dm, xi, seed: int, phi=None):
    """Feature values with Φ above ``xi`` (``None`` or ``-inf`` keeps all).

    Sorted by Φ descending, ties by point index then shape class.
    """
    if phi is None:
        phi = phi_all(scan, dm, seed)
    m, n = phi.shape
    s_idx, p_idx = np.meshgrid(np.arange(1, m + 1), np.arange(n), indexing="ij")
    vals, s_idx, p_idx = phi.ravel(), s_idx.ravel(), p_idx.ravel()
    if xi is not None and xi != NO_EVIDENCE:
        keep = vals > xi
        vals, s_idx, p_idx = vals[keep], s_idx[keep], p_idx[keep]
    order = np.lexsort((s_idx, p_idx, -vals))
    pts = scan.points
    return [FeatureCandidate(int(s_idx[i]), pts[p_idx[i]], float(vals[i]), int(p_idx[i])) for i in order]


def candidate_triples(locs, max_dist):
    """Index triples ``i < j < k`` of distinct, non-collinear, close candidates."""
    locs = np.asarray(locs, dtype=float).reshape(-1, 3)
    n = len(locs)
    if n < 3:
        return np.zeros((0, 3), dtype=np.int64)
    d = np.linalg.norm(locs[:, None] - locs[None], axis=2)
    ok = (d <= max_dist) & (d > 1e-9)
    out = []
    for i in range(n - 2):
        js = np.flatnonzero(ok[i, i + 1:]) + i + 1
        if len(js) < 2:
            continue
        sub = np.triu(ok[np.ix_(js, js)], 1)
        a, b = np.nonzero(sub)
        if len(a):
            out.append(np.column_stack([np.full(len(a), i), js[a], js[b]]))
    if not out:
        return np.zeros((0, 3), dtype=np.int64)
    tri = np.concatenate(out)
    p = locs[tri]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    return tri[area > MIN_TRIANGLE_AREA]


POSE_KEY_DECIMALS = 9


def pose_sort_key(rot, trans):
    """Row-major rotation then translation, rounded so that solver noise
    cannot reorder equal poses."""
    flat = np.concatenate([np.reshape(rot, (-1, 9)), np.reshape(trans, (-1, 3))], axis=1)
    return np.round(flat, POSE_KEY_DECIMALS) + 0.0  # + 0.0 folds -0.0 into 0.0


def _order_key(c, rot, trans, tp):
    """Sort order: tp descending, then class id, then pose lexicographically."""
    pk = pose_sort_key(rot, trans)
    keys = [pk[:, i] for i in range(11, -1, -1)] + [c, -tp]
    return np.lexsort(keys)


class _Deduper:
    """Greedy duplicate skipping against hypotheses kept so far.

    A kept pose is registered under each of its symmetric variants, so a
    pose that places the object identically up to a model symmetry counts as
    a duplicate.
    """

    def __init__(self, delta_rot, delta_t, symmetries=None):
        self.cell = max(delta_t, 1e-9)
        self.delta_t = delta_t
        self.cos_lim = math.cos(delta_rot)
        self.sym = symmetries or {}
        self.grid = {}  # (c, cell) -> indices into the kept arrays
        self.rot = np.zeros((64, 9))
        self.trans = np.zeros((64, 3))
        self.n = 0

    def _variants(self, c, rot, trans):
        syms = self.sym.get(c)
        if not syms:
            return [(rot, trans)]
        return [(rot @ q.rotation, rot @ q.translation + trans) for q in syms]

    def _store(self, rot, trans) -> int:
        if self.n == len(self.rot):
            self.rot = np.concatenate([self.rot, np.zeros_like(self.rot)])
            self.trans = np.concatenate([self.trans, np.zeros_like(self.trans)])
        self.rot[self.n] = rot.ravel()
        self.trans[self.n] = trans
        self.n += 1
        return self.n - 1

    def offer(self, c, rot, trans) -> bool:
        kx, ky, kz = (int(v) for v in np.floor(trans / self.cell))
        near = []
        for dx, dy, dz in _NEIGHBORS:
            near.extend(self.grid.get((c, kx + dx, ky + dy, kz + dz), ()))
        if near:
            d = self.trans[near] - trans
            close = np.einsum("ij,ij->i", d, d) < self.delta_t ** 2
            # relative rotation angle below delta_rot
            if close.any() and np.any((self.rot[near][close] @ rot.ravel() - 1.0) / 2.0 > self.cos_lim):
                return False
        for r, t in self._variants(c, rot, trans):
            k = np.floor(t / self.cell).astype(np.int64)
            self.grid.setdefault((c, int(k[0]), int(k[1]), int(k[2])), []).append(self._store(r, t))
        return True


_NEIGHBORS = [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)]


class HypothesisStream:
    """Hypotheses in score order, posed and deduplicated on demand.

    Poses are solved chunk by chunk, so a search that stops early never
    pays for the tail.  Iterating twice replays the same sequence.
    """

    CHUNK = 2048

    def __init__(self, tri, rows, ent, scene, tp, index, delta_rot, delta_t, symmetries=None):
        order = np.argsort(-tp, kind="stable")
        self._tri = tri
        self._rows, self._ent, self._tp = rows[order], ent[order], tp[order]
        self._scene = scene
        self._fl = index.flat()
        self._delta = (delta_rot, delta_t)
        self._cache = []
        self._pos = 0
        self._dedupe = _Deduper(delta_rot, delta_t, symmetries)
        self.n_drawn = len(order)

    def _next_chunk(self):
        n = len(self._tp)
        if self._pos >= n:
            return False
        stop = min(self._pos + self.CHUNK, n)
        # never split a run of equal scores, their order depends on the pose
        while stop < n and self._tp[stop] == self._tp[stop - 1]:
            stop += 1
        sl = slice(self._pos, stop)
        self._pos = stop
        rows, ent, tp = self._rows[sl], self._ent[sl], self._tp[sl]
        fl = self._fl
        rot, trans = solve_rigid_batch(fl.model_pts[ent], self._scene[rows])
        cls = fl.class_id[ent]
        order = _order_key(cls, rot, trans, tp)
        for i in order:
            c = int(cls[i])
            if not self._dedupe.offer(c, rot[i], trans[i]):
                continue
            u, _, vt = np.linalg.svd(rot[i])
            self._cache.append(Hypothesis(c, Pose(u @ vt, trans[i]), float(tp[i]),
                                          tuple(int(x) for x in self._tri[rows[i]]),
                                          float(fl.gamma[ent[i]]), fl.handles[ent[i]]))
        return True

    def __iter__(self):
        k = 0
        while True:
            while k >= len(self._cache):
                if not self._next_chunk():
                    return
            yield self._cache[k]
            k += 1

    @property
    def n_emitted(self) -> int:
        return len(self._cache)


def _empty_stream(index, cfg):
    z = np.zeros(0, np.int64)
    return HypothesisStream(np.zeros((0, 3), np.int64), z, z, np.zeros((0, 3, 3)), np.zeros(0),
                            index, cfg.delta_rot, cfg.delta_t)


def hypothesis_stream(candidates, index, cfg: SearchConfig, symmetries=None) -> HypothesisStream:
    """Lazy form of :func:`generate_hypotheses`."""
    if len(candidates) < 3 or len(index) == 0:
        return _empty_stream(index, cfg)
    locs = np.array([c.f for c in candidates], dtype=float)
    labels = np.array([c.s for c in candidates], dtype=np.int64)
    phis = np.array([c.phi for c in candidates], dtype=float)
    max_d = cfg.max_triple_distance
    if max_d is None:
        max_d = index.max_pair_distance + 2.0 * index.q_d
    tri = candidate_triples(locs, max_d)
    if len(tri) == 0:
        return _empty_stream(index, cfg)
    rows, ent, scene = match_batch(index, labels[tri], locs[tri])
    with np.errstate(divide="ignore"):
        tp = np.log(index.flat().gamma[ent]) + phis[tri[rows]].sum(axis=1)
    finite = np.isfinite(tp)
    return HypothesisStream(tri, rows[finite], ent[finite], scene, tp[finite],
                            index, cfg.delta_rot, cfg.delta_t, symmetries)


def generate_hypotheses(candidates, index, cfg: SearchConfig, symmetries=None):
    """Object hypotheses drawn by candidate triples, best score first.

    ``symmetries`` maps a class id to its model symmetries (see
    :func:`symmetry_table`); poses equal up to one of them are duplicates.
    """
    return list(hypothesis_stream(candidates, index, cfg, symmetries))


def symmetry_table(models):
    return {m.class_id: model_symmetries(m) for m in models}


def _by_class(models):
    return {m.class_id: m for m in models}


def evaluate_hypotheses(scan, hypotheses, models, lp, cfg: SearchConfig, index=None, learn=False):
    """Test hypotheses in order; stop at the first with ``L > theta``."""
    theta = lp.theta if cfg.theta is None else cfg.theta
    missing = [m for m in models if m.class_id not in lp.ln_n]
    if missing:
        lp = lp.with_normalizations(missing, scan.gaze)
    lookup = _by_class(models)
    log = []
    best = None
    for h in hypotheses:
        if cfg.max_hypotheses is not None and len(log) >= cfg.max_hypotheses:
            break
        L, _ = log_likelihood(scan, lookup[h.c], h.pose, lp)
        log.append((h.tp, L, h.c))
        ok = L > theta
        if learn and index is not None and h.handle is not None:
            update_weights(index, h.handle, ok)
        if best is None or L > best[1]:
            best = (h, L)
        if ok:
            return RecognitionResult(ACCEPTED, h.c, h.pose, L, h.tp, len(log), log)
    if cfg.fallback and best is not None:
        h, L = best
        return RecognitionResult(BEST_EFFORT, h.c, h.pose, L, h.tp, len(log), log)
    return RecognitionResult(NONE_FOUND, evaluations=len(log), log=log)


def recognize(scan, models, dm, index, lp, cfg: SearchConfig, seed: int = 0, candidates=None,
              learn=False, symmetries=None):
    """Full search on one scan; ``candidates`` may be supplied precomputed."""
    if candidates is None:
        candidates = select_candidates(scan, dm, cfg.xi, seed)
    if symmetries is None and cfg.merge_symmetric:
        symmetries = symmetry_table(models)
    hyps = hypothesis_stream(candidates, index, cfg, symmetries if cfg.merge_symmetric else None)
    res = evaluate_hypotheses(scan, hyps, models, lp, cfg, index=index, learn=learn)
    res.n_candidates = len(candidates)
    res.n_hypotheses = hyps.n_emitted
    return res


def remove_explained(scan, model, pose, lp):
    """Scan without the points on the visible shell of, or inside, the object."""
    labels, _ = classify_points(model.mesh, pose, scan.points, scan.gaze, lp.delta_s, lp.self_occlusion)
    return scan.subset(labels == OUTSIDE)


def recognize_sequential(scan, models, dm, index, lp, cfg: SearchConfig, seed: int = 0, max_objects: int = 2):
    """Recognize, delete the recognized object's points, and restart."""
    if max_objects < 1:
        raise ValueError("max_objects must be >= 1")
    lookup = _by_class(models)
    lp = lp.with_normalizations([m for m in models if m.class_id not in lp.ln_n], scan.gaze)
    syms = symmetry_table(models) if cfg.merge_symmetric else None
    results = []
    current = scan
    for k in range(max_objects):
        res = recognize(current, models, dm, index, lp, cfg, seed + k, symmetries=syms)
        results.append(res)
        if not res.found:
            break
        current = remove_explained(current, lookup[res.c], res.pose, lp)
        if len(current) < 3 and k + 1 < max_objects:
            # too few points left to draw a triple
            results.append(RecognitionResult(NONE_FOUND))
            break
    return results
