"""Geometric hash table over labeled model feature triples.

A key is the sorted label triple plus the quantized side lengths opposite
each canonically ordered entry.  Entries carry the model triple in matching
order, the object class and a grouping weight.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, permutations, product

import numpy as np

from .errors import DegenerateTriple
from .geometry import MIN_TRIANGLE_AREA, Pose, solve_rigid_batch

GAMMA_CAP = 0.9
PRIOR_SUCCESS = 1.0
PRIOR_FAILURE = 2.0
_OFFSETS = np.array(list(product((-1, 0, 1), repeat=3)), dtype=np.int64)


def opposite_sides(locs) -> np.ndarray:
    """Length of the side opposite each of three points."""
    p = np.asarray(locs, dtype=float)
    return np.linalg.norm(p[..., [1, 2, 0], :] - p[..., [2, 0, 1], :], axis=-1)


def canonical_order(labels, locs):
    """Permutation sorting entries by label, then by opposite side ascending."""
    opp = opposite_sides(locs)
    return sorted(range(3), key=lambda i: (labels[i], opp[i]))


def _check_distinct(locs):
    p = np.asarray(locs, dtype=float)
    for i, j in combinations(range(3), 2):
        if np.linalg.norm(p[i] - p[j]) <= 1e-9:
            raise DegenerateTriple("coincident feature locations")


def make_key(G3, q_d: float) -> tuple:
    """Hash key ``(s1, s2, s3, b1, b2, b3)`` of a feature triple.

    ``G3`` is a sequence of three ``(shape_class, location)`` pairs.  The key
    is the same for every ordering of the triple.
    """
    labels = [int(s) for s, _ in G3]
    locs = np.array([np.asarray(f, dtype=float) for _, f in G3])
    _check_distinct(locs)
    perm = canonical_order(labels, locs)
    opp = opposite_sides(locs[perm])
    return tuple(labels[i] for i in perm) + tuple(int(b) for b in np.floor(opp / q_d))


def beta_mean(successes: float, draws: float, a0: float = PRIOR_SUCCESS, b0: float = PRIOR_FAILURE) -> float:
    return (successes + a0) / (draws + a0 + b0)


@dataclass
class HashEntry:
    class_id: int
    model_pts: np.ndarray  # (3, 3) in key order
    gamma_raw: float
    draws: int = 0
    successes: int = 0
    gamma: float = 0.0  # effective weight after the per-key cap


class GeomHashIndex:
    """Hash table ``key -> [HashEntry]`` with capped per-key weights."""

    def __init__(self, q_d: float, gamma_cap: float = GAMMA_CAP):
        if q_d <= 0:
            raise ValueError("q_d must be > 0")
        self.q_d = float(q_d)
        self.gamma_cap = float(gamma_cap)
        self.table: dict[tuple, list[HashEntry]] = {}
        self.n_triples = 0
        self._flat = None

    # -- bookkeeping -------------------------------------------------------
    def add(self, key, entry: HashEntry):
        self.table.setdefault(tuple(key), []).append(entry)
        self._flat = None

    def renormalize(self, key):
        entries = self.table[key]
        total = sum(e.gamma_raw for e in entries)
        scale = min(1.0, self.gamma_cap / total) if total > 0 else 1.0
        for e in entries:
            e.gamma = e.gamma_raw * scale
        self._flat = None

    def renormalize_all(self):
        for key in self.table:
            self.renormalize(key)

    def entries(self):
        for key in sorted(self.table):
            for i, e in enumerate(self.table[key]):
                yield (key, i), e

    def entry(self, handle) -> HashEntry:
        key, i = handle
        return self.table[tuple(key)][i]

    def __len__(self):
        return sum(len(v) for v in self.table.values())

    @property
    def max_pair_distance(self) -> float:
        best = 0.0
        for es in self.table.values():
            for e in es:
                best = max(best, float(opposite_sides(e.model_pts).max()))
        return best

    # -- vectorized lookup ------------------------------------------------
    def flat(self):
        """Arrays for batched queries, rebuilt lazily after any change."""
        if self._flat is None:
            self._flat = _FlatIndex(self)
        return self._flat


class _FlatIndex:
    def __init__(self, index: GeomHashIndex):
        handles, cls, pts, gam = [], [], [], []
        keys = []
        for handle, e in index.entries():
            handles.append(handle)
            cls.append(e.class_id)
            pts.append(e.model_pts)
            gam.append(e.gamma)
            keys.append(handle[0])
        self.handles = handles
        self.class_id = np.array(cls, dtype=np.int64)
        self.model_pts = np.array(pts, dtype=float).reshape(-1, 3, 3)
        self.model_opp = opposite_sides(self.model_pts) if len(pts) else np.zeros((0, 3))
        self.gamma = np.array(gam, dtype=float)
        karr = np.array(keys, dtype=np.int64).reshape(-1, 6)
        self.label_base = int(karr[:, :3].max()) + 1 if len(karr) else 1
        self.bin_base = int(karr[:, 3:].max()) + 3 if len(karr) else 3
        codes, owners = [], []
        for off in _OFFSETS:
            nb = karr.copy()
            nb[:, 3:] += off
            ok = np.all(nb[:, 3:] >= 0, axis=1)
            codes.append(self.encode(nb[ok]))
            owners.append(np.flatnonzero(ok))
        codes = np.concatenate(codes) if codes else np.zeros(0, np.int64)
        owners = np.concatenate(owners) if owners else np.zeros(0, np.int64)
        order = np.lexsort((owners, codes))
        self.codes = codes[order]
        self.owner = owners[order]

    def encode(self, keys) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 6)
        sb, bb = self.label_base, self.bin_base
        code = keys[:, 0]
        for col in (1, 2):
            code = code * sb + keys[:, col]
        for col in (3, 4, 5):
            code = code * bb + keys[:, col]
        bad = np.any(keys[:, :3] >= sb, axis=1) | np.any(keys[:, 3:] >= bb, axis=1) | np.any(keys < 0, axis=1)
        return np.where(bad, -1, code)

    def lookup(self, keys):
        """Pairs ``(query_row, entry_id)`` for entries within one bin per side."""
        code = self.encode(keys)
        lo = np.searchsorted(self.codes, code, side="left")
        hi = np.searchsorted(self.codes, code, side="right")
        cnt = np.where(code >= 0, hi - lo, 0)
        rows = np.repeat(np.arange(len(code)), cnt)
        starts = np.repeat(lo, cnt)
        within = np.arange(len(rows)) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        return rows, self.owner[starts + within]


def _admissible_orders(labels, opp, tol):
    """Label-sorted orderings that could be canonical under distance noise."""
    out = []
    for perm in permutations(range(3)):
        ok = True
        for a in range(3):
            for b in range(a + 1, 3):
                la, lb = labels[perm[a]], labels[perm[b]]
                if la > lb:
                    ok = False
                elif la == lb and opp[perm[a]] > opp[perm[b]] + tol:
                    ok = False
        if ok:
            out.append(perm)
    return out


def build_index(models, q_d: float = 5.0, gamma_init: float = 0.1, order_tol=None) -> GeomHashIndex:
    """Insert every feature triple of every model under its key.

    A triple whose canonical order is ambiguous (equal labels with opposite
    sides within ``order_tol``, default ``q_d``) is inserted once per
    admissible order, so symmetric triples yield every correspondence.
    """
    if not 0 < gamma_init < 1:
        raise ValueError("gamma_init must be in (0, 1)")
    tol = q_d if order_tol is None else order_tol
    index = GeomHashIndex(q_d)
    for model in models:
        if len(model.features) < 3:
            raise ValueError(f"model {model.class_id} has fewer than 3 features")
        labels = model.feature_classes
        locs = model.feature_locations
        for tri in combinations(range(len(locs)), 3):
            p = locs[list(tri)]
            lab = [int(labels[i]) for i in tri]
            opp = opposite_sides(p)
            if 0.5 * np.linalg.norm(np.cross(p[1] - p[0], p[2] - p[0])) <= MIN_TRIANGLE_AREA:
                continue
            index.n_triples += 1
            seen = set()
            for perm in _admissible_orders(lab, opp, tol):
                key = tuple(lab[i] for i in perm) + tuple(int(b) for b in np.floor(opp[list(perm)] / q_d))
                sig = (key, tuple(perm))
                if sig in seen:
                    continue
                seen.add(sig)
                index.add(key, HashEntry(int(model.class_id), p[list(perm)].copy(), float(gamma_init)))
    index.renormalize_all()
    return index


def query(index: GeomHashIndex, G3):
    """Object hypotheses ``(class_id, pose, gamma, handle)`` drawn by a triple.

    Probes the key bin and its 26 neighbors; an entry survives when each of
    its side lengths is within ``q_d`` of the query's.  Inconsistent triples
    give an empty list.
    """
    labels = [int(s) for s, _ in G3]
    locs = np.array([np.asarray(f, dtype=float) for _, f in G3])
    _check_distinct(locs)
    perm = canonical_order(labels, locs)
    scene = locs[perm]
    scene_opp = opposite_sides(scene)
    lab = tuple(labels[i] for i in perm)
    bins = np.floor(scene_opp / index.q_d).astype(np.int64)
    hits = []
    for off in _OFFSETS:
        key = lab + tuple(int(b) for b in bins + off)
        for i, e in enumerate(index.table.get(key, ())):
            if np.all(np.abs(opposite_sides(e.model_pts) - scene_opp) <= index.q_d):
                hits.append(((key, i), e))
    if not hits:
        return []
    if 0.5 * np.linalg.norm(np.cross(scene[1] - scene[0], scene[2] - scene[0])) <= MIN_TRIANGLE_AREA:
        raise DegenerateTriple("triple is collinear or has coincident points")
    hits.sort(key=lambda h: h[0])
    rot, trans = solve_rigid_batch(np.array([e.model_pts for _, e in hits]), np.broadcast_to(scene, (len(hits), 3, 3)))
    # re-orthonormalize to machine precision for the Pose invariant check
    u, _, vt = np.linalg.svd(rot)
    rot = u @ vt
    return [(e.class_id, Pose(r, t), e.gamma, h) for (h, e), r, t in zip(hits, rot, trans)]


def match_batch(index: GeomHashIndex, labels, locs):
    """Hash matches of ``n`` triples without solving poses.

    Returns ``(rows, entry_ids, scene)`` where ``scene`` holds each query
    triple in key order, so ``fl.model_pts[e]`` maps onto ``scene[r]``.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, 3)
    locs = np.asarray(locs, dtype=float).reshape(-1, 3, 3)
    fl = index.flat()
    if len(labels) == 0 or len(fl.class_id) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, 3, 3))
    opp = opposite_sides(locs)
    order = _canonical_batch(labels, opp)
    rowsel = np.arange(len(labels))[:, None]
    lab = labels[rowsel, order]
    scene = locs[rowsel, order]
    sopp = opp[rowsel, order]
    keys = np.concatenate([lab, np.floor(sopp / index.q_d).astype(np.int64)], axis=1)
    rows, ent = fl.lookup(keys)
    ok = np.all(np.abs(fl.model_opp[ent] - sopp[rows]) <= index.q_d, axis=1)
    return rows[ok], ent[ok], scene


def query_batch(index: GeomHashIndex, labels, locs):
    """Vectorized :func:`query` over ``n`` triples.

    ``labels`` is ``(n, 3)``, ``locs`` ``(n, 3, 3)``; triples must already be
    non-degenerate.  Returns ``(rows, entry_ids, rotations, translations)``
    with ``entry_ids`` indexing ``index.flat()``.
    """
    rows, ent, scene = match_batch(index, labels, locs)
    if len(rows) == 0:
        return rows, ent, np.zeros((0, 3, 3)), np.zeros((0, 3))
    rot, trans = solve_rigid_batch(index.flat().model_pts[ent], scene[rows])
    return rows, ent, rot, trans


def _canonical_batch(labels, opp):
    """Row-wise stable sort by (label, opposite side)."""
    by_side = np.argsort(opp, axis=1, kind="stable")
    lab = np.take_along_axis(labels, by_side, axis=1)
    by_label = np.argsort(lab, axis=1, kind="stable")
    return np.take_along_axis(by_side, by_label, axis=1)


def update_weights(index: GeomHashIndex, handle, success: bool) -> float:
    """Count a draw of the entry and refresh its grouping weight."""
    key, i = handle
    key = tuple(key)
    e = index.table[key][i]
    e.draws += 1
    if success:
        e.successes += 1
    e.gamma_raw = beta_mean(e.successes, e.draws)
    index.renormalize(key)
    return e.gamma
