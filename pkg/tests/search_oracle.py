"""Exhaustive reference for the hypothesis evaluation order, used by the search tests."""
import itertools
import math
import time

import numpy as np

from tprecog.geometry import Pose, rotation_about
from tprecog.hashing import build_index, query
from tprecog.likelihood import LikelihoodParams, log_likelihood
from tprecog.search import FeatureCandidate, SearchConfig, pose_sort_key, recognize, symmetry_table
from tprecog.synth import ScenePlacement, SynthParams, compose_scene


def oracle_sequence(scan, models, index, lp, cfg, cands, syms):
    """Every triple against every hit, scored, sorted and thinned by brute force."""
    max_d = cfg.max_triple_distance
    raw = []
    for i, j, k in itertools.combinations(range(len(cands)), 3):
        tri = [cands[i], cands[j], cands[k]]
        locs = np.array([c.f for c in tri])
        d = [np.linalg.norm(locs[a] - locs[b]) for a, b in ((0, 1), (0, 2), (1, 2))]
        if min(d) <= 1e-9 or max(d) > max_d:
            continue
        if 0.5 * np.linalg.norm(np.cross(locs[1] - locs[0], locs[2] - locs[0])) <= 1e-6:
            continue
        for c, pose, gamma, _ in query(index, [(t.s, t.f) for t in tri]):
            tp = math.log(gamma) + (tri[0].phi + tri[1].phi + tri[2].phi)
            raw.append((tp, c, pose))
    raw.sort(key=lambda h: (-h[0], h[1], tuple(pose_sort_key(h[2].rotation, h[2].translation)[0])))
    # greedy thinning: a later hypothesis never changes an earlier decision, so stop at K kept
    kept = []
    cos_rot = math.cos(cfg.delta_rot)
    for tp, c, pose in raw:
        if len(kept) == cfg.max_hypotheses:
            break
        rots = np.array([pose.rotation @ q.rotation for q in syms[c]])
        trans = np.array([pose.rotation @ q.translation + pose.translation for q in syms[c]])
        dup = False
        for _, kc, kp in kept:
            if kc != c:
                continue
            close_t = np.linalg.norm(trans - kp.translation, axis=1) < cfg.delta_t
            close_r = (np.einsum("kij,ij->k", rots, kp.rotation) - 1) / 2 > cos_rot
            if np.any(close_t & close_r):
                dup = True
                break
        if not dup:
            kept.append((tp, c, pose))
    lookup = {m.class_id: m for m in models}
    seq = []
    for tp, c, pose in kept[:cfg.max_hypotheses]:
        L, _ = log_likelihood(scan, lookup[c], pose, lp)
        seq.append((tp, L, c))
        if L > lp.theta:
            break
    return seq


def tiny_scene(seed, models):
    rng = np.random.default_rng(seed)
    big, half = models
    model = models[seed % 2]
    pose = Pose(rotation_about([0, 0, 1], rng.uniform(0, 2 * np.pi)), rng.normal(size=3) * 20)
    g = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), 1.0])
    g /= np.linalg.norm(g)
    scan = compose_scene([ScenePlacement(model, pose)], SynthParams(surface_point_budget=1500, rng_seed=seed,
                                                                    pixel_pitch=4.0), g)
    locs = pose.apply(model.feature_locations)
    pick = rng.choice(len(locs), size=min(len(locs), rng.integers(3, 9)), replace=False)
    cands = [FeatureCandidate(int(model.feature_classes[i]), locs[i] + rng.normal(size=3) * 0.3,
                              float(rng.integers(1, 4))) for i in pick]
    for _ in range(rng.integers(0, 4)):
        cands.append(FeatureCandidate(int(rng.integers(1, 3)), rng.uniform(-90, 90, 3), float(rng.integers(1, 4))))
    return scan, cands


def compare_with_oracle(seeds, models, theta=2000.0):
    """``(pairs, seconds)``: per seed the recognized and oracle sequences, plus time spent in recognize."""
    models = list(models)
    index = build_index(models, 5.0)
    syms = symmetry_table(models)
    cfg = SearchConfig(max_hypotheses=12, max_triple_distance=index.max_pair_distance + 10.0)
    pairs, spent = [], 0.0
    for seed in seeds:
        scan, cands = tiny_scene(seed, models)
        assert len(cands) <= 12
        lp = LikelihoodParams(a=1.0, b=1e-7, delta_s=5.0, theta=theta, ref_density=1e-7)
        lp = lp.with_normalizations(models, scan.gaze)
        t0 = time.perf_counter()
        got = recognize(scan, models, None, index, lp, cfg, seed, candidates=cands, symmetries=syms).log
        spent += time.perf_counter() - t0
        pairs.append((seed, got, oracle_sequence(scan, models, index, lp, cfg, cands, syms)))
    return pairs, spent


def sequences_match(got, want) -> bool:
    """Same classes in the same order, with tp and L equal up to summation rounding."""
    if len(got) != len(want):
        return False
    return all(c1 == c2 and math.isclose(tp1, tp2, rel_tol=0, abs_tol=1e-12)
               and math.isclose(L1, L2, rel_tol=1e-9, abs_tol=1e-9)
               for (tp1, L1, c1), (tp2, L2, c2) in zip(got, want))
