import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from tprecog.config import with_overrides
from tprecog.evaluation import pose_error, single_object_scene
from tprecog.geometry import Pose, RangeScan
from tprecog.hashing import GeomHashIndex, HashEntry, build_index
from tprecog.mesh import classify_points
from tprecog.models import box_model, model_symmetries
from tprecog.relation import NO_EVIDENCE
from tprecog.search import (ACCEPTED, NONE_FOUND, FeatureCandidate, SearchConfig, generate_hypotheses, recognize,
                            recognize_sequential, select_candidates)
from tprecog.synth import ScenePlacement, SynthParams, compose_scene

from search_oracle import compare_with_oracle, sequences_match


def test_threshold_off_returns_everything(trained, rng):
    cfg, dm, _ = trained
    scan = RangeScan(rng.normal(size=(60, 3)) * 10, [0, 0, 1])
    cands = select_candidates(scan, dm, NO_EVIDENCE, 0)
    assert len(cands) == dm.m * len(scan.points)
    assert all(a.phi >= b.phi for a, b in zip(cands, cands[1:]))


def test_bare_plane_gives_few_candidates(trained):
    cfg, dm, _ = trained
    plate = box_model(1, (300.0, 300.0, 5.0))
    scan = compose_scene([ScenePlacement(plate, Pose.identity())],
                         SynthParams(noise_sigma=0.5, surface_point_budget=20000, rng_seed=1), [0, 0, 1])
    inner = np.all(np.abs(scan.points[:, :2] - 150.0) < 120.0, axis=1)
    plane = scan.subset(inner)
    cands = select_candidates(plane, dm, 0.0, 0)
    assert len(cands) <= 0.01 * dm.m * len(plane.points)


def test_noiseless_corners_become_candidates(trained, test_objects):
    cfg, dm, _ = trained
    big, _ = test_objects
    params = with_overrides(cfg, noise_sigma=0.0, outlier_fraction=0.0).synth_params(3)
    scan = single_object_scene(big, params, 3)
    cands = select_candidates(scan, dm, 0.0, 0)
    tree = {s: cKDTree([c.f for c in cands if c.s == s]) for s in (1, 2)}
    for f in scan.visible_features():
        d, _ = tree[f.shape_class].query(f.location)
        assert d <= cfg.feature_radius


def test_no_hits_no_hypotheses(test_objects):
    index = build_index(list(test_objects), 5.0)
    far = [FeatureCandidate(1, np.array(p, float), 1.0) for p in ([0, 0, 0], [900, 0, 0], [0, 800, 0])]
    assert generate_hypotheses(far, index, SearchConfig(max_triple_distance=2000.0)) == []


def _one_entry_index(gamma):
    tri = np.array([[0.0, 0, 0], [60, 0, 0], [0, 80, 0]])
    index = GeomHashIndex(5.0)
    from tprecog.hashing import make_key, canonical_order
    labels = [1, 2, 3]
    perm = canonical_order(labels, tri)
    index.add(make_key(list(zip(labels, tri)), 5.0), HashEntry(1, tri[perm], gamma))
    index.renormalize_all()
    return index, tri


def test_tp_is_log_gamma_plus_phis():
    index, tri = _one_entry_index(0.5)
    cands = [FeatureCandidate(s, p, phi) for s, p, phi in zip([1, 2, 3], tri, [3.0, 2.0, 1.0])]
    hyps = generate_hypotheses(cands, index, SearchConfig())
    assert len(hyps) == 1
    assert hyps[0].tp == pytest.approx(math.log(0.5) + 6.0)


def test_same_pose_keeps_best_score():
    index, tri = _one_entry_index(0.5)
    # two copies of the triple on the same spot with different evidence
    cands = [FeatureCandidate(s, p, phi) for s, p, phi in zip([1, 2, 3], tri, [1.0, 2.0, 1.0 + math.log(2)])]
    cands += [FeatureCandidate(s, p + 1e-4, phi) for s, p, phi in zip([1, 2, 3], tri, [2.0, 2.0, 1.0 + math.log(2)])]
    hyps = generate_hypotheses(cands, index, SearchConfig(max_triple_distance=200.0))
    poses = {(round(h.pose.translation[0], 2),) for h in hyps}
    assert len(poses) == 1
    assert len(hyps) == 1
    assert hyps[0].tp == pytest.approx(math.log(0.5) + 5.0 + math.log(2))


def test_nothing_modeled_gives_none_found(trained, test_objects):
    cfg, dm, index = trained
    plate = box_model(1, (300.0, 300.0, 5.0))
    scan = compose_scene([ScenePlacement(plate, Pose.identity())],
                         SynthParams(noise_sigma=0.5, surface_point_budget=8000, rng_seed=2), [0.3, 0.2, 0.93])
    lp = cfg.likelihood_params().with_normalizations(list(test_objects), scan.gaze)
    res = recognize(scan, list(test_objects), dm, index, lp, cfg.search_config(), 0)
    assert res.outcome == NONE_FOUND


def _exact_candidates(scan, model, pose):
    locs = pose.apply(model.feature_locations)
    vis = {tuple(np.round(f.location, 6)) for f in scan.visible_features()}
    return [FeatureCandidate(int(s), loc, 100.0) for s, loc in zip(model.feature_classes, locs)
            if tuple(np.round(loc, 6)) in vis]


def test_exact_features_recover_pose(trained, test_objects):
    cfg, dm, index = trained
    big, half = test_objects
    params = with_overrides(cfg, noise_sigma=0.0, outlier_fraction=0.0).synth_params(4)
    scan = single_object_scene(big, params, 4)
    truth = scan.placements[0].pose
    lp = cfg.likelihood_params().with_normalizations([big, half], scan.gaze)
    res = recognize(scan, [big, half], dm, index, lp, cfg.search_config(), 0,
                    candidates=_exact_candidates(scan, big, truth))
    assert res.outcome == ACCEPTED and res.c == 1
    rot, trans = pose_error(res.pose, truth, model_symmetries(big))
    assert math.radians(rot) < 1e-3 and trans < 0.1


def test_noiseless_scene_pose_accuracy(trained, test_objects):
    """Full pipeline on a noiseless scan, features taken from the data."""
    cfg, dm, index = trained
    big, half = test_objects
    params = with_overrides(cfg, noise_sigma=0.0, outlier_fraction=0.0).synth_params(4)
    scan = single_object_scene(big, params, 4)
    lp = cfg.likelihood_params().with_normalizations([big, half], scan.gaze)
    res = recognize(scan, [big, half], dm, index, lp, cfg.search_config(), 0)
    assert res.outcome == ACCEPTED and res.c == 1
    rot, trans = pose_error(res.pose, scan.placements[0].pose, model_symmetries(big))
    assert math.radians(rot) < 1e-3 and trans < 0.1


def test_sequential_stops_after_single_object(trained, test_objects):
    cfg, dm, index = trained
    big, half = test_objects
    params = with_overrides(cfg, noise_sigma=0.0, outlier_fraction=0.0).synth_params(4)
    scan = single_object_scene(big, params, 4)
    truth = scan.placements[0].pose
    lp = cfg.likelihood_params().with_normalizations([big, half], scan.gaze)
    cands = _exact_candidates(scan, big, truth)
    first = recognize(scan, [big, half], dm, index, lp, cfg.search_config(), 0, candidates=cands)
    assert first.outcome == ACCEPTED
    results = recognize_sequential(scan, [big, half], dm, index, lp, cfg.search_config(), 0, max_objects=3)
    assert results[0].outcome == ACCEPTED
    assert results[-1].outcome == NONE_FOUND
    assert len(results) <= 3
    # removal soundness: nothing left on the visible shell of the first object
    from tprecog.search import remove_explained
    rest = remove_explained(scan, {m.class_id: m for m in (big, half)}[results[0].c], results[0].pose, lp)
    labels, _ = classify_points(big.mesh if results[0].c == 1 else half.mesh, results[0].pose, rest.points,
                                scan.gaze, lp.delta_s)
    assert not np.any(labels)


@pytest.mark.parametrize("theta", [2000.0, math.inf])
def test_order_matches_brute_force_oracle(test_objects, theta):
    pairs, _ = compare_with_oracle(range(8), test_objects, theta)
    for seed, got, want in pairs:
        assert sequences_match(got, want), seed
