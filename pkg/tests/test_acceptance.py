"""End-to-end acceptance checks, one test per criterion.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion with the measured values.
"""
import time

import numpy as np
import pytest

from tprecog import io
from tprecog.config import Config, with_overrides
from tprecog.curvature import c_all
from tprecog.evaluation import (evaluate_scene, single_object_scene, summarize, train_from_scans,
                                true_feature_ranks, two_object_scene)
from tprecog.geometry import Pose, random_rotation, rotation_about, solve_rigid_batch
from tprecog.hashing import GeomHashIndex, HashEntry, build_index, match_batch, update_weights
from tprecog.likelihood import LikelihoodParams, point_terms
from tprecog.mesh import SURFACE
from tprecog.models import ObjectModel, notched_cube, notched_half, uv_sphere_mesh
from tprecog.relation import RelationConfig, delta_map_batch, phi_all, sample_tetra_batch
from tprecog.search import symmetry_table
from tprecog.synth import ScenePlacement, SynthParams, compose_scene

from search_oracle import compare_with_oracle, sequences_match


@pytest.fixture(scope="module")
def objects():
    return notched_cube(1), notched_half(2)


@pytest.fixture(scope="module")
def suite_training(objects):
    """Density and index trained on 30 two-object scenes disjoint from the evaluation seeds."""
    cfg = Config()
    big, half = objects
    scans = [two_object_scene(big, half, cfg.synth_params(s), s) for s in range(1000, 1030)]
    dm = train_from_scans(scans, cfg, 2, seed=0)
    return cfg, dm, build_index([big, half], cfg.q_d, cfg.gamma_init)


def _random_tetrahedra(rng, n, R):
    c = rng.uniform(-50, 50, (n, 3))
    dirs = rng.normal(size=(3, n, 3))
    dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
    radii = rng.uniform(0.05 * R, 0.95 * R, (3, n, 1))
    x = c[None] + dirs * radii
    area = 0.5 * np.linalg.norm(np.cross(x[1] - x[0], x[2] - x[0]), axis=1)
    keep = area > 1e-3
    return c[keep], x[0][keep], x[1][keep], x[2][keep]


@pytest.mark.criterion("delta map: range, equilateral saturation, rigid invariance, speed")
def test_delta_map_correctness(record_property):
    rng = np.random.default_rng(1)
    R = 15.0
    g = np.array([0.0, 0.0, -1.0])
    c, x1, x2, x3 = _random_tetrahedra(rng, 100_000, R)
    t0 = time.perf_counter()
    d = delta_map_batch(c, x1, x2, x3, R, g)
    rot, t = random_rotation(rng), rng.normal(size=3) * 100
    d_moved = delta_map_batch(c @ rot.T + t, x1 @ rot.T + t, x2 @ rot.T + t, x3 @ rot.T + t, R, rot @ g)
    elapsed = time.perf_counter() - t0

    equi = []
    for rho, h in ((0.8, 0.6), (3.0, 1.0), (5.0, 9.0), (1.0, 0.01)):
        ang = np.array([0, 2, 4]) * np.pi / 3
        tri = np.column_stack([rho * np.cos(ang), rho * np.sin(ang), np.full(3, h)])
        equi.append(np.abs(delta_map_batch(np.zeros(3), *tri, R, [0, 0, 1])[0]
                           - [np.hypot(rho, h) / R, 1.0, 1.0]).max())
    inv_err = float(np.abs(d - d_moved).max())
    record_property("measured", f"n={len(c)} equilateral err={max(equi):.1e} invariance err={inv_err:.1e} "
                                f"time={elapsed:.2f}s")
    assert len(c) > 99_000
    assert np.all((d[:, 0] >= 0) & (d[:, 0] <= 1) & (d[:, 1] >= -1) & (d[:, 1] <= 1) & (d[:, 2] >= 0) & (d[:, 2] <= 1))
    assert max(equi) < 1e-9
    assert inv_err < 1e-9
    assert elapsed < 5.0


@pytest.mark.criterion("surface of revolution: per-u1-bin std of u2 and u3 below 1e-6 at a sphere pole")
def test_sphere_confinement(record_property):
    sphere = ObjectModel(1, uv_sphere_mesh(50.0, 128, 256), (), "sphere")
    g = np.array([0.0, 0.0, -1.0])
    scan = compose_scene([ScenePlacement(sphere, Pose.identity())],
                         SynthParams(noise_sigma=0.0, pixel_pitch=0.5, surface_point_budget=200_000, rng_seed=1), g)
    pole = scan.points[np.argmax(scan.points[:, 2])]
    cfg = RelationConfig(15.0, 1.0, 10_000, (15, 20, 10))
    d = sample_tetra_batch(scan.points, pole[None], cfg, g, np.random.default_rng(0)).deltas
    bins = np.minimum((d[:, 0] * cfg.bins[0]).astype(int), cfg.bins[0] - 1)
    occupied = [b for b in np.unique(bins) if np.count_nonzero(bins == b) > 1]
    s2 = max(d[bins == b, 1].std() for b in occupied)
    s3 = max(d[bins == b, 2].std() for b in occupied)
    record_property("measured", f"samples={len(d)} max std u2={s2:.3g} u3={s3:.3g}")
    assert len(d) == 10_000
    assert s2 < 1e-6 and s3 < 1e-6


@pytest.mark.criterion("small-angle bound on the surface log-density term")
def test_small_angle_bound(cube100, record_property):
    g = np.array([0.0, 0.0, 1.0])
    center = np.array([50.0, 50.0, 50.0])
    worst = 0.0
    for a in (0.5, 1.0, 4.0, 16.0):
        lp = LikelihoodParams(a=a, b=1e-7, delta_s=2.0, ref_density=1.0).with_normalizations([cube100], g)
        shift = lp.ln_n[1]
        for phi in np.linspace(0.01, 0.5, 50):
            rot = rotation_about([1, 0, 0], phi)
            pose = Pose(rot, center - rot @ center)
            point = pose.apply(np.array([[50.0, 50.0, 0.0]]))
            terms, labels = point_terms(point, g, cube100, pose, lp)
            assert labels[0] == SURFACE
            exact = terms[0] - shift
            gap = abs(exact + a * phi ** 2)
            bound = 1.01 * a * phi ** 4 / 12
            worst = max(worst, gap / bound)
            assert gap <= bound, (a, phi)
    record_property("measured", f"max gap/bound={worst:.4f}")


@pytest.mark.criterion("hash round trip under 100 random placements")
def test_hash_round_trip(objects, record_property):
    # near-tied triples are stored once per admissible point order, so "own entry"
    # means any entry of the same model triple (class plus point set)
    index = build_index(list(objects), 5.0, 0.1)
    fl = index.flat()
    labels = np.array([h[0][:3] for h in fl.handles])
    n = len(labels)
    ids = {}
    triple = np.array([ids.setdefault((int(c), tuple(sorted(map(tuple, np.round(p, 9))))), len(ids))
                       for c, p in zip(fl.class_id, fl.model_pts)])
    rng = np.random.default_rng(4)
    worst_r = worst_t = 0.0
    for _ in range(100):
        rot, t = random_rotation(rng), rng.uniform(-500, 500, 3)
        rows, ent, scene = match_batch(index, labels, fl.model_pts @ rot.T + t)
        # solve only the hits of the queried triple; query_batch would solve every congruent hit
        own = triple[rows] == triple[ent]
        rows, ent = rows[own], ent[own]
        rots, trans = solve_rigid_batch(fl.model_pts[ent], scene[rows])
        err = np.maximum(np.abs(rots - rot).max(axis=(1, 2)), np.abs(trans - t).max(axis=1))
        best = np.full(n, np.inf)
        np.minimum.at(best, rows, err)
        assert np.all(np.isfinite(best)), "some triple was not returned"
        exact = err == best[rows]
        worst_r = max(worst_r, float(np.abs(rots[exact] - rot).max()))
        worst_t = max(worst_t, float(np.abs(trans[exact] - t).max()))
    record_property("measured", f"entries={n} triples={len(ids)} max rotation err={worst_r:.1e} "
                                f"max translation err={worst_t:.1e}")
    assert worst_r < 1e-6 and worst_t < 1e-6


@pytest.mark.criterion("evaluation order equals the exhaustive oracle on 50 tiny scenes")
def test_order_oracle_equivalence(objects, record_property):
    t0 = time.perf_counter()
    pairs, spent = compare_with_oracle(range(50), objects, theta=2000.0)
    total = time.perf_counter() - t0
    bad = [seed for seed, got, want in pairs if not sequences_match(got, want)]
    record_property("measured", f"mismatches={len(bad)} recognize time={spent:.1f}s with oracle={total:.1f}s")
    assert not bad
    assert spent < 30.0


@pytest.mark.criterion("grouping weights stay below 1 under 10^4 random operations")
def test_grouping_weight_invariant(record_property):
    rng = np.random.default_rng(6)
    index = GeomHashIndex(5.0)
    keys = [(1, 1, 2, i, i + 1, i + 2) for i in range(20)]
    pts = np.array([[0.0, 0, 0], [10, 0, 0], [0, 10, 0]])
    handles, worst = [], 0.0
    for _ in range(10_000):
        if not handles or rng.random() < 0.3:
            key = keys[rng.integers(len(keys))]
            index.add(key, HashEntry(int(rng.integers(1, 4)), pts, float(rng.uniform(0.01, 0.99))))
            index.renormalize(key)
            handles.append((key, len(index.table[key]) - 1))
        else:
            handle = handles[rng.integers(len(handles))]
            key = handle[0]
            update_weights(index, handle, bool(rng.random() < 0.5))
        total = sum(e.gamma for e in index.table[key])
        worst = max(worst, total)
        assert total < 1.0
    assert all(sum(e.gamma for e in es) < 1.0 for es in index.table.values())
    record_property("measured", f"entries={len(index)} max key sum={worst:.6f}")


@pytest.mark.criterion("corner features rank high under phi (noise 1 mm, 20% outliers)")
def test_corner_rank_quality(record_property):
    cfg = with_overrides(Config(), noise_sigma=1.0, outlier_fraction=0.2)
    cube = notched_cube(1)
    train = [single_object_scene(cube, cfg.synth_params(s), s) for s in range(2000, 2010)]
    dm = train_from_scans(train, cfg, 2, seed=0)
    phi_r, c_r = [], []
    for s in range(10):
        scan = single_object_scene(cube, cfg.synth_params(s), s)
        phi_r.append(true_feature_ranks(phi_all(scan, dm, s), scan, cfg.feature_radius))
        c_r.append(true_feature_ranks(c_all(scan, cfg.curvature_radius), scan, cfg.feature_radius))
    phi_r, c_r = np.concatenate(phi_r), np.concatenate(c_r)
    frac = float(np.mean(phi_r >= 0.6))
    record_property("measured", f"features={len(phi_r)} phi>=0.6: {frac:.3f} "
                                f"median phi={np.median(phi_r):.3f} median C={np.median(c_r):.3f}")
    assert frac >= 0.95
    assert np.median(phi_r) >= np.median(c_r)


@pytest.mark.slow
@pytest.mark.criterion("two-object recognition suite: first object, second object, wall time")
def test_recognition_suite(objects, suite_training, record_property):
    cfg, dm, index = suite_training
    models = list(objects)
    syms = symmetry_table(models)
    records = []
    for k in range(50):
        scan = two_object_scene(models[0], models[1], cfg.synth_params(k), k)
        assert 5000 <= len(scan.points) <= 12000
        lp = cfg.likelihood_params().with_normalizations(models, scan.gaze)
        records.append(evaluate_scene(k, scan, models, dm, index, lp, cfg.search_config(), cfg, syms))
    s = summarize(records)
    record_property("measured", f"first={s.success_rate:.2f} second={s.second_rate:.2f} "
                                f"max wall time={s.max_wall_time:.1f}s")
    assert s.success_rate >= 0.9
    assert s.second_rate >= 0.8
    assert s.max_wall_time < 10.0


@pytest.mark.criterion("density normalization and byte-identical train/index round trips")
def test_normalization_and_persistence(objects, suite_training, tmp_path, record_property):
    cfg, dm, _ = suite_training
    index = build_index(list(objects), cfg.q_d, cfg.gamma_init)
    sums = [float(g.mass.sum()) for g in dm.grids]
    a, b = tmp_path / "d1.txt", tmp_path / "d2.txt"
    io.write_density(a, dm)
    io.write_density(b, io.read_density(a))
    rng = np.random.default_rng(9)
    handles = [h for h, _ in index.entries()]
    for i in rng.choice(len(handles), 200, replace=False):
        update_weights(index, handles[i], bool(rng.random() < 0.3))
    c, d = tmp_path / "i1.txt", tmp_path / "i2.txt"
    io.write_index(c, index)
    io.write_index(d, io.read_index(c))
    err = max(abs(s - 1.0) for s in sums)
    record_property("measured", f"max |sum-1|={err:.1e}")
    assert err < 1e-9
    assert a.read_bytes() == b.read_bytes()
    assert c.read_bytes() == d.read_bytes()
