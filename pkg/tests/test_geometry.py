import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tprecog.errors import DegenerateTriple
from tprecog.geometry import (Pose, RangeScan, apply_pose, matrix_to_quat, quat_to_matrix, random_rotation,
                              rotation_about, rotation_angle, solve_rigid_from_triple)

RZ90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


def test_apply_identity():
    assert np.allclose(apply_pose(Pose.identity(), [1, 2, 3]), [1, 2, 3])


def test_apply_rotation_about_z():
    assert np.allclose(apply_pose(Pose(RZ90, np.zeros(3)), [1, 0, 0]), [0, 1, 0], atol=1e-12)


def test_apply_rotation_then_translation():
    assert np.allclose(apply_pose(Pose(RZ90, [10, 0, 0]), [1, 0, 0]), [10, 1, 0], atol=1e-12)


def test_rodrigues_matches_hand_matrix():
    assert np.allclose(rotation_about([0, 0, 1], np.pi / 2), RZ90, atol=1e-12)


def test_pose_rejects_reflection():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_solve_identity():
    src = np.array([[0.0, 0, 0], [10, 0, 0], [0, 7, 0]])
    p = solve_rigid_from_triple(src, src)
    assert np.allclose(p.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(p.translation, 0, atol=1e-9)


def test_solve_recovers_known_pose():
    src = np.array([[0.0, 0, 0], [10, 0, 0], [0, 7, 3]])
    dst = src @ RZ90.T + [10, 0, 0]
    p = solve_rigid_from_triple(src, dst)
    assert np.allclose(p.rotation, RZ90, atol=1e-9)
    assert np.allclose(p.translation, [10, 0, 0], atol=1e-9)


def test_solve_collinear_raises():
    src = np.array([[0.0, 0, 0], [1, 1, 1], [2, 2, 2]])
    with pytest.raises(DegenerateTriple):
        solve_rigid_from_triple(src, src)


quat = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(lambda q: np.linalg.norm(q) > 0.1)
vec = st.lists(st.floats(-500, 500), min_size=3, max_size=3)


@settings(max_examples=60, deadline=None)
@given(quat, vec)
def test_solve_round_trip_property(q, t):
    src = np.array([[0.0, 0, 0], [40, 0, 0], [10, 30, 5]])
    pose = Pose.from_quaternion(q, t)
    got = solve_rigid_from_triple(src, pose.apply(src))
    assert rotation_angle(got.rotation.T @ pose.rotation) < 1e-9
    assert np.allclose(got.translation, t, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(quat)
def test_quaternion_round_trip(q):
    r = quat_to_matrix(q)
    assert np.allclose(quat_to_matrix(matrix_to_quat(r)), r, atol=1e-12)


def test_compose_and_inverse(rng):
    a = Pose(random_rotation(rng), rng.normal(size=3))
    b = Pose(random_rotation(rng), rng.normal(size=3))
    x = rng.normal(size=(5, 3))
    assert np.allclose(a.compose(b).apply(x), a.apply(b.apply(x)))
    assert np.allclose(a.inverse().apply(a.apply(x)), x)


def test_scan_requires_unit_gaze():
    with pytest.raises(ValueError):
        RangeScan(np.zeros((1, 3)), [0, 0, 2])
