import numpy as np
import pytest

from tprecog.curvature import CurvaturePair, c_all, c_score, fit_quadric
from tprecog.errors import InsufficientSupport, UnknownClass
from tprecog.geometry import RangeScan
from tprecog.models import CONCAVE_CORNER, CONVEX_CORNER

G = np.array([0.0, 0.0, 1.0])


def grid(half_width=20.0, step=0.5):
    x = np.arange(-half_width, half_width + 1e-9, step)
    X, Y = np.meshgrid(x, x)
    return X.ravel(), Y.ravel()


def sphere_cap(rho, sign=1.0):
    x, y = grid()
    keep = x * x + y * y < 22.0 ** 2
    x, y = x[keep], y[keep]
    z = sign * (rho - np.sqrt(rho * rho - x * x - y * y))
    return RangeScan(np.column_stack([x, y, z]), G)


def test_plane_has_zero_curvature():
    x, y = grid()
    scan = RangeScan(np.column_stack([x, y, 0.3 * x - 0.2 * y]), G)
    pair = fit_quadric(scan, np.zeros(3), 15.0)
    assert abs(pair.c1) < 1e-9 and abs(pair.c2) < 1e-9


def test_sphere_curvature_within_two_percent():
    pair = fit_quadric(sphere_cap(50.0), np.zeros(3), 15.0)
    assert pair.c1 == pytest.approx(1 / 50, rel=0.02)
    assert pair.c2 == pytest.approx(1 / 50, rel=0.02)


def test_sphere_curvature_matches_least_squares_bias():
    """A quadric fit over a ball of radius R on a sphere reads 1/rho * (1 + R^2 / (4 rho^2))."""
    rho, R = 50.0, 15.0
    pair = fit_quadric(sphere_cap(rho), np.zeros(3), R)
    expect = (1 + R * R / (4 * rho * rho)) / rho
    assert pair.c1 == pytest.approx(expect, rel=2e-3)
    assert pair.c2 == pytest.approx(expect, rel=2e-3)


def test_bias_vanishes_for_small_support():
    pair = fit_quadric(sphere_cap(50.0), np.zeros(3), 4.0)
    assert pair.c1 == pytest.approx(1 / 50, rel=0.005)


def test_concave_cap_is_negative():
    pair = fit_quadric(sphere_cap(50.0, sign=-1.0), np.zeros(3), 15.0)
    assert pair.c1 < 0 and pair.c2 < 0


def test_five_points_insufficient():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.1], [2, 1, 0.3]], dtype=float)
    with pytest.raises(InsufficientSupport):
        fit_quadric(RangeScan(pts, G), np.zeros(3), 15.0)


def test_c_score_examples():
    assert c_score(CONVEX_CORNER, CurvaturePair(0.1, 0.05)) == pytest.approx(0.05)
    assert c_score(CONCAVE_CORNER, CurvaturePair(-0.05, -0.1)) == pytest.approx(0.05)
    assert c_score(CONVEX_CORNER, CurvaturePair(0.1, -0.1)) == pytest.approx(-0.1)
    with pytest.raises(UnknownClass):
        c_score(7, CurvaturePair(0.0, 0.0))


def test_pair_invariants():
    with pytest.raises(ValueError):
        CurvaturePair(0.0, 0.1)
    with pytest.raises(ValueError):
        CurvaturePair(np.nan, 0.0)


def test_c_all_marks_unfittable_points():
    x, y = grid(3.0, 1.0)
    pts = np.column_stack([x, y, np.zeros_like(x)])
    pts = np.vstack([pts, [[100.0, 100.0, 0.0]]])
    out = c_all(RangeScan(pts, G), 5.0)
    assert out.shape == (2, len(pts))
    assert np.isneginf(out[:, -1]).all()
    assert np.all(np.abs(out[:, :-1]) < 1e-9)
