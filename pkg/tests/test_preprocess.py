import itertools
import math

import numpy as np
import pytest
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from _oracles import svd_plane
from graspable.exceptions import DegenerateGeometryError, InsufficientDataError, ValidationError
from graspable.preprocess import (
    FrameTransform,
    PlaneAligner,
    RegressionPlane,
    fit_regression_plane,
    interpolate_occlusions,
    make_frame_transform,
)


def grid_points(n=10, span=1.0):
    u = np.linspace(-span, span, n)
    x, y = np.meshgrid(u, u, indexing="ij")
    return x.ravel(), y.ravel()


def test_flat_plane_exact():
    x, y = grid_points()
    plane = fit_regression_plane(np.column_stack([x, y, np.zeros_like(x)]))
    assert plane.normal.tolist() == [0.0, 0.0, 1.0]
    assert plane.offset == 0.0


def test_plane_z_equals_x():
    x, y = grid_points()
    plane = fit_regression_plane(np.column_stack([x, y, x]))
    want = np.array([-1.0, 0.0, 1.0]) / math.sqrt(2)
    assert np.allclose(plane.normal, want, atol=1e-12) or np.allclose(plane.normal, -want, atol=1e-12)
    assert abs(plane.offset) < 1e-12


def test_noisy_plane_against_svd_oracle():
    rng = np.random.default_rng(7)
    xy = rng.uniform(-1, 1, size=(1000, 2))
    z = 2 * xy[:, 0] + 3 * xy[:, 1] + 1 + rng.normal(0, 0.001, 1000)
    pts = np.column_stack([xy, z])
    plane = fit_regression_plane(pts)
    a, b, c = plane.coefficients()
    assert abs(a - 2) < 1e-2 and abs(b - 3) < 1e-2 and abs(c - 1) < 1e-2
    n_ref, centroid = svd_plane(pts)
    assert abs(abs(n_ref @ plane.normal) - 1) < 1e-12
    assert np.allclose(plane.centroid, centroid, atol=1e-12)


def test_normal_unit_and_offset_consistent(rng):
    pts = rng.normal(size=(50, 3)) * [1, 1, 0.1]
    plane = fit_regression_plane(pts)
    assert abs(np.linalg.norm(plane.normal) - 1) < 1e-12
    assert abs(plane.normal @ plane.centroid - plane.offset) < 1e-12


def test_orientation_majority_below():
    # a few tall spikes above a dense floor: the floor majority sets "up"
    rng = np.random.default_rng(3)
    floor = np.column_stack([rng.uniform(-1, 1, (200, 2)), rng.normal(0, 0.01, 200)])
    for pts in (floor, floor * [1, 1, -1]):
        plane = fit_regression_plane(pts)
        d = plane.signed_distance(pts)
        assert (d <= 1e-12).sum() >= (d > 1e-12).sum()


def test_orientation_tie_prefers_up():
    x, y = grid_points()
    for z in (0 * x, 0 * x + 5):
        assert fit_regression_plane(np.column_stack([x, y, z])).normal[2] > 0


def test_plane_fit_optimality_under_perturbations(rng):
    pts = rng.normal(size=(300, 3)) * [2, 1, 0.2]
    plane = fit_regression_plane(pts)

    def cost(n):
        return float((((pts - plane.centroid) @ n) ** 2).sum())

    base = cost(plane.normal)
    for axis in itertools.product((-1, 0, 1), repeat=3):
        if axis == (0, 0, 0):
            continue
        rot = Rotation.from_rotvec(1e-3 * np.array(axis) / np.linalg.norm(axis))
        assert cost(rot.apply(plane.normal)) >= base - 1e-12


def test_collinear_rejected():
    t = np.linspace(0, 1, 20)
    with pytest.raises(DegenerateGeometryError):
        fit_regression_plane(np.column_stack([t, 2 * t, 3 * t]))


def test_too_few_points():
    with pytest.raises((InsufficientDataError, ValidationError)):
        fit_regression_plane(np.zeros((2, 3)))


def test_frame_identity_for_flat_plane():
    x, y = grid_points()
    pts = np.column_stack([x + 3, y - 1, np.full_like(x, 2.0)])
    ft = make_frame_transform(fit_regression_plane(pts))
    assert np.allclose(ft.rotation, np.eye(3), atol=1e-15)
    assert np.allclose(ft.translation, -pts.mean(axis=0), atol=1e-12)


def test_frame_for_flipped_normal():
    plane = RegressionPlane(np.array([0.0, 0.0, -1.0]), 0.0, np.zeros(3), 0.0, 3)
    ft = make_frame_transform(plane)
    assert np.allclose(ft.rotation @ plane.normal, [0, 0, 1], atol=1e-12)
    assert abs(np.linalg.det(ft.rotation) - 1) < 1e-9


def test_frame_degenerate_x_axis():
    plane = RegressionPlane(np.array([1.0, 0.0, 0.0]), 0.0, np.zeros(3), 0.0, 3)
    ft = make_frame_transform(plane)
    assert np.allclose(ft.rotation[0], [0, 1, 0], atol=1e-12)
    assert abs(np.linalg.det(ft.rotation) - 1) < 1e-9


def test_random_plane_transform_properties(rng):
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        basis = np.linalg.svd(n[None, :])[2][1:]
        uv = rng.uniform(-1, 1, (200, 2))
        pts = uv @ basis + rng.normal(0, 0.01, (200, 1)) * n + rng.normal(size=3)
        plane = fit_regression_plane(pts)
        ft = make_frame_transform(plane)
        R = ft.rotation
        assert np.allclose(R @ R.T, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1) < 1e-9
        assert np.allclose(R @ plane.normal, [0, 0, 1], atol=1e-9)
        local = ft.apply(pts)
        resid = ((pts - pts.mean(axis=0)) @ svd_plane(pts)[0]) ** 2
        assert abs(local[:, 2].var() - resid.mean()) < 1e-9
        assert abs(local[:, 2].var() - plane.residual_variance) < 1e-9
        # isometry
        i, j = rng.integers(0, 200, (2, 50))
        d0 = np.linalg.norm(pts[i] - pts[j], axis=1)
        d1 = np.linalg.norm(local[i] - local[j], axis=1)
        assert np.allclose(d0, d1, atol=1e-9)
        assert np.allclose(ft.inverse(local), pts, atol=1e-12)


def nodes(grid):
    return np.meshgrid(*grid.node_xy(), indexing="ij")


def annulus(n, r0, r1, rng):
    pts = []
    while len(pts) < n:
        p = rng.uniform(-r1, r1, 2)
        if r0 <= np.hypot(*p) <= r1:
            pts.append(p)
    return np.array(pts)


def test_constant_surface_with_hole_is_exact(rng):
    xy = annulus(400, 0.3, 1.0, rng)
    pts = np.column_stack([xy, np.full(len(xy), 0.5)])
    grid = interpolate_occlusions(pts, None, 0.05)
    gx, gy = nodes(grid)
    hole = np.hypot(gx, gy) < 0.3
    assert (grid.valid & hole).sum() > 10
    assert (grid.z[grid.valid] == 0.5).all()


def test_affine_surface_exact(rng):
    xy = rng.uniform(-1, 1, (60, 2))
    pts = np.column_stack([xy, 2 * xy[:, 0] + 3 * xy[:, 1]])
    grid = interpolate_occlusions(pts, None, 0.01)
    gx, gy = nodes(grid)
    err = np.abs(grid.z - (2 * gx + 3 * gy))[grid.valid]
    assert grid.valid.sum() > 1000
    assert err.max() < 1e-12


def test_affine_points_on_nodes_reproduced_exactly():
    pitch = 0.25
    i, j = np.meshgrid(np.arange(-4, 5), np.arange(-4, 5), indexing="ij")
    x, y = i.ravel() * pitch, j.ravel() * pitch
    z = 0.5 * x - 0.25 * y + 1.0
    grid = interpolate_occlusions(np.column_stack([x, y, z]), None, pitch)
    assert grid.valid.all()
    gx, gy = nodes(grid)
    assert np.array_equal(grid.z, 0.5 * gx - 0.25 * gy + 1.0)


def test_valid_nodes_inside_hull(rng):
    xy = rng.normal(size=(80, 2))
    pts = np.column_stack([xy, rng.normal(size=80)])
    grid = interpolate_occlusions(pts, None, 0.1)
    hull = ConvexHull(xy)
    gx, gy = nodes(grid)
    q = np.column_stack([gx[grid.valid], gy[grid.valid]])
    # hull facets as a.x + b <= 0
    assert (q @ hull.equations[:, :2].T + hull.equations[:, 2] <= 1e-12).all()
    assert grid.pitch == 0.1


def test_transform_argument(rng):
    xy = rng.uniform(-1, 1, (100, 2))
    pts = np.column_stack([xy, 0.3 * xy[:, 0]])
    ft = make_frame_transform(fit_regression_plane(pts))
    a = interpolate_occlusions(pts, ft, 0.05)
    b = interpolate_occlusions(ft.apply(pts), None, 0.05)
    assert np.array_equal(a.valid, b.valid)
    assert np.allclose(a.z[a.valid], 0, atol=1e-12)


def test_collinear_projection_rejected():
    t = np.linspace(0, 1, 10)
    with pytest.raises(DegenerateGeometryError):
        interpolate_occlusions(np.column_stack([t, t, t]), None, 0.1)


def test_bad_pitch():
    with pytest.raises(ValidationError):
        interpolate_occlusions(np.eye(3), None, 0.0)


def test_wedge_occlusion_within_curvature_bound():
    # hemisphere of radius r, samples removed in a 90 degree wedge out to rho_hole
    r, rho_hole = 1.0, 0.6
    rng = np.random.default_rng(11)
    xy = rng.uniform(-1.0, 1.0, (40000, 2)) * r
    rho = np.hypot(xy[:, 0], xy[:, 1])
    ang = np.arctan2(xy[:, 1], xy[:, 0])
    keep = (rho < 0.95 * r) & ~((ang >= 0) & (ang < np.pi / 2) & (rho < rho_hole))
    xy = xy[keep]
    pts = np.column_stack([xy, np.sqrt(r * r - (xy ** 2).sum(axis=1))])
    grid = interpolate_occlusions(pts, None, 0.01)
    gx, gy = nodes(grid)
    in_wedge = grid.valid & (gx > 0.02) & (gy > 0.02) & (np.hypot(gx, gy) < rho_hole - 0.02)
    assert in_wedge.sum() > 500
    dev = np.abs(grid.z - np.sqrt(np.clip(r * r - gx ** 2 - gy ** 2, 0, None)))[in_wedge]
    # linear interpolation error <= |f''|max * L^2 / 8 along the hole's
    # widest chord L; |f''| of the sphere profile peaks at the hole rim
    rho_max = rho_hole + 0.05
    kappa = r * r / (r * r - rho_max ** 2) ** 1.5
    chord = rho_hole * math.sqrt(2)
    bound = kappa * chord ** 2 / 8
    assert dev.max() <= bound
    # brute-force check that the bound is not vacuous
    assert dev.max() > 0.05 * bound


def test_plane_aligner_estimator(rng):
    from sklearn.base import clone

    pts = rng.normal(size=(100, 3)) * [1, 1, 0.01]
    al = PlaneAligner().fit(pts)
    assert np.allclose(al.inverse_transform(al.transform(pts)), pts, atol=1e-12)
    assert clone(al).get_params() == {}
    with pytest.raises(Exception):
        PlaneAligner().transform(pts)
    with pytest.raises(ValidationError):
        PlaneAligner().fit(np.zeros((5, 2)))
    assert isinstance(al.frame_, FrameTransform)
