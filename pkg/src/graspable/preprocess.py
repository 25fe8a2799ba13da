"""Regression-plane alignment and occlusion filling.

The raw cloud is rotated so that the z-axis follows the normal of its
orthogonal least-squares plane, then resampled onto a regular (x, y) grid
by piecewise-linear interpolation over a Delaunay triangulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cloud_io import PointCloud
from .exceptions import DegenerateGeometryError, InsufficientDataError, ValidationError

# relative tolerance below which a signed distance counts as "on the plane"
_ON_PLANE_RTOL = 1e-12


@dataclass(frozen=True)
class RegressionPlane:
    """Plane ``normal . p == offset``.

    ``residual`` is the sum of squared orthogonal distances of the fitted
    points; ``n_points`` is how many were fitted.
    """

    normal: np.ndarray
    offset: float
    centroid: np.ndarray
    residual: float
    n_points: int

    @property
    def residual_variance(self) -> float:
        return self.residual / self.n_points

    def signed_distance(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.normal - self.offset

    def coefficients(self) -> tuple[float, float, float]:
        """(a, b, c) with z = a x + b y + c; fails for vertical planes."""
        nx, ny, nz = self.normal
        if abs(nz) < 1e-12:
            raise DegenerateGeometryError("plane is vertical; no z = f(x, y) form")
        return -nx / nz, -ny / nz, self.offset / nz


@dataclass(frozen=True)
class FrameTransform:
    """Rigid map ``p' = R @ p + t`` into the plane frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return (pts - self.translation) @ self.rotation


@dataclass(frozen=True)
class HeightGrid:
    """Height field sampled at nodes ``(x0 + i * pitch, y0 + j * pitch)``.

    ``z`` is NaN wherever ``valid`` is False (outside the convex hull of
    the projected input).
    """

    z: np.ndarray
    valid: np.ndarray
    pitch: float
    origin: tuple[float, float]

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape

    def node_xy(self) -> tuple[np.ndarray, np.ndarray]:
        i = np.arange(self.z.shape[0])
        j = np.arange(self.z.shape[1])
        return self.origin[0] + i * self.pitch, self.origin[1] + j * self.pitch


def _as_points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def fit_regression_plane(cloud) -> RegressionPlane:
    """Total-least-squares plane through ``cloud``.

    The normal is the covariance eigenvector of the smallest eigenvalue,
    signed so that most points sit at non-positive distance (terrain below,
    sensor above). Ties go to the normal with positive input-frame z.
    """
    pts = _as_points(cloud)
    n = pts.shape[0]
    if n < 3:
        raise InsufficientDataError(f"plane fit needs 3 points, got {n}")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    evals, evecs = np.linalg.eigh(cov)
    scale = max(float(evals[-1]), np.finfo(float).tiny)
    if evals[1] <= 1e-12 * scale:
        raise DegenerateGeometryError("points are collinear or coincident")
    normal = evecs[:, 0].copy()
    # snap components that are pure round-off so exact planes stay exact
    normal[np.abs(normal) < 1e-15] = 0.0
    normal /= np.linalg.norm(normal)

    dist = centered @ normal
    tol = _ON_PLANE_RTOL * max(np.sqrt(scale / n), np.abs(pts).max(), 1.0)
    above = int((dist > tol).sum())
    below = int((dist < -tol).sum())
    if above > below or (above == below and _tie_flip(normal)):
        normal = -normal
        dist = -dist
    offset = float(normal @ centroid)
    residual = float(dist @ dist)
    return RegressionPlane(normal, offset, centroid, residual, n)


def _tie_flip(normal) -> bool:
    for comp in (normal[2], normal[1], normal[0]):
        if comp != 0.0:
            return comp < 0.0
    return False


def make_frame_transform(plane: RegressionPlane) -> FrameTransform:
    """Rotation taking the plane normal to +z; centroid goes to the origin.

    The new x-axis is the input x-axis projected onto the plane, or the
    input y-axis when the normal is parallel to x.
    """
    n = np.asarray(plane.normal, dtype=np.float64)
    x_axis = None
    for ref in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        proj = ref - (ref @ n) * n
        norm = np.linalg.norm(proj)
        if norm > 1e-9:
            x_axis = proj / norm
            break
    if x_axis is None:  # pragma: no cover - unreachable for a unit normal
        raise DegenerateGeometryError("cannot build an in-plane axis")
    y_axis = np.cross(n, x_axis)
    rotation = np.vstack([x_axis, y_axis, n])
    translation = -(rotation @ plane.centroid)
    return FrameTransform(rotation, translation)


def _grid_axis(lo: float, hi: float, pitch: float) -> tuple[float, int]:
    # nodes sit on integer multiples of pitch so shifted inputs share a lattice
    first = int(np.ceil(lo / pitch - 1e-9))
    last = int(np.floor(hi / pitch + 1e-9))
    if last < first:
        last = first
    return first * pitch, last - first + 1


def interpolate_occlusions(cloud, transform: FrameTransform | None, pitch: float) -> HeightGrid:
    """Resample the aligned cloud on a regular grid by linear interpolation.

    Every input point enters the triangulation. Grid nodes outside the
    convex hull of the projected points are marked invalid. ``pitch`` is in
    meters. With ``transform=None`` the cloud is taken as already aligned.
    """
    if not pitch > 0:
        raise ValidationError(f"grid pitch must be positive, got {pitch}")
    pts = _as_points(cloud)
    if transform is not None:
        pts = transform.apply(pts)
    if pts.shape[0] < 3:
        raise InsufficientDataError("interpolation needs at least 3 points")
    xy = pts[:, :2]
    try:
        tri = Delaunay(xy)
    except QhullError as exc:
        raise DegenerateGeometryError(f"projected points are collinear: {exc}") from None

    x0, nx = _grid_axis(xy[:, 0].min(), xy[:, 0].max(), pitch)
    y0, ny = _grid_axis(xy[:, 1].min(), xy[:, 1].max(), pitch)
    gx = x0 + np.arange(nx) * pitch
    gy = y0 + np.arange(ny) * pitch
    qx, qy = np.meshgrid(gx, gy, indexing="ij")
    query = np.column_stack([qx.ravel(), qy.ravel()])

    simplex = tri.find_simplex(query)
    inside = simplex >= 0
    z = np.full(query.shape[0], np.nan)
    if inside.any():
        s = simplex[inside]
        t = tri.transform[s]
        bary2 = np.einsum("nij,nj->ni", t[:, :2, :], query[inside] - t[:, 2, :])
        vz = pts[tri.simplices[s], 2]
        # offsets from the last vertex keep constant surfaces bit-exact
        z[inside] = vz[:, 2] + bary2[:, 0] * (vz[:, 0] - vz[:, 2]) + bary2[:, 1] * (vz[:, 1] - vz[:, 2])
    valid = inside.reshape(nx, ny)
    return HeightGrid(z.reshape(nx, ny), valid, float(pitch), (float(x0), float(y0)))


class PlaneAligner(TransformerMixin, BaseEstimator):
    """Fit the regression plane and map points into its frame.

    Parameters
    ----------
    None; the transformer has no hyper-parameters.

    Attributes
    ----------
    plane_ : RegressionPlane
    frame_ : FrameTransform
    """

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=3)
        if X.shape[1] != 3:
            raise ValidationError(f"expected (n, 3) points, got {X.shape}")
        self.plane_ = fit_regression_plane(X)
        self.frame_ = make_frame_transform(self.plane_)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "frame_")
        X = check_array(X)
        return self.frame_.apply(X)

    def inverse_transform(self, X):
        check_is_fitted(self, "frame_")
        X = check_array(X)
        return self.frame_.inverse(X)
