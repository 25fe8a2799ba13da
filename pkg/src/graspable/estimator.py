"""End-to-end graspability assessment as a scikit-learn style estimator."""

from __future__ import annotations

import math
import time

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .cloud_io import PointCloud, ScoredCloud
from .exceptions import ValidationError, tag_stage
from .gripper_mask import GripperParams, create_gripper_mask
from .preprocess import PlaneAligner, interpolate_occlusions
from .scoring import (
    DEFAULT_THRESHOLD,
    ScanOptions,
    assess_terrain,
    extract_graspable,
    scored_cloud_from_field,
)
from .terrain import FILL_MODES, create_terrain_array

STAGES = ("fit", "transform", "interpolate", "voxelize", "mask", "assess", "extract")


class GraspabilityAssessor(BaseEstimator):
    """Score every terrain voxel of a point cloud for a given gripper.

    Parameters
    ----------
    voxel_size : float
        Voxel edge ``c`` in millimeters; also the interpolation grid pitch.
    palm_diameter, finger_length : float
        Gripper geometry in millimeters.
    finger_angle_range : (float, float)
        Finger joint sweep in degrees from the gripper axis.
    spine_clearance : float
        Extra mask depth in millimeters.
    fill_mode : {"shell", "filled"}
    candidates : {"surface_voxels", "all_solid_voxels"}
    z_threshold : float or None
        Plane-frame height in meters; only candidates above it are scored.
    engine : {"packed", "reference"}
    threshold : float
        Graspable-set score cutoff in [0, 1].
    n_jobs : int or None
        Worker cap for scoring; None uses every core.

    Attributes
    ----------
    aligner_ : PlaneAligner
    grid_ : HeightGrid
    terrain_ : TerrainArray
    mask_ : GripperMask
    field_ : ScoreField
    graspable_ : GraspableSet
    stage_times_ : dict
        Wall time in seconds per pipeline stage.
    """

    def __init__(
        self,
        voxel_size=2.0,
        palm_diameter=30.0,
        finger_length=24.0,
        finger_angle_range=(0.0, 45.0),
        spine_clearance=0.0,
        fill_mode="shell",
        candidates="surface_voxels",
        z_threshold=None,
        engine="packed",
        threshold=DEFAULT_THRESHOLD,
        n_jobs=None,
    ):
        self.voxel_size = voxel_size
        self.palm_diameter = palm_diameter
        self.finger_length = finger_length
        self.finger_angle_range = finger_angle_range
        self.spine_clearance = spine_clearance
        self.fill_mode = fill_mode
        self.candidates = candidates
        self.z_threshold = z_threshold
        self.engine = engine
        self.threshold = threshold
        self.n_jobs = n_jobs

    def gripper_params(self) -> GripperParams:
        return GripperParams(
            float(self.palm_diameter),
            float(self.finger_length),
            tuple(self.finger_angle_range),
            float(self.spine_clearance),
        )

    def scan_options(self) -> ScanOptions:
        z = None if self.z_threshold is None else float(self.z_threshold)
        return ScanOptions(z, self.candidates, self.engine, self.n_jobs)

    def validate(self):
        """Check every hyper-parameter; raises ValidationError."""
        c = float(self.voxel_size)
        if not (math.isfinite(c) and c > 0):
            raise ValidationError(f"voxel size must be positive, got {self.voxel_size} mm")
        params = self.gripper_params()
        if c >= params.palm_diameter:
            raise ValidationError(
                f"voxel size {c} mm must be smaller than the palm diameter {params.palm_diameter} mm"
            )
        if self.fill_mode not in FILL_MODES:
            raise ValidationError(f"fill mode must be one of {FILL_MODES}, got {self.fill_mode!r}")
        opts = self.scan_options()
        t = float(self.threshold)
        if not 0.0 <= t <= 1.0:
            raise ValidationError(f"score threshold must lie in [0, 1], got {t}")
        return c, params, opts

    def fit(self, X, y=None, on_stage=None):
        """Run the whole pipeline on points ``X`` of shape (n, 3), meters.

        ``on_stage(name, seconds, info)`` is called after each stage.
        """
        c, params, opts = self.validate()
        pts = X.points if isinstance(X, PointCloud) else X
        pts = check_array(pts, ensure_min_samples=3, dtype=np.float64)
        if pts.shape[1] != 3:
            raise ValidationError(f"expected (n, 3) points, got {pts.shape}")
        self.n_points_ = pts.shape[0]
        self.stage_times_ = {}

        def run(name, fn, info=None):
            t0 = time.perf_counter()
            try:
                out = fn()
            except Exception as exc:
                raise tag_stage(exc, name)
            dt = time.perf_counter() - t0
            self.stage_times_[name] = dt
            if on_stage is not None:
                on_stage(name, dt, info(out) if info else {})
            return out

        self.aligner_ = run(
            "fit", lambda: PlaneAligner().fit(pts),
            lambda a: {"normal": a.plane_.normal.tolist(), "residual_rms": math.sqrt(a.plane_.residual_variance)},
        )
        aligned = run("transform", lambda: self.aligner_.transform(pts))
        self.grid_ = run(
            "interpolate", lambda: interpolate_occlusions(aligned, None, c / 1000.0),
            lambda g: {"grid_dims": list(g.shape), "valid_nodes": int(g.valid.sum())},
        )
        self.terrain_ = run(
            "voxelize", lambda: create_terrain_array(self.grid_, c, self.fill_mode),
            lambda t: {"voxel_dims": list(t.shape), "solid_voxels": t.solid_count()},
        )
        self.mask_ = run(
            "mask", lambda: create_gripper_mask(params, c),
            lambda m: {"mask_dims": list(m.shape), "mask_voxels": m.occupancy.count()},
        )
        self.field_ = run(
            "assess", lambda: assess_terrain(self.terrain_, self.mask_, opts),
            lambda f: {"candidates": f.n_candidates, "engine": f.engine},
        )
        self.graspable_ = run(
            "extract", lambda: extract_graspable(self.field_, self.threshold),
            lambda g: {"graspable": len(g), "threshold": float(self.threshold)},
        )
        return self

    def _columns(self, X):
        check_is_fitted(self, "field_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 3:
            raise ValidationError(f"expected (n, 3) points, got {X.shape}")
        local = self.aligner_.transform(X)
        T = self.terrain_
        ij = np.rint((local[:, :2] - np.asarray(T.origin[:2])) / T.voxel_size).astype(np.int64)
        inside = (ij >= 0).all(axis=1) & (ij[:, 0] < T.shape[0]) & (ij[:, 1] < T.shape[1])
        return ij, inside

    def column_scores(self) -> np.ndarray:
        """(I, J) score of the topmost candidate per column, NaN if none."""
        check_is_fitted(self, "field_")
        cand = self.field_.candidates
        has = cand.any(axis=2)
        top = cand.shape[2] - 1 - np.argmax(cand[:, :, ::-1], axis=2)
        i, j = np.indices(has.shape)
        out = self.field_.scores[i, j, top].astype(np.float64)
        out[~has] = np.nan
        return out

    def score_samples(self, X) -> np.ndarray:
        """Score of the column each input point falls in (NaN off the grid)."""
        ij, inside = self._columns(X)
        out = np.full(ij.shape[0], np.nan)
        cols = self.column_scores()
        out[inside] = cols[ij[inside, 0], ij[inside, 1]]
        return out

    def predict(self, X) -> np.ndarray:
        """True where the point's column meets the score threshold."""
        g = self.score_samples(X)
        return np.nan_to_num(g, nan=-1.0).astype(np.float32).astype(np.float64) >= float(self.threshold)

    def scored_cloud(self, frame: str = "plane") -> ScoredCloud:
        """Candidate voxel centres with scores, in the plane or input frame."""
        check_is_fitted(self, "field_")
        sc = scored_cloud_from_field(self.field_, self.terrain_)
        return ScoredCloud(self._to_frame(sc.points, frame), sc.scores)

    def graspable_points(self, frame: str = "plane"):
        check_is_fitted(self, "graspable_")
        return self._to_frame(self.graspable_.points, frame), self.graspable_.scores

    def _to_frame(self, pts, frame):
        if frame == "plane":
            return pts
        if frame == "input":
            return self.aligner_.inverse_transform(pts) if len(pts) else pts.reshape(0, 3)
        raise ValidationError(f"frame must be 'plane' or 'input', got {frame!r}")

    def summary(self) -> dict:
        check_is_fitted(self, "field_")
        return {
            "points": int(self.n_points_),
            "voxel_dims": list(self.terrain_.shape),
            "mask_dims": list(self.mask_.shape),
            "candidates": self.field_.n_candidates,
            "graspable": len(self.graspable_),
            "engine": self.field_.engine,
            "checksum": self.field_.checksum(),
            "wall_time_s": float(sum(self.stage_times_.values())),
        }
