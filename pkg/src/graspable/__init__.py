"""Voxel-based graspability assessment of terrain point clouds."""

from .cloud_io import PointCloud, ScoredCloud, read_cloud, write_cloud, write_scored_cloud
from .estimator import GraspabilityAssessor
from .exceptions import (
    CloudParseError,
    DegenerateGeometryError,
    GraspableError,
    InsufficientDataError,
    UnsupportedFormatError,
    ValidationError,
)
from .gripper_mask import GripperMask, GripperParams, create_gripper_mask
from .preprocess import PlaneAligner, fit_regression_plane, interpolate_occlusions, make_frame_transform
from .scoring import ScanOptions, ScoreField, assess_terrain, extract_graspable
from .synth import SceneSpec, generate_scene, hemisphere_scene
from .terrain import TerrainArray, create_terrain_array

__version__ = "0.1.0"

__all__ = [
    "CloudParseError",
    "DegenerateGeometryError",
    "GraspabilityAssessor",
    "GraspableError",
    "GripperMask",
    "GripperParams",
    "InsufficientDataError",
    "PlaneAligner",
    "PointCloud",
    "ScanOptions",
    "ScoreField",
    "SceneSpec",
    "ScoredCloud",
    "TerrainArray",
    "UnsupportedFormatError",
    "ValidationError",
    "assess_terrain",
    "create_gripper_mask",
    "create_terrain_array",
    "extract_graspable",
    "fit_regression_plane",
    "generate_scene",
    "hemisphere_scene",
    "interpolate_occlusions",
    "make_frame_transform",
    "read_cloud",
    "write_cloud",
    "write_scored_cloud",
]
