from .core import (
    CANDIDATE_POLICIES,
    DEFAULT_THRESHOLD,
    ENGINES,
    GraspableSet,
    ScanOptions,
    ScoreField,
    assess_terrain,
    extract_graspable,
    score_ratio,
    score_voxel,
    scored_cloud_from_field,
    select_candidates,
    summed_volume_table,
)

__all__ = [
    "CANDIDATE_POLICIES",
    "DEFAULT_THRESHOLD",
    "ENGINES",
    "GraspableSet",
    "ScanOptions",
    "ScoreField",
    "assess_terrain",
    "extract_graspable",
    "score_ratio",
    "score_voxel",
    "scored_cloud_from_field",
    "select_candidates",
    "summed_volume_table",
]
