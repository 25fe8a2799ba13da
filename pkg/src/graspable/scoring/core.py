"""Sliding-mask graspability scoring.

For a candidate voxel ``p`` the mask pivot is placed on ``p`` and the
same-sized terrain window ``T*`` is read with void padding. The score is
``|M & T*| / |T*|`` with ``0`` for an empty window.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from ..cloud_io import ScoredCloud
from ..exceptions import ValidationError
from ..gripper_mask import GripperMask
from ..terrain import TerrainArray, VoxelWindow

CANDIDATE_POLICIES = ("surface_voxels", "all_solid_voxels")
ENGINES = ("reference", "packed")
DEFAULT_THRESHOLD = 0.8


def score_ratio(num, den) -> np.ndarray:
    """Integer counts to float32 scores; one float64 division, then rounding."""
    num = np.asarray(num, dtype=np.int64)
    den = np.asarray(den, dtype=np.int64)
    safe = np.where(den > 0, den, 1)
    return np.where(den > 0, num / safe, 0.0).astype(np.float32)


@dataclass(frozen=True)
class ScanOptions:
    z_threshold: float | None = None
    candidates: str = "surface_voxels"
    engine: str = "packed"
    threads: int | None = None

    def __post_init__(self):
        if self.candidates not in CANDIDATE_POLICIES:
            raise ValidationError(f"candidate policy must be one of {CANDIDATE_POLICIES}")
        if self.engine not in ENGINES:
            raise ValidationError(f"engine must be one of {ENGINES}")
        if self.threads is not None and int(self.threads) < 1:
            raise ValidationError("threads must be >= 1")
        if self.z_threshold is not None and not np.isfinite(self.z_threshold):
            raise ValidationError("z_threshold must be finite")


@dataclass(frozen=True, eq=False)
class ScoreField:
    """Per-voxel scores aligned with a terrain array.

    ``scores`` holds float32 values for candidates and NaN elsewhere.
    ``numerators``/``denominators`` are the integer pairs per candidate in
    the order of :meth:`candidate_indices`.
    """

    scores: np.ndarray
    candidates: np.ndarray
    voxel_size_mm: float
    origin: tuple[float, float, float]
    numerators: np.ndarray
    denominators: np.ndarray
    engine: str = "packed"

    @property
    def shape(self):
        return self.scores.shape

    @property
    def n_candidates(self) -> int:
        return int(self.candidates.sum())

    def candidate_indices(self) -> np.ndarray:
        """(n, 3) candidate indices in ascending linearized order."""
        return np.argwhere(self.candidates).astype(np.int64)

    def candidate_scores(self) -> np.ndarray:
        return self.scores[self.candidates]

    def checksum(self) -> str:
        """SHA-256 over shape, candidate bitmap and candidate score bits."""
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype="<i8").tobytes())
        h.update(np.packbits(self.candidates.ravel()).tobytes())
        h.update(self.candidate_scores().astype("<f4").tobytes())
        return h.hexdigest()

    def identical_to(self, other: "ScoreField") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.candidates, other.candidates)
            and np.array_equal(
                self.scores.view(np.uint32), other.scores.view(np.uint32)
            )
        )


@dataclass(frozen=True)
class GraspableSet:
    indices: np.ndarray
    points: np.ndarray
    scores: np.ndarray
    threshold: float

    def __len__(self):
        return self.indices.shape[0]


def score_voxel(window: VoxelWindow, M: GripperMask) -> float:
    if tuple(window.dims) != tuple(M.shape):
        raise ValidationError(f"window dims {window.dims} != mask dims {M.shape}")
    inner = int(np.bitwise_count(window.column_words() & M.occupancy.words).sum(dtype=np.int64))
    solids = window.solid_count()
    return float(score_ratio(inner, solids))


def select_candidates(T: TerrainArray, policy: str, z_threshold=None) -> np.ndarray:
    if policy == "surface_voxels":
        idx = T.surface_voxels()
    elif policy == "all_solid_voxels":
        idx = np.argwhere(T.dense()).astype(np.int64)
    else:
        raise ValidationError(f"candidate policy must be one of {CANDIDATE_POLICIES}")
    if z_threshold is not None:
        zc = T.origin[2] + idx[:, 2] * T.voxel_size
        idx = idx[zc > z_threshold]
    # ascending linear index so both engines see one order
    if idx.shape[0]:
        lin = np.ravel_multi_index(idx.T, T.shape)
        idx = idx[np.argsort(lin, kind="stable")]
    return np.ascontiguousarray(idx, dtype=np.int64)


def _set_threads(threads):
    import numba

    from . import _kernels  # noqa: F401  selects the threading layer first

    if threads is None:
        threads = os.cpu_count() or 1
    numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))


def _reference(T: TerrainArray, M: GripperMask, cand):
    from ._kernels import reference_counts

    num = np.zeros(cand.shape[0], dtype=np.int64)
    den = np.zeros(cand.shape[0], dtype=np.int64)
    if cand.shape[0]:
        reference_counts(
            T.dense().astype(np.uint8), M.dense().astype(np.uint8),
            np.asarray(M.pivot, dtype=np.int64), cand, num, den,
        )
    return num, den


def summed_volume_table(dense) -> np.ndarray:
    """(I+1, J+1, K+1) inclusive prefix sums with a zero border."""
    d = np.asarray(dense, dtype=np.int64)
    svt = np.zeros(tuple(s + 1 for s in d.shape), dtype=np.int64)
    svt[1:, 1:, 1:] = d.cumsum(0).cumsum(1).cumsum(2)
    return svt


def _row_spans(used) -> np.ndarray:
    """Per row of a 2D boolean array, the half-open range of True entries."""
    spans = np.zeros((used.shape[0], 2), dtype=np.int64)
    for a, row in enumerate(used):
        nz = np.flatnonzero(row)
        if nz.size:
            spans[a] = nz[0], nz[-1] + 1
    return spans


def _group_mask(mwords, depth, group) -> np.ndarray:
    mi, mj = mwords.shape[:2]
    n_groups = -(-mj // group)
    out = np.zeros((mi, n_groups), dtype=np.uint64)
    for t in range(group):
        cols = mwords[:, t::group, 0]
        out[:, : cols.shape[1]] |= cols << np.uint64(depth * t)
    return out


def _packed(T: TerrainArray, M: GripperMask, cand):
    from ._kernels import grouped_windows, packed_counts, packed_counts_grouped, window_words

    num = np.zeros(cand.shape[0], dtype=np.int64)
    den = np.zeros(cand.shape[0], dtype=np.int64)
    if not cand.shape[0]:
        return num, den
    mwords = M.occupancy.words
    depth = M.shape[2]
    pivot = np.asarray(M.pivot, dtype=np.int64)
    # the pivot sits in the mask's top layer, so window start index == pk
    if depth <= 64:
        group = 64 // depth
        gmask = _group_mask(mwords, depth, group)
        gw, sat = grouped_windows(T.occupancy.words, T.shape[2], depth, M.pivot[0], M.pivot[1], group)
        packed_counts_grouped(
            gw, sat, gmask, group, _row_spans(gmask != 0), np.asarray(M.shape, dtype=np.int64),
            cand, num, den,
        )
    else:
        win = window_words(T.occupancy.words, T.shape[2], depth, mwords.shape[2], M.pivot[0], M.pivot[1])
        svt = summed_volume_table(T.dense())
        packed_counts(
            win, mwords, _row_spans(mwords.any(axis=2)), depth, pivot, svt, cand, num, den,
        )
    return num, den


def assess_terrain(T: TerrainArray, M: GripperMask, opts: ScanOptions | None = None) -> ScoreField:
    """Score every candidate voxel of ``T`` against mask ``M``."""
    opts = opts or ScanOptions()
    if abs(T.voxel_size_mm - M.voxel_size_mm) > 1e-9 * max(T.voxel_size_mm, 1.0):
        raise ValidationError(
            f"terrain voxel size {T.voxel_size_mm} mm != mask voxel size {M.voxel_size_mm} mm"
        )
    if opts.z_threshold is not None:
        lo, hi = T.z_extent
        if not (lo <= opts.z_threshold <= hi):
            raise ValidationError(
                f"z_threshold {opts.z_threshold} m outside terrain z-extent [{lo}, {hi}]"
            )
    cand = select_candidates(T, opts.candidates, opts.z_threshold)
    _set_threads(opts.threads)
    if opts.engine == "reference":
        num, den = _reference(T, M, cand)
    else:
        num, den = _packed(T, M, cand)

    scores = np.full(T.shape, np.nan, dtype=np.float32)
    mask = np.zeros(T.shape, dtype=bool)
    if cand.shape[0]:
        ii, jj, kk = cand.T
        scores[ii, jj, kk] = score_ratio(num, den)
        mask[ii, jj, kk] = True
    return ScoreField(scores, mask, T.voxel_size_mm, T.origin, num, den, opts.engine)


def extract_graspable(field: ScoreField, threshold: float = DEFAULT_THRESHOLD) -> GraspableSet:
    """Candidates with ``g >= threshold``, best first (ties: lower linear index)."""
    threshold = float(threshold)
    if not (0.0 <= threshold <= 1.0):
        raise ValidationError(f"score threshold must lie in [0, 1], got {threshold}")
    idx = field.candidate_indices()
    g = field.scores[tuple(idx.T)] if idx.shape[0] else np.zeros(0, np.float32)
    # compared against the stored float32 score, as written to disk
    keep = g.astype(np.float64) >= threshold
    idx, g = idx[keep], g[keep]
    order = np.lexsort((np.arange(len(g)), -g.astype(np.float64)))
    idx, g = idx[order], g[order]
    c = field.voxel_size_mm / 1000.0
    pts = np.asarray(field.origin) + idx * c
    return GraspableSet(idx, pts, g.astype(np.float64), threshold)


def scored_cloud_from_field(field: ScoreField, T: TerrainArray | None = None) -> ScoredCloud:
    """One point per candidate at its voxel centre, in candidate order."""
    if T is not None and tuple(T.shape) != tuple(field.shape):
        raise ValidationError("score field and terrain array shapes differ")
    idx = field.candidate_indices()
    c = field.voxel_size_mm / 1000.0
    pts = np.asarray(field.origin) + idx * c
    g = field.scores[tuple(idx.T)].astype(np.float64) if idx.shape[0] else np.zeros(0)
    return ScoredCloud(pts.reshape(-1, 3), g)
