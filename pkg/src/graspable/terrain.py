"""Terrain array: the voxelized height field plus windowed access.

Layer ``k`` of a terrain array is centred at ``origin[2] + k * c`` and
covers ``[center - c/2, center + c/2)``. Voxel-layer centres always fall on
integer multiples of ``c`` so that terrains built from shifted grids share
one lattice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientDataError, ValidationError
from .preprocess import HeightGrid
from .voxels import KIND_TERRAIN, BitGrid, dump_grid, load_grid

FILL_MODES = ("shell", "filled")


def _check_voxel_size(c_mm) -> float:
    c_mm = float(c_mm)
    if not (np.isfinite(c_mm) and c_mm > 0):
        raise ValidationError(f"voxel size must be positive, got {c_mm} mm")
    return c_mm


@dataclass(frozen=True, eq=False)
class TerrainArray:
    occupancy: BitGrid
    voxel_size_mm: float
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mode: str = "shell"

    def __post_init__(self):
        _check_voxel_size(self.voxel_size_mm)
        if self.mode not in FILL_MODES:
            raise ValidationError(f"fill mode must be one of {FILL_MODES}, got {self.mode!r}")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @classmethod
    def from_dense(cls, dense, voxel_size_mm, origin=(0.0, 0.0, 0.0), mode="shell"):
        return cls(BitGrid.from_dense(dense), voxel_size_mm, origin, mode)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    @property
    def voxel_size(self) -> float:
        """Voxel edge in meters."""
        return self.voxel_size_mm / 1000.0

    @property
    def z_extent(self) -> tuple[float, float]:
        c = self.voxel_size
        return self.origin[2] - c / 2, self.origin[2] + (self.shape[2] - 0.5) * c

    def dense(self) -> np.ndarray:
        return self.occupancy.to_dense()

    def solid_count(self) -> int:
        return self.occupancy.count()

    def voxel_centers(self, index) -> np.ndarray:
        """World (plane-frame) centres of integer voxel indices, shape (n, 3)."""
        idx = np.asarray(index, dtype=np.float64).reshape(-1, 3)
        return np.asarray(self.origin) + idx * self.voxel_size

    def surface_voxels(self) -> np.ndarray:
        """(n, 3) indices of the topmost solid voxel of every non-empty column."""
        dense = self.dense()
        has = dense.any(axis=2)
        top = dense.shape[2] - 1 - np.argmax(dense[:, :, ::-1], axis=2)
        i, j = np.nonzero(has)
        return np.column_stack([i, j, top[i, j]]).astype(np.int64)

    def to_bytes(self) -> bytes:
        return dump_grid(self.occupancy, KIND_TERRAIN, self.voxel_size_mm, self.origin, mode=self.mode)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TerrainArray":
        rec = load_grid(data)
        if rec["kind"] != KIND_TERRAIN:
            raise ValidationError("voxel dump does not hold a terrain array")
        return cls(rec["grid"], rec["voxel_size_mm"], rec["origin"], rec["mode"])


def create_terrain_array(grid: HeightGrid, c_mm, mode: str = "shell", z_extent=None) -> TerrainArray:
    """Voxelize a height grid at voxel edge ``c_mm`` millimeters.

    Shell mode marks the voxel holding each valid node's height; filled mode
    also marks everything beneath it. The default vertical extent runs one
    layer below the lowest and one above the highest surface voxel;
    ``z_extent=(z_lo, z_hi)`` in meters widens it.
    """
    c_mm = _check_voxel_size(c_mm)
    if mode not in FILL_MODES:
        raise ValidationError(f"fill mode must be one of {FILL_MODES}, got {mode!r}")
    c = c_mm / 1000.0
    if abs(grid.pitch - c) > 1e-9 * c:
        raise ValidationError(f"grid pitch {grid.pitch} m does not match voxel size {c} m")
    valid = grid.valid & np.isfinite(grid.z)
    if not valid.any():
        raise InsufficientDataError("height grid has no valid cells")

    layer = np.zeros(grid.z.shape, dtype=np.int64)
    layer[valid] = np.floor(grid.z[valid] / c + 0.5).astype(np.int64)
    lo = int(layer[valid].min()) - 1
    hi = int(layer[valid].max()) + 1
    if z_extent is not None:
        z_lo, z_hi = (float(z) for z in z_extent)
        want_lo = int(np.floor(z_lo / c + 0.5))
        want_hi = int(np.floor(z_hi / c + 0.5))
        if want_lo > lo + 1 or want_hi < hi - 1:
            raise ValidationError("z_extent does not contain the terrain surface")
        lo, hi = min(lo, want_lo), max(hi, want_hi)

    depth = hi - lo + 1
    k = layer - lo
    nx, ny = grid.z.shape
    ks = np.arange(depth)
    if mode == "shell":
        dense = (ks[None, None, :] == k[:, :, None]) & valid[:, :, None]
    else:
        dense = (ks[None, None, :] <= k[:, :, None]) & valid[:, :, None]
    origin = (grid.origin[0], grid.origin[1], lo * c)
    return TerrainArray(BitGrid.from_dense(dense), c_mm, origin, mode)


def _bit_range_words(nw: int, lo: int, hi: int) -> np.ndarray:
    """uint64[nw] with bits ``lo <= k < hi`` set."""
    out = np.zeros(nw, dtype=np.uint64)
    for w in range(nw):
        a = max(lo - 64 * w, 0)
        b = min(hi - 64 * w, 64)
        if b > a:
            span = (1 << (b - a)) - 1
            out[w] = np.uint64(span << a)
    return out


class VoxelWindow:
    """Read-only view of ``dims`` voxels starting at ``corner``.

    Indices are window-relative. Reads outside the underlying array return
    0 (void padding), so any corner is legal.
    """

    __slots__ = ("terrain", "corner", "dims")

    def __init__(self, terrain: TerrainArray, corner, dims):
        self.terrain = terrain
        self.corner = tuple(int(v) for v in corner)
        self.dims = tuple(int(v) for v in dims)
        if len(self.corner) != 3 or len(self.dims) != 3 or min(self.dims) < 1:
            raise ValidationError(f"bad window corner {corner} / dims {dims}")

    def __getitem__(self, idx) -> int:
        a, b, c = idx
        if not (0 <= a < self.dims[0] and 0 <= b < self.dims[1] and 0 <= c < self.dims[2]):
            raise IndexError(f"{idx} outside window of dims {self.dims}")
        ci, cj, ck = self.corner
        return int(self.terrain.occupancy.get(ci + a, cj + b, ck + c))

    def _overlap(self):
        bounds = []
        for axis in range(3):
            lo = max(self.corner[axis], 0)
            hi = min(self.corner[axis] + self.dims[axis], self.terrain.shape[axis])
            bounds.append((lo, hi))
        return bounds

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dims, dtype=bool)
        (i0, i1), (j0, j1), (k0, k1) = self._overlap()
        if i1 > i0 and j1 > j0 and k1 > k0:
            src = self.terrain.dense()[i0:i1, j0:j1, k0:k1]
            ci, cj, ck = self.corner
            out[i0 - ci:i1 - ci, j0 - cj:j1 - cj, k0 - ck:k1 - ck] = src
        return out

    def column_words(self) -> np.ndarray:
        """Window occupancy repacked as (di, dj, words) with bit 0 = window layer 0."""
        return BitGrid.from_dense(self.to_dense()).words

    def solid_count(self) -> int:
        (i0, i1), (j0, j1), (k0, k1) = self._overlap()
        if not (i1 > i0 and j1 > j0 and k1 > k0):
            return 0
        words = self.terrain.occupancy.words[i0:i1, j0:j1, :]
        mask = _bit_range_words(words.shape[2], k0, k1)
        return int(np.bitwise_count(words & mask).sum(dtype=np.int64))


def extract_window(T: TerrainArray, corner, dims) -> VoxelWindow:
    return VoxelWindow(T, corner, dims)


def solid_count(w: VoxelWindow) -> int:
    """Solid voxels in the window (the squared Frobenius norm of a 0/1 array)."""
    return w.solid_count()
