"""Gripper mask: voxelized graspable volume of an axisymmetric gripper.

Parametrization used throughout this package (lengths in millimeters,
angles in degrees from the gripper axis):

* the volume is a truncated cone whose top disc has radius
  ``palm_diameter / 2`` and sits in the pivot layer;
* it widens downward with half-angle ``max_angle - min_angle`` (the finger
  sweep), so equal angles give a cylinder;
* its depth below the pivot layer is
  ``finger_length * cos(min_angle) + spine_clearance``.

A voxel is solid iff its centre lies inside that cone. Lateral dimensions
are always odd so the axis passes through the pivot voxel centre.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .voxels import KIND_MASK, BitGrid, dump_grid, load_grid

_EPS = 1e-9


@dataclass(frozen=True)
class GripperParams:
    palm_diameter: float
    finger_length: float
    finger_angle_range: tuple[float, float] = (0.0, 30.0)
    spine_clearance: float = 0.0

    def __post_init__(self):
        rng = tuple(float(a) for a in self.finger_angle_range)
        object.__setattr__(self, "finger_angle_range", rng)
        if len(rng) != 2:
            raise ValidationError("finger_angle_range must be (min, max)")
        lo, hi = rng
        for name in ("palm_diameter", "finger_length"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"{name} must be positive, got {v}")
        if not (math.isfinite(self.spine_clearance) and self.spine_clearance >= 0):
            raise ValidationError(f"spine_clearance must be >= 0, got {self.spine_clearance}")
        if not (0.0 <= lo <= hi < 90.0):
            raise ValidationError(f"finger angles need 0 <= min <= max < 90, got {rng}")

    @property
    def half_angle(self) -> float:
        lo, hi = self.finger_angle_range
        return hi - lo

    @property
    def depth(self) -> float:
        lo = self.finger_angle_range[0]
        return self.finger_length * math.cos(math.radians(lo)) + self.spine_clearance

    def radius_at(self, d) -> np.ndarray:
        """Cone radius (mm) at depth ``d`` mm below the pivot layer."""
        return self.palm_diameter / 2 + np.asarray(d, dtype=np.float64) * math.tan(
            math.radians(self.half_angle)
        )

    def volume(self) -> float:
        """Analytic frustum volume in mm^3."""
        r0 = self.palm_diameter / 2
        r1 = float(self.radius_at(self.depth))
        return math.pi * self.depth / 3 * (r0 * r0 + r0 * r1 + r1 * r1)

    def to_dict(self) -> dict:
        return {
            "palm_diameter": self.palm_diameter,
            "finger_length": self.finger_length,
            "finger_angle_range": list(self.finger_angle_range),
            "spine_clearance": self.spine_clearance,
        }


@dataclass(frozen=True, eq=False)
class GripperMask:
    occupancy: BitGrid
    voxel_size_mm: float
    pivot: tuple[int, int, int]

    def __post_init__(self):
        i, j, k = self.occupancy.shape
        if i % 2 == 0 or j % 2 == 0:
            raise ValidationError(f"mask lateral dims must be odd, got {(i, j)}")
        want = (i // 2, j // 2, k - 1)
        if tuple(int(p) for p in self.pivot) != want:
            raise ValidationError(f"pivot must be the top-centre voxel {want}, got {self.pivot}")
        object.__setattr__(self, "pivot", want)
        if not self.voxel_size_mm > 0:
            raise ValidationError("voxel size must be positive")

    @classmethod
    def from_dense(cls, dense, voxel_size_mm) -> "GripperMask":
        """Wrap an arbitrary user-drawn mask; pivot is its top-centre voxel."""
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 3:
            raise ValidationError("mask must be 3D")
        if not dense.any():
            raise ValidationError("mask has no solid voxels")
        i, j, k = dense.shape
        return cls(BitGrid.from_dense(dense), float(voxel_size_mm), (i // 2, j // 2, k - 1))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.occupancy.shape

    def dense(self) -> np.ndarray:
        return self.occupancy.to_dense()

    def to_bytes(self) -> bytes:
        return dump_grid(self.occupancy, KIND_MASK, self.voxel_size_mm, pivot=self.pivot)

    @classmethod
    def from_bytes(cls, data: bytes) -> "GripperMask":
        rec = load_grid(data)
        if rec["kind"] != KIND_MASK:
            raise ValidationError("voxel dump does not hold a gripper mask")
        return cls(rec["grid"], rec["voxel_size_mm"], rec["pivot"])


def create_gripper_mask(params: GripperParams, c_mm) -> GripperMask:
    c = float(c_mm)
    if not (math.isfinite(c) and c > 0):
        raise ValidationError(f"voxel size must be positive, got {c_mm}")
    if c >= params.palm_diameter:
        raise ValidationError(
            f"voxel size {c} mm must be smaller than the palm diameter {params.palm_diameter} mm"
        )
    layers = int(math.floor(params.depth / c + _EPS)) + 1
    d = np.arange(layers) * c
    radius = params.radius_at(d) / c  # voxel units, index 0 = pivot layer
    half = int(math.floor(radius[-1] + _EPS))
    off = np.arange(-half, half + 1)
    rho2 = off[:, None] ** 2 + off[None, :] ** 2
    inside = rho2[:, :, None] <= radius[None, None, :] ** 2 + _EPS
    # mask k-axis points up: the pivot layer is the last one
    dense = inside[:, :, ::-1]
    return GripperMask(BitGrid.from_dense(dense), c, (half, half, layers - 1))


def mask_volume(M: GripperMask) -> int:
    return M.occupancy.count()
