"""Bit-packed boolean voxel grids and the raw ``GVOX`` dump format.

Voxel ``(i, j, k)`` of a grid with shape ``(I, J, K)`` lives in word
``(i * J + j) * W + k // 64`` at bit ``k % 64`` (LSB first), where
``W = ceil(K / 64)``. Bits past ``K`` in the last word of a column are
always zero. ``k`` is the vertical axis, so each (i, j) column is a short
run of words and vertical windows reduce to shifts.
"""

from __future__ import annotations

import struct

import numpy as np

from .exceptions import CloudParseError, ValidationError

MAGIC = b"GVOX"
VERSION = 1
# magic, version, kind, mode, I, J, K, c_mm, origin xyz, pivot ijk, nwords
_HEADER = struct.Struct("<4sHBB3Id3d3iQ")
KIND_TERRAIN = 0
KIND_MASK = 1
_MODE_CODES = {"shell": 0, "filled": 1, None: 255}
_MODE_NAMES = {v: k for k, v in _MODE_CODES.items()}


def words_per_column(depth: int) -> int:
    return max(1, (depth + 63) // 64)


class BitGrid:
    """Immutable 3D boolean array packed into uint64 columns."""

    __slots__ = ("shape", "words")

    def __init__(self, shape, words):
        shape = tuple(int(s) for s in shape)
        if len(shape) != 3 or min(shape) < 1:
            raise ValidationError(f"grid shape must be three positive ints, got {shape}")
        words = np.ascontiguousarray(words, dtype=np.uint64)
        expected = (shape[0], shape[1], words_per_column(shape[2]))
        if words.shape != expected:
            raise ValidationError(f"word array shape {words.shape} != {expected}")
        tail = shape[2] % 64
        if tail and (words[..., -1] >> np.uint64(tail)).any():
            raise ValidationError("bits set beyond the grid depth")
        words.setflags(write=False)
        self.shape = shape
        self.words = words

    @classmethod
    def from_dense(cls, dense) -> "BitGrid":
        dense = np.asarray(dense, dtype=bool)
        if dense.ndim != 3:
            raise ValidationError("dense occupancy must be 3D")
        i, j, k = dense.shape
        nw = words_per_column(k)
        padded = np.zeros((i, j, nw * 64), dtype=bool)
        padded[:, :, :k] = dense
        packed = np.packbits(padded, axis=2, bitorder="little")
        words = packed.view("<u8").astype(np.uint64).reshape(i, j, nw)
        return cls(dense.shape, words)

    @classmethod
    def empty(cls, shape) -> "BitGrid":
        shape = tuple(int(s) for s in shape)
        return cls(shape, np.zeros((shape[0], shape[1], words_per_column(shape[2])), np.uint64))

    def to_dense(self) -> np.ndarray:
        as_bytes = self.words.astype("<u8").view(np.uint8)
        bits = np.unpackbits(as_bytes, axis=2, bitorder="little")
        return bits[:, :, : self.shape[2]].astype(bool)

    def get(self, i: int, j: int, k: int) -> bool:
        i, j, k = int(i), int(j), int(k)
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1] and 0 <= k < self.shape[2]):
            return False
        return bool((int(self.words[i, j, k >> 6]) >> (k & 63)) & 1)

    def with_voxel(self, i: int, j: int, k: int, value: bool) -> "BitGrid":
        """Copy with one voxel changed."""
        i, j, k = int(i), int(j), int(k)
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1] and 0 <= k < self.shape[2]):
            raise ValidationError(f"voxel {(i, j, k)} outside grid {self.shape}")
        words = self.words.copy()
        bit = np.uint64(1) << np.uint64(k & 63)
        if value:
            words[i, j, k >> 6] |= bit
        else:
            words[i, j, k >> 6] &= ~bit
        return BitGrid(self.shape, words)

    def count(self) -> int:
        return int(np.bitwise_count(self.words).sum(dtype=np.int64))

    def column_counts(self) -> np.ndarray:
        return np.bitwise_count(self.words).sum(axis=2, dtype=np.int64)

    def __eq__(self, other):
        return (
            isinstance(other, BitGrid)
            and self.shape == other.shape
            and np.array_equal(self.words, other.words)
        )

    def __repr__(self):
        return f"BitGrid(shape={self.shape}, solids={self.count()})"


def dump_grid(grid: BitGrid, kind: int, voxel_size_mm: float, origin=(0.0, 0.0, 0.0),
              pivot=(-1, -1, -1), mode: str | None = None) -> bytes:
    header = _HEADER.pack(
        MAGIC, VERSION, kind, _MODE_CODES[mode], *grid.shape,
        float(voxel_size_mm), *(float(o) for o in origin), *(int(p) for p in pivot),
        grid.words.size,
    )
    return header + grid.words.astype("<u8").tobytes()


def load_grid(data: bytes) -> dict:
    """Inverse of :func:`dump_grid`; returns the header fields plus ``grid``."""
    if len(data) < _HEADER.size:
        raise CloudParseError("voxel dump shorter than its header", offset=len(data))
    fields = _HEADER.unpack_from(data)
    magic, version, kind, mode, i, j, k, c_mm = fields[:8]
    origin, pivot, nwords = fields[8:11], fields[11:14], fields[14]
    if magic != MAGIC:
        raise CloudParseError("bad voxel dump magic", offset=0)
    if version != VERSION:
        raise CloudParseError(f"unsupported voxel dump version {version}", offset=4)
    if mode not in _MODE_NAMES:
        raise CloudParseError(f"unknown fill mode code {mode}", offset=7)
    if min(i, j, k) < 1 or nwords != i * j * words_per_column(k):
        raise CloudParseError("inconsistent voxel dump dimensions", offset=8)
    end = _HEADER.size + 8 * nwords
    if len(data) < end:
        raise CloudParseError("truncated voxel dump body", offset=len(data))
    words = np.frombuffer(data, dtype="<u8", count=nwords, offset=_HEADER.size)
    grid = BitGrid((i, j, k), words.astype(np.uint64).reshape(i, j, words_per_column(k)))
    return {
        "kind": kind,
        "mode": _MODE_NAMES[mode],
        "voxel_size_mm": c_mm,
        "origin": tuple(origin),
        "pivot": tuple(pivot),
        "grid": grid,
    }
