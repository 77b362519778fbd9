"""Coarse-to-fine sub-volume scheduling.

Level 1 tiles the whole bounding box. Every later level keeps only the lattice
cells that contain at least one point of the previous level's surface, which
covers that surface and never schedules an empty cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .geometry import SubVolume

DEFAULT_DELTA = 4


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class BoundingBox:
    lower: tuple[float, float, float]
    upper: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if any(h <= l for l, h in zip(lo, hi)):
            raise ScheduleError("invalid-partition: degenerate bounding box")

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)


@dataclass(frozen=True)
class ResolutionSchedule:
    levels: tuple[tuple[int, float], ...]
    common_ratio: int
    target_resolution: float

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def resolution(self, k: int) -> float:
        return self.levels[k - 1][1]

    @property
    def resolutions(self) -> list[float]:
        return [r for _, r in self.levels]


@dataclass(frozen=True)
class Partition:
    level: int
    cells: tuple[SubVolume, ...]
    stride: float

    def __len__(self) -> int:
        return len(self.cells)


@dataclass(frozen=True, eq=False)
class SurfacePointCloud:
    level: int
    points: np.ndarray
    resolution: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("surface points must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def make_schedule(r1: float, delta: int = DEFAULT_DELTA, target: float | None = None) -> ResolutionSchedule:
    """Geometric resolution sequence r1, r1/delta, ... down to the first value <= target."""
    if target is None:
        target = r1
    if not (r1 > 0 and target > 0) or delta < 2 or r1 < target:
        raise ScheduleError("invalid-schedule")
    levels = [(1, float(r1))]
    # Relative slack absorbs float error in r1 / delta**k (e.g. 8/4/4 vs 0.5).
    while levels[-1][1] > target * (1 + 1e-12):
        k, r = levels[-1]
        levels.append((k + 1, r / delta))
    return ResolutionSchedule(tuple(levels), int(delta), float(target))


def _stride_voxels(s: int, overlap_voxels: int) -> int:
    if s <= 0:
        raise ScheduleError("invalid-partition: side_voxels must be positive")
    if not 0 <= overlap_voxels < s:
        raise ScheduleError("invalid-partition: overlap must be in [0, s)")
    return s - overlap_voxels


def axis_positions(length: float, cell: float, stride: float) -> list[float]:
    """Cell start offsets along one axis covering [0, length], the last one clamped."""
    if length <= cell:
        return [0.0]
    n = math.ceil((length - cell) / stride - 1e-9) + 1
    positions = [i * stride for i in range(n)]
    positions[-1] = min(positions[-1], length - cell)
    return positions


def initial_partition(bbox: BoundingBox, s: int, r1: float, overlap_voxels: int = 0) -> Partition:
    """Level-1 lattice tiling the whole bounding box."""
    stride = _stride_voxels(s, overlap_voxels) * r1
    cell = s * r1
    per_axis = [axis_positions(L, cell, stride) for L in bbox.extent]
    lo = np.array(bbox.lower)
    cells = tuple(
        SubVolume(1, tuple(lo + np.array(offs)), r1, s, overlap_voxels)
        for offs in product(*per_axis)
    )
    return Partition(1, cells, stride)


def lattice_origin(bbox_lower, index, stride: float) -> np.ndarray:
    return np.asarray(bbox_lower, dtype=float) + np.asarray(index, dtype=float) * stride


def _containing_indices(points: np.ndarray, lower: np.ndarray, stride: float, cell: float) -> np.ndarray:
    """All lattice indices (i, j, k) whose half-open cell [o, o + cell) holds some point."""
    # Work in offsets from the lattice anchor: i * stride + cell then equals
    # (i + 1) * stride exactly when overlap is 0, so faces are not shared.
    rel = points - lower
    base = np.floor(rel / stride).astype(np.int64)
    reach = math.ceil(cell / stride)
    offsets = range(-reach, 2)
    # Membership factors per axis, so test each axis once per offset.
    axis_in = {}
    for off in offsets:
        start = (base + off) * stride
        axis_in[off] = (rel >= start) & (rel < start + cell)
    lo = base.min(axis=0) - reach
    dims = tuple(base.max(axis=0) + 2 - lo)
    keys = []
    for ox, oy, oz in product(offsets, repeat=3):
        inside = axis_in[ox][:, 0] & axis_in[oy][:, 1] & axis_in[oz][:, 2]
        if inside.any():
            idx = base[inside] + np.array([ox, oy, oz]) - lo
            keys.append(np.unique(np.ravel_multi_index(idx.T, dims)))
    if not keys:
        return np.zeros((0, 3), dtype=np.int64)
    # C-order keys sort the same way as the (i, j, k) tuples.
    flat = np.unique(np.concatenate(keys))
    return np.stack(np.unravel_index(flat, dims), axis=1) + lo


def refine_partition(prev_surface: SurfacePointCloud, schedule: ResolutionSchedule, k: int,
                     s: int, overlap_voxels: int, bbox: BoundingBox) -> Partition:
    """Level-k cells of the lattice anchored at ``bbox.lower`` that contain a coarse point.

    Cell i holds point q when i * stride <= q - bbox.lower < i * stride + s * r_k
    on every axis.
    Cells come back sorted lexicographically by lattice index.
    """
    if k < 2 or k > schedule.num_levels:
        raise ScheduleError(f"invalid level {k}")
    if prev_surface.level != k - 1:
        raise ScheduleError("previous surface must come from level k-1")
    r_k = schedule.resolution(k)
    stride = _stride_voxels(s, overlap_voxels) * r_k
    if len(prev_surface) == 0:
        return Partition(k, (), stride)
    lower = np.array(bbox.lower)
    indices = _containing_indices(prev_surface.points, lower, stride, s * r_k)
    cells = tuple(SubVolume(k, tuple(lattice_origin(lower, idx, stride)), r_k, s, overlap_voxels)
                  for idx in indices)
    return Partition(k, cells, stride)


def surface_from_probability(cells, tau: float) -> SurfacePointCloud:
    """Threshold fused probabilities into world-space voxel centers.

    Overlapping cells are merged per world voxel by keeping the larger
    probability before thresholding. Cells are a sequence of
    (SubVolume, ProbabilityVolume-or-array).
    """
    cells = list(cells)
    if not cells:
        return SurfacePointCloud(1, np.zeros((0, 3)), 1.0)
    levels = {sv.level for sv, _ in cells}
    if len(levels) != 1:
        raise ScheduleError("all cells must share one level")
    sv0 = cells[0][0]
    r = sv0.resolution
    ref = np.min([sv.origin for sv, _ in cells], axis=0)
    keys, probs = [], []
    for sv, vol in cells:
        p = np.asarray(getattr(vol, "probs", vol))
        offset = np.rint((np.array(sv.origin) - ref) / r).astype(np.int64)
        idx = np.indices(p.shape).reshape(3, -1).T + offset
        keys.append(idx)
        probs.append(p.ravel())
    keys = np.concatenate(keys)
    probs = np.concatenate(probs)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    best = np.full(len(uniq), -np.inf)
    np.maximum.at(best, inverse.ravel(), probs)
    occupied = uniq[best > tau]
    points = ref + (occupied + 0.5) * r
    return SurfacePointCloud(sv0.level, points, r)
