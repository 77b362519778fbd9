"""Pinhole cameras, voxel sub-volumes, colored voxel cubes and view hulls."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import product

import numpy as np
from scipy.spatial import ConvexHull as _QHull

INVALID_FILL = np.array([0.5, 0.5, 0.5])
HULL_TOL = 1e-9


class GeometryError(ValueError):
    """Raised for degenerate geometric configurations."""


@dataclass(frozen=True, eq=False)
class CameraView:
    """Pinhole camera with a world-to-camera pose and an RGB raster.

    Pixel coordinates are (column, row); pixel centers sit on integers.
    """

    id: int
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image: np.ndarray | None = None

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise GeometryError(f"camera {self.id}: rotation is not orthonormal")
        if K[0, 0] <= 0 or K[1, 1] <= 0:
            raise GeometryError(f"camera {self.id}: focal lengths must be positive")
        if K[1, 0] != 0 or K[2, 0] != 0 or K[2, 1] != 0 or K[2, 2] != 1:
            raise GeometryError(f"camera {self.id}: malformed intrinsics")
        if not np.all(np.isfinite(t)):
            raise GeometryError(f"camera {self.id}: translation is not finite")
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self.image is not None:
            img = np.asarray(self.image, dtype=float)
            if img.ndim != 3 or img.shape[2] != 3:
                raise GeometryError(f"camera {self.id}: image must be HxWx3")
            object.__setattr__(self, "image", img)

    @cached_property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.T @ self.translation

    @property
    def image_size(self) -> tuple[int, int]:
        if self.image is None:
            raise GeometryError(f"camera {self.id} has no image")
        return self.image.shape[0], self.image.shape[1]

    def with_image(self, image: np.ndarray) -> "CameraView":
        return CameraView(self.id, self.intrinsics, self.rotation, self.translation, image)


@dataclass(frozen=True)
class SubVolume:
    """Axis-aligned cube of ``side_voxels``^3 voxels at scale level ``level``."""

    level: int
    origin: tuple[float, float, float]
    resolution: float
    side_voxels: int
    overlap_voxels: int = 0

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        if self.level < 1:
            raise GeometryError("level must be >= 1")
        if self.resolution <= 0 or self.side_voxels <= 0:
            raise GeometryError("sub-volume must have positive side length")
        if self.overlap_voxels < 0:
            raise GeometryError("overlap must be non-negative")

    @property
    def side_length(self) -> float:
        return self.side_voxels * self.resolution

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.origin)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.origin) + self.side_length

    @property
    def center(self) -> np.ndarray:
        return np.array(self.origin) + 0.5 * self.side_length

    def corners(self) -> np.ndarray:
        """The 8 cube corners, shape (8, 3)."""
        bits = np.array(list(product((0, 1), repeat=3)), dtype=float)
        return self.lower + bits * self.side_length

    def voxel_centers(self) -> np.ndarray:
        """World coordinates of voxel centers, shape (s, s, s, 3), indexed [i, j, k]."""
        ticks = (np.arange(self.side_voxels) + 0.5) * self.resolution
        gx, gy, gz = np.meshgrid(ticks, ticks, ticks, indexing="ij")
        return np.stack([gx, gy, gz], axis=-1) + np.array(self.origin)

    def contains(self, points: np.ndarray, tol: float = HULL_TOL) -> np.ndarray:
        """Closed-box membership; points on the boundary are inside."""
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower - tol) & (pts <= self.upper + tol), axis=1)


@dataclass(frozen=True, eq=False)
class ColoredVoxelCube:
    """One view's image unprojected into a sub-volume."""

    subvolume: SubVolume
    view: int
    colors: np.ndarray
    validity: np.ndarray


@dataclass(frozen=True, eq=False)
class ConvexHull:
    """Convex polytope as vertices plus outward half-spaces ``normals @ x + offsets <= 0``."""

    vertices: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray
    volume: float = field(default=0.0)


def _project_raw(camera: CameraView, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cam = points @ camera.rotation.T + camera.translation
    depth = cam[..., 2]
    homog = cam @ camera.intrinsics.T
    with np.errstate(divide="ignore", invalid="ignore"):
        pix = homog[..., :2] / homog[..., 2:3]
    return pix, depth


def project(camera: CameraView, point) -> np.ndarray | None:
    """Project a world point to real-valued pixel (u, v); ``None`` if behind the camera."""
    p = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(p)):
        raise GeometryError("point must be finite")
    pix, depth = _project_raw(camera, p.reshape(1, 3))
    if depth[0] <= 0:
        return None
    return pix[0]


def project_points(camera: CameraView, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection. Returns (pixels[..., 2], in_front mask)."""
    pix, depth = _project_raw(camera, np.asarray(points, dtype=float))
    return pix, depth > 0


def pixel_indices(camera: CameraView, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rounded (col, row) pixel indices and a validity mask for in-image, in-front points."""
    H, W = camera.image_size
    pix, front = project_points(camera, points)
    pix = np.where(front[..., None], pix, 0.0)
    col = np.floor(pix[..., 0] + 0.5)
    row = np.floor(pix[..., 1] + 0.5)
    valid = front & (col >= 0) & (col < W) & (row >= 0) & (row < H)
    col = np.where(valid, col, 0).astype(np.int64)
    row = np.where(valid, row, 0).astype(np.int64)
    return col, row, valid


def unproject_cvc(camera: CameraView, subvolume: SubVolume) -> ColoredVoxelCube:
    """Nearest-neighbour colored voxel cube of ``camera`` over ``subvolume``."""
    if camera.image is None or camera.image.size == 0:
        raise GeometryError("camera image is empty")
    col, row, valid = pixel_indices(camera, subvolume.voxel_centers())
    colors = camera.image[row, col]
    colors[~valid] = INVALID_FILL
    return ColoredVoxelCube(subvolume, camera.id, colors, valid)


def _cube_hull(subvolume: SubVolume) -> ConvexHull:
    lo, hi = subvolume.lower, subvolume.upper
    eye = np.eye(3)
    normals = np.concatenate([-eye, eye])
    offsets = np.concatenate([lo, -hi])
    return ConvexHull(subvolume.corners(), normals, offsets, subvolume.side_length ** 3)


def convex_hull(points: np.ndarray) -> ConvexHull:
    """Convex hull of a full-dimensional 3-D point set."""
    pts = np.asarray(points, dtype=float)
    qh = _QHull(pts)
    eq = qh.equations
    # qhull triangulates facets; drop duplicated planes.
    _, keep = np.unique(np.round(eq, 12), axis=0, return_index=True)
    eq = eq[np.sort(keep)]
    return ConvexHull(pts[qh.vertices], eq[:, :3], eq[:, 3], float(qh.volume))


def view_hull(subvolume: SubVolume, camera: CameraView) -> ConvexHull:
    """H(C, v): convex hull of the cube corners and the camera center."""
    o = camera.center
    if not np.all(np.isfinite(o)):
        raise GeometryError("camera center is not finite")
    if subvolume.contains(o, tol=0.0)[0]:
        return _cube_hull(subvolume)
    return convex_hull(np.vstack([subvolume.corners(), o]))


def hull_contains(hull: ConvexHull, points, tol: float = HULL_TOL) -> np.ndarray | bool:
    """Half-space membership test; the boundary counts as inside."""
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    inside = np.all(pts @ hull.normals.T + hull.offsets <= tol, axis=1)
    return bool(inside[0]) if single else inside


def baseline_angle(subvolume: SubVolume, v_i: CameraView, v_j: CameraView) -> float:
    """Angle at the sub-volume center between the rays to two camera centers."""
    return angle_at(subvolume.center, v_i.center, v_j.center)


def angle_at(apex, a, b) -> float:
    da = np.asarray(a, dtype=float) - apex
    db = np.asarray(b, dtype=float) - apex
    na, nb = np.linalg.norm(da), np.linalg.norm(db)
    if na == 0 or nb == 0:
        raise GeometryError("degenerate-baseline")
    # atan2 form stays accurate near 0 and pi.
    return float(np.arctan2(np.linalg.norm(np.cross(da, db)), np.dot(da, db)))


def look_at(center, target, up=(0.0, 0.0, 1.0)) -> tuple[np.ndarray, np.ndarray]:
    """World-to-camera (R, t) for a camera at ``center`` looking at ``target``.

    Camera axes: x right, y down, z forward.
    """
    c = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - c
    z /= np.linalg.norm(z)
    up = np.asarray(up, dtype=float)
    if abs(np.dot(z, up)) > 1 - 1e-9:
        up = np.array([0.0, 1.0, 0.0])
    x = np.cross(z, up)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return R, -R @ c


def intrinsics_matrix(fx: float, fy: float, cx: float, cy: float) -> np.ndarray:
    return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
