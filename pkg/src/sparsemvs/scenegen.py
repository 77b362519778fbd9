"""Synthetic scenes with analytic ground truth.

Scenes are built from spheres, solid boxes and finite square planes carrying
procedural textures. Rendering is light-free ray casting: each pixel takes the
texture color of the nearest surface hit, otherwise the camera's background
color. Every camera gets a different background hue so that two views looking
past the object never agree photometrically.
"""

from __future__ import annotations

import colorsys
import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import CameraView, SubVolume, intrinsics_matrix, look_at
from .loss import GroundTruthVolume
from .multiscale import BoundingBox, SurfacePointCloud

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(3)


# --------------------------------------------------------------------- shapes


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")

    def bounds(self):
        c = _vec(self.center)
        return c - self.radius, c + self.radius

    def sdf(self, pts):
        return np.linalg.norm(pts - _vec(self.center), axis=-1) - self.radius

    def intersect(self, origins, dirs):
        oc = origins - _vec(self.center)
        b = np.sum(oc * dirs, axis=-1)
        c = np.sum(oc * oc, axis=-1) - self.radius ** 2
        disc = b * b - c
        root = np.sqrt(np.maximum(disc, 0.0))
        t0, t1 = -b - root, -b + root
        t = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
        return np.where(disc >= 0, t, np.inf)

    def cube_hits(self, centers, half):
        """Exact: some point of the closed cube lies on the sphere."""
        d = np.abs(centers - _vec(self.center))
        near = np.linalg.norm(np.maximum(d - half, 0.0), axis=-1)
        far = np.linalg.norm(d + half, axis=-1)
        return (near <= self.radius) & (far >= self.radius)


@dataclass(frozen=True)
class Box:
    min: tuple
    max: tuple

    def __post_init__(self):
        if np.any(_vec(self.max) <= _vec(self.min)):
            raise ValueError("box must have positive extent")

    def bounds(self):
        return _vec(self.min), _vec(self.max)

    def sdf(self, pts):
        lo, hi = _vec(self.min), _vec(self.max)
        c, h = (lo + hi) / 2, (hi - lo) / 2
        q = np.abs(pts - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def intersect(self, origins, dirs):
        lo, hi = _vec(self.min), _vec(self.max)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            ta, tb = (lo - origins) * inv, (hi - origins) * inv
        ta = np.where(np.isnan(ta), -np.inf, ta)
        tb = np.where(np.isnan(tb), np.inf, tb)
        t_near = np.max(np.minimum(ta, tb), axis=-1)
        t_far = np.min(np.maximum(ta, tb), axis=-1)
        hit = t_near <= t_far
        t = np.where(t_near > 1e-9, t_near, np.where(t_far > 1e-9, t_far, np.inf))
        return np.where(hit, t, np.inf)

    def cube_hits(self, centers, half):
        """Exact: the closed cube meets the solid but is not inside its open interior."""
        lo, hi = _vec(self.min), _vec(self.max)
        meets = np.all((centers - half <= hi) & (centers + half >= lo), axis=-1)
        interior = np.all((centers - half > lo) & (centers + half < hi), axis=-1)
        return meets & ~interior


@dataclass(frozen=True)
class Plane:
    """Square patch of side ``extent`` centered at ``point``."""

    point: tuple
    normal: tuple
    extent: float

    def __post_init__(self):
        if self.extent <= 0:
            raise ValueError("plane extent must be positive")

    def axes(self):
        n = _vec(self.normal)
        n = n / np.linalg.norm(n)
        a = np.eye(3)[np.argmin(np.abs(n))]
        u = np.cross(n, a)
        u /= np.linalg.norm(u)
        return n, u, np.cross(n, u)

    def bounds(self):
        n, u, v = self.axes()
        reach = 0.5 * self.extent * (np.abs(u) + np.abs(v))
        p = _vec(self.point)
        return p - reach, p + reach

    def sdf(self, pts):
        n, u, v = self.axes()
        rel = pts - _vec(self.point)
        h = 0.5 * self.extent
        du = np.maximum(np.abs(rel @ u) - h, 0.0)
        dv = np.maximum(np.abs(rel @ v) - h, 0.0)
        return np.sqrt((rel @ n) ** 2 + du ** 2 + dv ** 2)

    def intersect(self, origins, dirs):
        n, u, v = self.axes()
        p = _vec(self.point)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((p - origins) @ n) / denom
        hit = origins + t[..., None] * dirs
        rel = hit - p
        h = 0.5 * self.extent
        ok = (np.abs(denom) > 1e-12) & (t > 1e-9) & (np.abs(rel @ u) <= h) & (np.abs(rel @ v) <= h)
        return np.where(ok, t, np.inf)

    def cube_hits(self, centers, half):
        """Separating-axis test on the patch's own axes.

        Exact for axis-aligned patches; conservative (may over-include) otherwise.
        """
        n, u, v = self.axes()
        rel = centers - _vec(self.point)
        h = 0.5 * self.extent
        return ((np.abs(rel @ n) <= half * np.abs(n).sum())
                & (np.abs(rel @ u) <= h + half * np.abs(u).sum())
                & (np.abs(rel @ v) <= h + half * np.abs(v).sum()))


@dataclass(frozen=True)
class Composite:
    """Union of disjoint parts; the surface is the union of the part surfaces."""

    parts: tuple

    def bounds(self):
        b = [p.bounds() for p in self.parts]
        return np.min([lo for lo, _ in b], axis=0), np.max([hi for _, hi in b], axis=0)

    def sdf(self, pts):
        return np.min([p.sdf(pts) for p in self.parts], axis=0)

    def intersect(self, origins, dirs):
        return np.min([p.intersect(origins, dirs) for p in self.parts], axis=0)

    def cube_hits(self, centers, half):
        return np.any([p.cube_hits(centers, half) for p in self.parts], axis=0)


# ------------------------------------------------------------------- textures


def _hash_unit(ix, iy, iz, seed: int, channel: int) -> np.ndarray:
    """Deterministic per-lattice-point uniform values in [0, 1)."""
    h = (ix.astype(np.uint64) * np.uint64(0x9E3779B1)
         ^ iy.astype(np.uint64) * np.uint64(0x85EBCA77)
         ^ iz.astype(np.uint64) * np.uint64(0xC2B2AE3D)
         ^ np.uint64((seed * 0x27D4EB2F + channel * 0x165667B1) & 0xFFFFFFFF))
    h = (h ^ (h >> np.uint64(15))) * np.uint64(0x2C1B3C6D)
    h = (h ^ (h >> np.uint64(12))) * np.uint64(0x297A2D39)
    h = h ^ (h >> np.uint64(15))
    return (h & np.uint64(0xFFFFFF)).astype(float) / float(1 << 24)


@dataclass(frozen=True)
class Checker:
    """3-D checkerboard with cubic cells of side ``period``.

    Two-tone by default; with ``random_colors`` every cell gets its own
    seeded color, which removes most accidental photo-consistency.
    """

    period: float
    color_a: tuple = (0.9, 0.85, 0.8)
    color_b: tuple = (0.1, 0.15, 0.2)
    random_colors: bool = False
    seed: int = 0

    def __call__(self, pts):
        cell = np.floor(pts / self.period).astype(np.int64)
        if self.random_colors:
            return np.stack([_hash_unit(cell[..., 0], cell[..., 1], cell[..., 2], self.seed, c)
                             for c in range(3)], axis=-1)
        parity = np.sum(cell, axis=-1) % 2
        return np.where(parity[..., None] == 0, _vec(self.color_a), _vec(self.color_b))


@dataclass(frozen=True)
class Noise:
    """Trilinear value noise with lattice spacing ``scale``."""

    seed: int = 0
    scale: float = 1.0

    def __call__(self, pts):
        q = pts / self.scale
        base = np.floor(q)
        f = q - base
        f = f * f * (3 - 2 * f)
        base = base.astype(np.int64)
        out = np.zeros(pts.shape[:-1] + (3,))
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    w = ((f[..., 0] if dx else 1 - f[..., 0])
                         * (f[..., 1] if dy else 1 - f[..., 1])
                         * (f[..., 2] if dz else 1 - f[..., 2]))
                    for c in range(3):
                        out[..., c] += w * _hash_unit(base[..., 0] + dx, base[..., 1] + dy,
                                                      base[..., 2] + dz, self.seed, c)
        return out


@dataclass(frozen=True)
class Gradient:
    origin: tuple = (0.0, 0.0, 0.0)
    direction: tuple = (1.0, 0.0, 0.0)
    length: float = 1.0
    color_a: tuple = (0.0, 0.0, 0.0)
    color_b: tuple = (1.0, 1.0, 1.0)

    def __call__(self, pts):
        d = _vec(self.direction)
        t = np.clip(((pts - _vec(self.origin)) @ (d / np.linalg.norm(d))) / self.length, 0.0, 1.0)
        return _vec(self.color_a) + t[..., None] * (_vec(self.color_b) - _vec(self.color_a))


@dataclass(frozen=True)
class Constant:
    color: tuple = (0.5, 0.5, 0.5)

    def __call__(self, pts):
        return np.broadcast_to(_vec(self.color), pts.shape[:-1] + (3,)).copy()


# ------------------------------------------------------------------------ rig


@dataclass(frozen=True)
class Ring:
    """Cameras on a horizontal circle around ``look_at``, all aimed at it.

    ``height`` is the z offset above ``look_at``. With ``arc_deg`` < 360 the
    cameras span the arc end to end, starting at ``phase_deg``.
    """

    num_cameras: int
    radius: float
    height: float = 0.0
    look_at: tuple = (0.0, 0.0, 0.0)
    fov_deg: float = 50.0
    arc_deg: float = 360.0
    phase_deg: float = 0.0

    def cameras(self, image_size) -> list[CameraView]:
        if self.num_cameras < 2:
            raise ValueError("rig needs at least 2 cameras")
        H, W = image_size
        f = 0.5 * W / math.tan(math.radians(self.fov_deg) / 2)
        K = intrinsics_matrix(f, f, (W - 1) / 2, (H - 1) / 2)
        target = _vec(self.look_at)
        full = self.arc_deg >= 360.0
        step = self.arc_deg / (self.num_cameras if full else self.num_cameras - 1)
        cams = []
        for i in range(self.num_cameras):
            phi = math.radians(self.phase_deg + i * step)
            c = target + np.array([self.radius * math.cos(phi), self.radius * math.sin(phi), self.height])
            R, t = look_at(c, target)
            cams.append(CameraView(i + 1, K, R, t))
        return cams


@dataclass(frozen=True)
class MultiRing:
    """Stacked rings at several heights, every other ring rotated by half a step.

    Camera ids run 1..n_rings * num_cameras, ring by ring.
    """

    num_cameras: int
    radius: float
    heights: tuple = (0.0,)
    look_at: tuple = (0.0, 0.0, 0.0)
    fov_deg: float = 50.0

    def cameras(self, image_size) -> list[CameraView]:
        cams = []
        for j, h in enumerate(self.heights):
            ring = Ring(self.num_cameras, self.radius, h, self.look_at, self.fov_deg,
                        phase_deg=(180.0 / self.num_cameras) * (j % 2))
            cams += ring.cameras(image_size)
        return [CameraView(i + 1, c.intrinsics, c.rotation, c.translation)
                for i, c in enumerate(cams)]


def background_color(camera_id: int) -> np.ndarray:
    hue = (camera_id * 0.6180339887498949) % 1.0
    return np.array(colorsys.hsv_to_rgb(hue, 0.9, 0.9))


# ---------------------------------------------------------------------- scene


@dataclass(frozen=True)
class Textured:
    shape: object
    texture: object


@dataclass(frozen=True)
class SceneSpec:
    shape: object
    texture: object
    rig: object
    image_size: tuple = (160, 160)
    occluders: tuple = ()
    seed: int = 0
    bbox: BoundingBox | None = None
    background: tuple | None = None  # None -> a distinct hue per camera

    def __post_init__(self):
        occ = tuple(o if isinstance(o, Textured) else Textured(o, Noise(self.seed + 101, 5.0))
                    for o in self.occluders)
        object.__setattr__(self, "occluders", occ)

    @property
    def surfaces(self) -> list[Textured]:
        return [Textured(self.shape, self.texture), *self.occluders]

    def bounding_box(self) -> BoundingBox:
        if self.bbox is not None:
            return self.bbox
        lo, hi = self.shape.bounds()
        pad = 0.1 * float(np.max(hi - lo))
        return BoundingBox(tuple(lo - pad), tuple(hi + pad))

    def cameras(self) -> list[CameraView]:
        if isinstance(self.rig, (Ring, MultiRing)):
            return self.rig.cameras(self.image_size)
        cams = list(self.rig)
        if len(cams) < 2:
            raise ValueError("rig needs at least 2 cameras")
        return cams


def camera_rays(camera: CameraView, image_size) -> tuple[np.ndarray, np.ndarray]:
    """Unit world-space ray directions through every pixel center, shape (H, W, 3)."""
    H, W = image_size
    cols, rows = np.meshgrid(np.arange(W, dtype=float), np.arange(H, dtype=float))
    pix = np.stack([cols, rows, np.ones_like(cols)], axis=-1)
    d_cam = pix @ np.linalg.inv(camera.intrinsics).T
    d = d_cam @ camera.rotation
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    return np.broadcast_to(camera.center, d.shape), d


def cast(spec: SceneSpec, origins, dirs) -> tuple[np.ndarray, np.ndarray]:
    """Nearest hit distance and index into ``spec.surfaces`` (-1 on a miss)."""
    ts = np.stack([s.shape.intersect(origins, dirs) for s in spec.surfaces])
    which = np.argmin(ts, axis=0)
    t = np.take_along_axis(ts, which[None], axis=0)[0]
    return t, np.where(np.isfinite(t), which, -1)


def render_view(spec: SceneSpec, camera: CameraView) -> np.ndarray:
    origins, dirs = camera_rays(camera, spec.image_size)
    t, which = cast(spec, origins, dirs)
    image = np.empty(dirs.shape)
    image[:] = background_color(camera.id) if spec.background is None else spec.background
    for k, surf in enumerate(spec.surfaces):
        m = which == k
        if m.any():
            hits = origins[m] + t[m][:, None] * dirs[m]
            image[m] = surf.texture(hits)
    return np.clip(image, 0.0, 1.0)


def render(spec: SceneSpec) -> tuple[list[CameraView], SceneSpec]:
    """Render every rig camera; returns cameras carrying images and the analytic scene."""
    cams = [cam.with_image(render_view(spec, cam)) for cam in spec.cameras()]
    return cams, spec


def segment_blocked(spec: SceneSpec, a, b, occluders_only: bool = True) -> bool:
    """Whether the open segment a -> b crosses an occluder (or any surface)."""
    a, b = _vec(a), _vec(b)
    length = np.linalg.norm(b - a)
    d = ((b - a) / length)[None]
    surfaces = spec.occluders if occluders_only else spec.surfaces
    return any(float(s.shape.intersect(a[None], d)[0]) < length for s in surfaces)


# --------------------------------------------------------------- ground truth


def lattice_centers(lower, resolution: float, index_lo, index_hi) -> np.ndarray:
    axes = [np.arange(lo, hi) for lo, hi in zip(index_lo, index_hi)]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return np.asarray(lower, dtype=float) + (idx + 0.5) * resolution


def ground_truth_cloud(spec: SceneSpec, resolution: float, anchor=None) -> SurfacePointCloud:
    """Centers of lattice voxels whose closed cube meets the target surface.

    The voxel lattice is anchored at ``anchor`` (default: the scene bbox lower corner).
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    anchor = np.asarray(spec.bounding_box().lower if anchor is None else anchor, dtype=float)
    lo, hi = spec.shape.bounds()
    i_lo = np.floor((lo - anchor) / resolution).astype(int) - 1
    i_hi = np.ceil((hi - anchor) / resolution).astype(int) + 1
    found = []
    # Slab by slab along x to bound memory.
    for ix in range(i_lo[0], i_hi[0]):
        centers = lattice_centers(anchor, resolution, (ix, i_lo[1], i_lo[2]), (ix + 1, i_hi[1], i_hi[2]))
        found.append(centers[spec.shape.cube_hits(centers, resolution / 2)])
    pts = np.concatenate(found) if found else np.zeros((0, 3))
    return SurfacePointCloud(1, pts, resolution)


def ground_truth_volume(spec: SceneSpec, subvolume: SubVolume) -> GroundTruthVolume:
    centers = subvolume.voxel_centers()
    occ = spec.shape.cube_hits(centers.reshape(-1, 3), subvolume.resolution / 2)
    s = subvolume.side_voxels
    return GroundTruthVolume(subvolume, occ.reshape(s, s, s))


# -------------------------------------------------------------- config files

_SHAPES = {"sphere": Sphere, "box": Box, "plane": Plane}
_RIGS = {"ring": Ring, "multiring": MultiRing}
_TEXTURES = {"checker": Checker, "noise": Noise, "gradient": Gradient, "constant": Constant}


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def shape_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    d.pop("texture", None)
    if kind == "composite":
        return Composite(tuple(shape_from_dict(p) for p in d["parts"]))
    return _SHAPES[kind](**_tuples(d))


def texture_from_dict(d: dict):
    d = dict(d)
    return _TEXTURES[d.pop("type")](**_tuples(d))


def scene_from_dict(cfg: dict) -> SceneSpec:
    """Build a scene from the parsed TOML layout (see README for the keys)."""
    seed = int(cfg.get("seed", 0))
    occluders = []
    for o in cfg.get("occluders", []):
        tex = texture_from_dict(o["texture"]) if "texture" in o else Noise(seed + 101, 5.0)
        occluders.append(Textured(shape_from_dict(o), tex))
    rig_cfg = dict(cfg["rig"])
    rig_type = rig_cfg.pop("type", "ring")
    if rig_type not in _RIGS:
        raise ValueError(f"unknown rig type {rig_type!r}")
    bbox = None
    if "bbox" in cfg:
        bbox = BoundingBox(tuple(cfg["bbox"]["lower"]), tuple(cfg["bbox"]["upper"]))
    return SceneSpec(
        shape=shape_from_dict(cfg["shape"]),
        texture=texture_from_dict(cfg["texture"]),
        rig=_RIGS[rig_type](**_tuples(rig_cfg)),
        image_size=tuple(cfg.get("image_size", (160, 160))),
        occluders=tuple(occluders),
        seed=seed,
        bbox=bbox,
        background=tuple(cfg["background"]) if "background" in cfg else None,
    )


def load_scene(path) -> SceneSpec:
    with open(Path(path), "rb") as fh:
        return scene_from_dict(tomllib.load(fh))


# -------------------------------------------------------------------- presets

_PRESETS = {
    # 8-camera ring around a textured sphere; the end-to-end regression scene.
    "sphere": {
        "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 50.0},
        "texture": {"type": "checker", "period": 8.0, "random_colors": True},
        "rig": {"type": "ring", "num_cameras": 8, "radius": 150.0},
        "bbox": {"lower": [-64, -64, -64], "upper": [64, 64, 64]},
    },
    "sphere12": {
        "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 50.0},
        "texture": {"type": "checker", "period": 8.0, "random_colors": True},
        "rig": {"type": "ring", "num_cameras": 12, "radius": 150.0},
        "bbox": {"lower": [-64, -64, -64], "upper": [64, 64, 64]},
    },
    # Smaller sphere in the same bbox, used for the cube-count sweep.
    "sphere-small": {
        "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 25.0},
        "texture": {"type": "checker", "period": 8.0, "random_colors": True},
        "rig": {"type": "ring", "num_cameras": 8, "radius": 150.0},
        "bbox": {"lower": [-64, -64, -64], "upper": [64, 64, 64]},
    },
    # A slab next to a sphere hides part of it from the cameras behind the slab.
    "wall": {
        "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 30.0},
        "texture": {"type": "checker", "period": 8.0, "random_colors": True},
        "rig": {"type": "multiring", "num_cameras": 8, "radius": 110.0,
                "heights": [50.0, 0.0, -50.0]},
        "occluders": [{"type": "box", "min": [44, -36, -36], "max": [52, 36, 36],
                       "texture": {"type": "checker", "period": 8.0,
                                   "random_colors": True, "seed": 7}}],
        "bbox": {"lower": [-64, -64, -64], "upper": [64, 64, 64]},
    },
    # Constant color everywhere, background included: every voxel is photo-consistent.
    "flat": {
        "shape": {"type": "sphere", "center": [0, 0, 0], "radius": 50.0},
        "texture": {"type": "constant", "color": [0.5, 0.5, 0.5]},
        "background": [0.5, 0.5, 0.5],
        "rig": {"type": "ring", "num_cameras": 8, "radius": 150.0},
        "bbox": {"lower": [-64, -64, -64], "upper": [64, 64, 64]},
    },
}

PRESETS = tuple(_PRESETS)


def preset_config(name: str) -> dict:
    try:
        return copy.deepcopy(_PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown scene preset {name!r}; choose from {', '.join(PRESETS)}") from None


def preset_scene(name: str) -> SceneSpec:
    return scene_from_dict(preset_config(name))
