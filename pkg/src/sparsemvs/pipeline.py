"""Coarse-to-fine volumetric reconstruction.

Level 1 tiles the bounding box and ranks view pairs photometrically only.
Each later level keeps the lattice cells touched by the previous surface and
adds the occlusion term computed from that surface. Per cell: rank pairs,
unproject the blurred images, predict per pair, fuse, threshold and (at the
finest level, optionally) ray-pool. Cell results merge into the level surface
through a reduction keyed by world voxel index, so the output does not depend
on worker scheduling.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import CubeCountLedger
from .fusion import fuse, ray_pool, threshold_binarize
from .geometry import CameraView, SubVolume, unproject_cvc
from .multiscale import (
    BoundingBox,
    ResolutionSchedule,
    SurfacePointCloud,
    initial_partition,
    make_schedule,
    refine_partition,
    surface_from_probability,
)
from .predictor import PredictorConfig, gaussian_blur, predict
from .view_selection import DEFAULT_PATCH_SIDE, N_V_SPARSE, ViewPairScore, rank_view_pairs

logger = logging.getLogger(__name__)

DEGENERATE_OCCUPANCY = 0.5


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    r1: float = 8.0
    delta: int = 4
    target: float = 2.0
    s: int = 16
    overlap_voxels: int | None = None  # None -> s // 8
    alpha: float = 1.0
    n_v: int = N_V_SPARSE
    tau: float = 0.7
    tau_intermediate: float = 0.4
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    scorer: str = "default"
    ray_pool: bool = True
    ray_pool_levels: str = "final"  # "final" or "all"
    patch_side: int = DEFAULT_PATCH_SIDE
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.delta < 2:
            raise PipelineError("delta must be >= 2")
        if self.n_v < 1:
            raise PipelineError("n_v must be >= 1")
        if self.ray_pool_levels not in ("final", "all"):
            raise PipelineError("ray_pool_levels must be 'final' or 'all'")

    @property
    def overlap(self) -> int:
        return self.s // 8 if self.overlap_voxels is None else self.overlap_voxels

    def schedule(self) -> ResolutionSchedule:
        return make_schedule(self.r1, self.delta, self.target)


@dataclass
class CellResult:
    subvolume: SubVolume
    pairs: list[ViewPairScore]
    probs: np.ndarray | None  # None when the cell was skipped


@dataclass
class Reconstruction:
    surface: SurfacePointCloud
    ledger: CubeCountLedger
    levels: list[SurfacePointCloud]
    selections: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "ok" if not self.warnings else "warning: " + "; ".join(self.warnings)


def aligned_bbox(bbox: BoundingBox, r1: float) -> BoundingBox:
    """Grow the upper corner so every extent is a whole number of coarse voxels."""
    lo = np.array(bbox.lower)
    n = np.ceil(bbox.extent / r1 - 1e-9)
    return BoundingBox(tuple(lo), tuple(lo + n * r1))


def dense_cell_count(bbox: BoundingBox, config: PipelineConfig) -> int:
    """Cells a single-scale sweep at the finest resolution would process."""
    schedule = config.schedule()
    return len(initial_partition(bbox, config.s, schedule.resolutions[-1], config.overlap))


def lattice_cell_count(bbox: BoundingBox, config: PipelineConfig, k: int) -> int:
    """Level-k lattice cells (anchored at ``bbox.lower``) that meet the bbox.

    refine_partition draws from exactly this set once surfaces are clipped to
    the bbox, so it bounds the cells processed at level k.
    """
    r = config.schedule().resolution(k)
    stride = (config.s - config.overlap) * r
    per_axis = np.maximum(np.ceil(bbox.extent / stride - 1e-9), 1).astype(int)
    return int(np.prod(per_axis))


def clip_to_bbox(surface: SurfacePointCloud, bbox: BoundingBox) -> SurfacePointCloud:
    pts = surface.points
    keep = np.all((pts >= np.array(bbox.lower)) & (pts < np.array(bbox.upper)), axis=1)
    return SurfacePointCloud(surface.level, pts[keep], surface.resolution)


# Per-level state installed in worker processes (or used in-process).
_LEVEL: dict = {}


def _install_level(state: dict) -> None:
    _LEVEL.clear()
    _LEVEL.update(state)


def _process_cell(subvolume: SubVolume) -> CellResult:
    st = _LEVEL
    config: PipelineConfig = st["config"]
    views: list[CameraView] = st["views"]
    by_id = {v.id: v for v in views}
    pairs = rank_view_pairs(views, subvolume, st["prev_surface"], config.alpha,
                            config.n_v, config.scorer, config.patch_side)
    # A cell is skipped only when every pair has zero weight in log space too;
    # large barrier counts underflow the plain weights long before that.
    if all(p.log_weight == -np.inf for p in pairs):
        return CellResult(subvolume, pairs, None)
    cvcs = {}
    for p in pairs:
        for vid in p.pair:
            if vid not in cvcs:
                cvcs[vid] = unproject_cvc(by_id[vid], subvolume)
    preds = [(p, predict(cvcs[p.pair[0]], cvcs[p.pair[1]], config.predictor)) for p in pairs]
    fused = fuse(preds)
    tau = st["tau"]
    if st["ray_pool"]:
        used = sorted(cvcs)
        keep = ray_pool(fused, threshold_binarize(fused, tau), [by_id[v] for v in used], tau)
        probs = np.where(keep, fused.probs, 0.0)
    else:
        probs = fused.probs
    return CellResult(subvolume, pairs, probs)


def _run_cells(cells, state: dict, workers: int) -> list[CellResult]:
    if workers <= 1 or len(cells) < 2:
        _install_level(state)
        return [_process_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers, initializer=_install_level,
                             initargs=(state,)) as pool:
        # map preserves input order regardless of completion order.
        return list(pool.map(_process_cell, cells, chunksize=max(1, len(cells) // (4 * workers))))


def reconstruct(cameras, bbox: BoundingBox, config: PipelineConfig | None = None) -> Reconstruction:
    """Run the coarse-to-fine pipeline over calibrated cameras with images."""
    config = config or PipelineConfig()
    cameras = list(cameras)
    if len(cameras) < 2:
        raise PipelineError("insufficient-views")
    if any(c.image is None for c in cameras):
        raise PipelineError("every camera needs an image")
    schedule = config.schedule()
    resolutions = schedule.resolutions
    bbox = aligned_bbox(bbox, config.r1)
    K = schedule.num_levels
    ledger = CubeCountLedger(dense_cell_count(bbox, config),
                             float(np.max(bbox.extent)) / resolutions[-1])
    levels: list[SurfacePointCloud] = []
    selections: list[dict] = []
    warnings: list[str] = []
    prev = None
    for k, r_k in schedule.levels:
        if k == 1:
            partition = initial_partition(bbox, config.s, r_k, config.overlap)
        else:
            partition = refine_partition(prev, schedule, k, config.s, config.overlap, bbox)
        sigma = config.predictor.blur_sigma(k, resolutions)
        views = [c.with_image(gaussian_blur(c.image, sigma)) for c in cameras]
        final = k == K
        state = {
            "config": config,
            "views": views,
            "prev_surface": prev,
            "tau": config.tau if final else config.tau_intermediate,
            "ray_pool": config.ray_pool and (final or config.ray_pool_levels == "all"),
        }
        results = _run_cells(list(partition.cells), state, config.workers)
        done = [r for r in results if r.probs is not None]
        ledger.record(k, len(partition), len(done))
        selections.append({r.subvolume: r.pairs for r in results})
        surface = surface_from_probability([(r.subvolume, r.probs) for r in done], state["tau"])
        # Cells overhanging the bbox may extract points outside it; drop them.
        surface = clip_to_bbox(SurfacePointCloud(k, surface.points, r_k), bbox)
        logger.info("level %d: r=%g cells=%d processed=%d points=%d",
                    k, r_k, len(partition), len(done), len(surface))
        if done:
            occupied = sum(int((r.probs > state["tau"]).sum()) for r in done)
            fraction = occupied / sum(r.probs.size for r in done)
            if fraction > DEGENERATE_OCCUPANCY:
                warnings.append(f"degenerate-precision at level {k} "
                                f"({fraction:.0%} of voxels above threshold)")
        levels.append(surface)
        if len(surface) == 0:
            warnings.append(f"empty-surface at level {k}")
            logger.warning("empty surface at level %d; stopping", k)
            empty = SurfacePointCloud(K, np.zeros((0, 3)), resolutions[-1])
            return Reconstruction(empty, ledger, levels, selections, warnings)
        prev = surface
    return Reconstruction(prev, ledger, levels, selections, warnings)


def with_overrides(config: PipelineConfig, **kwargs) -> PipelineConfig:
    pred_keys = {"window_radius", "sigma_color", "predictor_name"}
    pred_kw = {("name" if k == "predictor_name" else k): v
               for k, v in kwargs.items() if k in pred_keys}
    rest = {k: v for k, v in kwargs.items() if k not in pred_keys}
    if pred_kw:
        rest["predictor"] = replace(config.predictor, **pred_kw)
    return replace(config, **rest)


def relative_resolution(bbox: BoundingBox, target: float) -> float:
    return float(np.max(bbox.extent)) / target


def schedule_for(target: float, levels: int, delta: int = 4) -> tuple[float, float]:
    """(r1, target) of a ``levels``-level schedule ending exactly at ``target``."""
    return target * delta ** (levels - 1), target


__all__ = [
    "PipelineConfig",
    "PipelineError",
    "Reconstruction",
    "reconstruct",
    "aligned_bbox",
    "dense_cell_count",
    "clip_to_bbox",
    "lattice_cell_count",
    "with_overrides",
    "schedule_for",
    "relative_resolution",
]
