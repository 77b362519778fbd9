"""Occlusion-aware ranking of view pairs for a sub-volume.

A pair's weight is the product of a geometric term, the probability that
neither view is occluded given the coarser surface, and a photometric score
of the two views' patches around the projected cube center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Callable

import numpy as np

from .geometry import CameraView, SubVolume, baseline_angle, hull_contains, project, view_hull
from .multiscale import SurfacePointCloud

N_V_SPARSE = 3
N_V_DENSE = 5
DEFAULT_ALPHA = 1.0
DEFAULT_PATCH_SIDE = 16
HIST_BINS = 8


class ViewSelectionError(ValueError):
    pass


@dataclass(frozen=True)
class PatchDescriptor:
    view: int
    values: np.ndarray
    valid: bool


@dataclass(frozen=True)
class ViewPairScore:
    pair: tuple[int, int]
    theta: float
    barrier_counts: tuple[int, int]
    p_occ: float
    photometric: float
    weight: float
    # log(p_occ) + log(photometric); ranks pairs whose weight underflows to 0.
    log_weight: float | None = None

    def __post_init__(self):
        if self.log_weight is None:
            lw = math.log(self.weight) if self.weight > 0 else -math.inf
            object.__setattr__(self, "log_weight", lw)


def barrier_points(prev_surface: SurfacePointCloud, subvolume: SubVolume, camera: CameraView) -> np.ndarray:
    """Coarse surface points inside H(C, v) but outside the closed cube C."""
    pts = prev_surface.points
    if len(pts) == 0:
        return pts
    # Bounding-box prefilter on the hull before the half-space test.
    hull_pts = np.vstack([subvolume.corners(), camera.center])
    lo, hi = hull_pts.min(axis=0) - 1e-9, hull_pts.max(axis=0) + 1e-9
    cand = pts[np.all((pts >= lo) & (pts <= hi), axis=1)]
    cand = cand[~subvolume.contains(cand)]
    if len(cand) == 0:
        return cand
    hull = view_hull(subvolume, camera)
    return cand[hull_contains(hull, cand)]


def log_occlusion_probability(count_i: int, count_j: int, alpha: float, r_k: float) -> float:
    if count_i < 0 or count_j < 0 or alpha < 0 or r_k <= 0:
        raise ViewSelectionError("invalid occlusion-probability arguments")
    return -alpha * r_k * r_k * (count_i + count_j)


def occlusion_probability(count_i: int, count_j: int, alpha: float, r_k: float) -> float:
    """Probability that neither view is occluded, exp(-alpha r_k^2 (|B_i| + |B_j|))."""
    return math.exp(log_occlusion_probability(count_i, count_j, alpha, r_k))


def _descriptor_values(patch: np.ndarray) -> np.ndarray:
    mean = patch.mean(axis=(0, 1))
    std = patch.std(axis=(0, 1))
    gray = patch.mean(axis=2)
    hist, _ = np.histogram(gray, bins=HIST_BINS, range=(0.0, 1.0))
    hist = hist / gray.size
    gy, gx = np.gradient(gray)
    grad = np.hypot(gx, gy).mean()
    vec = np.concatenate([mean, std, hist, [grad]])
    return vec / np.linalg.norm(vec)


def patch_descriptor(camera: CameraView, subvolume: SubVolume,
                     patch_side: int = DEFAULT_PATCH_SIDE) -> PatchDescriptor:
    """15-D statistic descriptor of the square patch around the projected cube center.

    Layout: mean RGB (3), RGB standard deviation (3), 8-bin gray histogram
    fractions, mean gray gradient magnitude; unit L2 norm.
    """
    if patch_side < 8 or patch_side % 2:
        raise ViewSelectionError("patch_side must be an even integer >= 8")
    invalid = PatchDescriptor(camera.id, np.zeros(15), False)
    uv = project(camera, subvolume.center)
    if uv is None:
        return invalid
    H, W = camera.image_size
    half = patch_side // 2
    c0 = int(np.floor(uv[0] + 0.5)) - half
    r0 = int(np.floor(uv[1] + 0.5)) - half
    if c0 < 0 or r0 < 0 or c0 + patch_side > W or r0 + patch_side > H:
        return invalid
    patch = camera.image[r0:r0 + patch_side, c0:c0 + patch_side]
    return PatchDescriptor(camera.id, _descriptor_values(patch), True)


RelativeWeightFunction = Callable[[float, PatchDescriptor, PatchDescriptor], float]


def make_default_scorer(theta0: float = math.radians(40.0),
                        sigma_theta: float = math.radians(20.0)) -> RelativeWeightFunction:
    """Descriptor cosine similarity times a Gaussian preference on the baseline angle."""
    def scorer(theta: float, e_i: PatchDescriptor, e_j: PatchDescriptor) -> float:
        if not (e_i.valid and e_j.valid):
            return 0.0
        similarity = max(0.0, float(np.dot(e_i.values, e_j.values)))
        preference = math.exp(-((theta - theta0) ** 2) / (2.0 * sigma_theta ** 2))
        return similarity * preference
    return scorer


default_scorer = make_default_scorer()


def _uniform_scorer(theta, e_i, e_j) -> float:
    return 1.0


SCORERS: dict[str, RelativeWeightFunction] = {
    "default": default_scorer,
    "uniform": _uniform_scorer,
}


def register_scorer(name: str, scorer: RelativeWeightFunction) -> None:
    SCORERS[name] = scorer


def get_scorer(scorer) -> RelativeWeightFunction:
    if callable(scorer):
        return scorer
    try:
        return SCORERS[scorer]
    except KeyError:
        raise ViewSelectionError(f"unknown scorer {scorer!r}") from None


def photometric_score(theta: float, e_i: PatchDescriptor, e_j: PatchDescriptor,
                      scorer: RelativeWeightFunction | str = default_scorer) -> float:
    value = float(get_scorer(scorer)(theta, e_i, e_j))
    if not value >= 0:
        raise ViewSelectionError("scorer returned a negative or NaN value")
    return value


def score_all_pairs(views, subvolume: SubVolume, prev_surface: SurfacePointCloud | None,
                    alpha: float = DEFAULT_ALPHA, scorer=default_scorer,
                    patch_side: int = DEFAULT_PATCH_SIDE) -> list[ViewPairScore]:
    """Score every unordered pair (i < j by position in ``views``)."""
    views = list(views)
    if len(views) < 2:
        raise ViewSelectionError("insufficient-views")
    scorer = get_scorer(scorer)
    if prev_surface is None:
        counts = [0] * len(views)
    else:
        counts = [len(barrier_points(prev_surface, subvolume, v)) for v in views]
    descriptors = [patch_descriptor(v, subvolume, patch_side) for v in views]
    scores = []
    for a, b in combinations(range(len(views)), 2):
        theta = baseline_angle(subvolume, views[a], views[b])
        log_p = log_occlusion_probability(counts[a], counts[b], alpha, subvolume.resolution)
        p_occ = math.exp(log_p)
        photo = photometric_score(theta, descriptors[a], descriptors[b], scorer)
        log_w = log_p + math.log(photo) if photo > 0 else -math.inf
        scores.append(ViewPairScore((views[a].id, views[b].id), theta,
                                    (counts[a], counts[b]), p_occ, photo, p_occ * photo, log_w))
    return scores


def rank_view_pairs(views, subvolume: SubVolume, prev_surface: SurfacePointCloud | None = None,
                    alpha: float = DEFAULT_ALPHA, n_v: int = N_V_SPARSE, scorer=default_scorer,
                    patch_side: int = DEFAULT_PATCH_SIDE) -> list[ViewPairScore]:
    """Top-``n_v`` pairs by weight; ties go to the lexicographically smaller id pair.

    Ordering uses ``log_weight`` so that pairs whose weight underflows still rank.

    ``prev_surface=None`` is the level-1 case with the occlusion term fixed at 1.
    """
    if n_v < 1:
        raise ViewSelectionError("n_v must be >= 1")
    scores = score_all_pairs(views, subvolume, prev_surface, alpha, scorer, patch_side)
    scores.sort(key=lambda s: (-s.log_weight, tuple(sorted(s.pair))))
    return scores[:n_v]
