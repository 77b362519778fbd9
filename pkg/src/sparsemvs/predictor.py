"""Per-sub-volume surface probability predictors.

A predictor maps two colored voxel cubes over the same sub-volume to an
on-surface probability per voxel. The built-in ``photo-consistency`` predictor
scores each voxel by how well the two views agree on its color.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .geometry import ColoredVoxelCube, SubVolume

P_MIN = 1e-6
P_MAX = 1.0 - 1e-6


class PredictorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    subvolume: SubVolume
    probs: np.ndarray

    def __post_init__(self):
        p = np.clip(np.asarray(self.probs, dtype=float), P_MIN, P_MAX)
        s = self.subvolume.side_voxels
        if p.shape != (s, s, s):
            raise PredictorError(f"expected shape {(s, s, s)}, got {p.shape}")
        object.__setattr__(self, "probs", p)


@dataclass(frozen=True)
class PredictorConfig:
    name: str = "photo-consistency"
    window_radius: int = 0
    sigma_color: float = 0.15
    # level -> blur sigma in pixels; levels not listed use r_k / r_K - 1.
    blur_sigma_per_level: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.window_radius < 0:
            raise PredictorError("window_radius must be >= 0")
        if self.sigma_color <= 0:
            raise PredictorError("sigma_color must be > 0")

    def blur_sigma(self, level: int, resolutions) -> float:
        if level in self.blur_sigma_per_level:
            return float(self.blur_sigma_per_level[level])
        return resolutions[level - 1] / resolutions[-1] - 1.0


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(int(math.ceil(3.0 * sigma)), 0)
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur truncated at 3 sigma, clamped edges, per channel."""
    img = np.asarray(image, dtype=float)
    if sigma < 0:
        raise PredictorError("sigma must be >= 0")
    if sigma == 0:
        return img.copy()
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^3 window with zero padding, via cumulative sums (exact for 0/1 masks)."""
    if radius == 0:
        return a.copy()
    out = a
    for axis in range(3):
        pad = [(0, 0)] * 3
        pad[axis] = (radius + 1, radius)
        c = np.cumsum(np.pad(out, pad), axis=axis)
        n = out.shape[axis]
        hi = np.take(c, np.arange(2 * radius + 1, 2 * radius + 1 + n), axis=axis)
        lo = np.take(c, np.arange(0, n), axis=axis)
        out = hi - lo
    return out


def photo_consistency(cvc_i: ColoredVoxelCube, cvc_j: ColoredVoxelCube,
                      config: PredictorConfig) -> ProbabilityVolume:
    """exp(-d^2 / (2 sigma^2)) with d^2 the windowed mean squared color difference."""
    both = cvc_i.validity & cvc_j.validity
    diff = np.mean((cvc_i.colors - cvc_j.colors) ** 2, axis=-1)
    diff = np.where(both, diff, 0.0)
    weight = both.astype(float)
    total = _box_sum(diff, config.window_radius)
    count = _box_sum(weight, config.window_radius)
    with np.errstate(invalid="ignore", divide="ignore"):
        d2 = np.where(count > 0, total / np.maximum(count, 1.0), np.inf)
    p = np.exp(-np.maximum(d2, 0.0) / (2.0 * config.sigma_color ** 2))
    p = np.where(both, p, P_MIN)
    return ProbabilityVolume(cvc_i.subvolume, p)


PredictorFn = Callable[[ColoredVoxelCube, ColoredVoxelCube, PredictorConfig], ProbabilityVolume]

PREDICTORS: dict[str, PredictorFn] = {"photo-consistency": photo_consistency}


def register_predictor(name: str, fn: PredictorFn) -> None:
    PREDICTORS[name] = fn


def predict(cvc_i: ColoredVoxelCube, cvc_j: ColoredVoxelCube,
            config: PredictorConfig | None = None) -> ProbabilityVolume:
    config = config or PredictorConfig()
    if cvc_i.subvolume != cvc_j.subvolume:
        raise PredictorError("cvc-mismatch")
    try:
        fn = PREDICTORS[config.name]
    except KeyError:
        raise PredictorError(f"unknown predictor {config.name!r}") from None
    return fn(cvc_i, cvc_j, config)
