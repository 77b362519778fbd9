"""Evaluation-only training losses and class-balance statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SubVolume
from .predictor import ProbabilityVolume


class LossError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GroundTruthVolume:
    subvolume: SubVolume
    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        s = self.subvolume.side_voxels
        if occ.shape != (s, s, s):
            raise LossError("shape-mismatch")
        object.__setattr__(self, "occupancy", occ)


def occupancy_ratio(gt) -> float:
    """Fraction of occupied voxels pooled over all volumes."""
    gt = list(gt)
    if not gt:
        raise LossError("need at least one volume")
    occupied = sum(int(g.occupancy.sum()) for g in gt)
    total = sum(g.occupancy.size for g in gt)
    return occupied / total


def surface_weight(gt) -> float:
    """Mean per-volume fraction of empty voxels, used to up-weight surface voxels."""
    gt = list(gt)
    if not gt:
        raise LossError("need at least one volume")
    return float(np.mean([1.0 - g.occupancy.mean() for g in gt]))


def _arrays(pred, gt):
    p = np.asarray(getattr(pred, "probs", pred), dtype=float)
    s = np.asarray(getattr(gt, "occupancy", gt), dtype=float)
    if p.shape != s.shape:
        raise LossError("shape-mismatch")
    return p, s


def balanced_cross_entropy(pred: ProbabilityVolume, gt: GroundTruthVolume, beta: float) -> float:
    """-sum(beta * s log p + (1 - beta) (1 - s) log(1 - p)); beta weights the positives."""
    if not 0 <= beta <= 1:
        raise LossError("beta must lie in [0, 1]")
    p, s = _arrays(pred, gt)
    terms = beta * s * np.log(p) + (1.0 - beta) * (1.0 - s) * np.log1p(-p)
    return float(-np.sum(terms))


def refine_mse(pred: ProbabilityVolume, gt: GroundTruthVolume) -> float:
    """Sum of squared per-voxel deviations from the ground truth."""
    p, s = _arrays(pred, gt)
    return float(np.sum((s - p) ** 2))


def total_loss(l_init: float, l_refine: float) -> float:
    if not (np.isfinite(l_init) and np.isfinite(l_refine)):
        raise LossError("losses must be finite")
    return float(l_init + l_refine)
