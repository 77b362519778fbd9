"""Weighted fusion of pairwise predictions, thresholding and ray pooling."""

from __future__ import annotations

import numpy as np

from .geometry import CameraView, pixel_indices
from .predictor import ProbabilityVolume


class FusionError(ValueError):
    pass


def _relative_weights(scores) -> list[float]:
    """Plain weights, or exp(log_weight - max) when every score carries a log weight.

    Fusion is invariant to a common rescale, so the log route only matters when
    the raw products underflow.
    """
    logs = [getattr(s, "log_weight", None) for s in scores]
    if all(lw is not None for lw in logs) and max(logs) > -np.inf:
        top = max(logs)
        return [float(np.exp(lw - top)) for lw in logs]
    weights = [float(getattr(s, "weight", s)) for s in scores]
    if not all(w >= 0 for w in weights):
        raise FusionError("weights must be non-negative")
    if sum(weights) <= 0:
        raise FusionError("zero-weight")
    return weights


def fuse(predictions) -> ProbabilityVolume:
    """Weighted average of pairwise probability volumes.

    ``predictions`` is a sequence of (weight-or-ViewPairScore, ProbabilityVolume).
    """
    predictions = list(predictions)
    if not predictions:
        raise FusionError("nothing to fuse")
    subvolume = predictions[0][1].subvolume
    for _, vol in predictions:
        if vol.subvolume != subvolume:
            raise FusionError("cvc-mismatch")
    weights = _relative_weights([score for score, _ in predictions])
    if len(predictions) == 1:
        return predictions[0][1]
    # Sorting terms by (weight, volume bytes) makes the float sum order-independent.
    order = sorted(range(len(predictions)),
                   key=lambda i: (weights[i], predictions[i][1].probs.tobytes()))
    acc = np.zeros_like(predictions[0][1].probs)
    for i in order:
        acc += weights[i] * predictions[i][1].probs
    wsum = 0.0
    for i in order:
        wsum += weights[i]
    fused = acc / wsum
    # Keep the convex-combination bounds exact under rounding.
    stack = np.stack([predictions[i][1].probs for i in order if weights[i] > 0])
    fused = np.clip(fused, stack.min(axis=0), stack.max(axis=0))
    return ProbabilityVolume(subvolume, fused)


def threshold_binarize(volume: ProbabilityVolume, tau: float = 0.7) -> np.ndarray:
    """Occupancy where p > tau (strict)."""
    if not 0 < tau < 1:
        raise FusionError("tau must lie in (0, 1)")
    return volume.probs > tau


def ray_votes(volume: ProbabilityVolume, camera: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Per-voxel vote of one view and the mask of voxels the view sees.

    Voxels are grouped by rounded projected pixel; the winner of each group is
    the max-probability voxel, ties resolved by smallest linear (C-order) index.
    """
    centers = volume.subvolume.voxel_centers().reshape(-1, 3)
    col, row, valid = pixel_indices(camera, centers)
    p = volume.probs.ravel()
    W = camera.image_size[1]
    lin = np.flatnonzero(valid)
    keys = row[lin] * W + col[lin]
    # Primary key: pixel; then descending p; then ascending voxel index.
    order = np.lexsort((lin, -p[lin], keys))
    sorted_keys = keys[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_keys[1:] != sorted_keys[:-1]
    votes = np.zeros(p.size, dtype=bool)
    votes[lin[order[first]]] = True
    shape = volume.probs.shape
    return votes.reshape(shape), valid.reshape(shape)


def ray_pool(volume: ProbabilityVolume, occupancy: np.ndarray, views, tau: float = 0.7) -> np.ndarray:
    """Thin an occupancy grid: a voxel survives if every view that sees it votes for it."""
    views = list(views)
    if not views:
        raise FusionError("ray pooling needs at least one view")
    keep = np.asarray(occupancy, dtype=bool) & (volume.probs > tau)
    for cam in views:
        votes, seen = ray_votes(volume, cam)
        keep &= votes | ~seen
    return keep
