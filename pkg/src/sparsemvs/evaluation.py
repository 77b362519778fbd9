"""Sparse-MVS evaluation: distance and percentage metrics, view sampling,
baseline-angle statistics and sub-volume accounting."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree


class EvaluationError(ValueError):
    pass


def _points(cloud) -> np.ndarray:
    return np.asarray(getattr(cloud, "points", cloud), dtype=float).reshape(-1, 3)


def nearest_distances(queries, reference) -> np.ndarray:
    """Exact Euclidean distance from each query point to its nearest reference point."""
    q, r = _points(queries), _points(reference)
    if len(r) == 0:
        return np.full(len(q), np.inf)
    d, _ = cKDTree(r).query(q, k=1)
    return d


def accuracy(pred, reference) -> tuple[float, float]:
    """(mean, median) distance from predicted points to the reference."""
    p, r = _points(pred), _points(reference)
    if len(p) == 0 or len(r) == 0:
        raise EvaluationError("empty-cloud")
    d = nearest_distances(p, r)
    return float(d.mean()), float(np.median(d))


def completeness(pred, reference) -> tuple[float, float]:
    """(mean, median) distance from reference points to the prediction."""
    return accuracy(reference, pred)


def f_score(pred, reference, dist_threshold: float) -> tuple[float, float, float]:
    """(precision %, recall %, f-score) at a distance threshold."""
    if dist_threshold <= 0:
        raise EvaluationError("threshold must be positive")
    p, r = _points(pred), _points(reference)
    if len(p) == 0 or len(r) == 0:
        return 0.0, 0.0, 0.0
    precision = 100.0 * float(np.mean(nearest_distances(p, r) <= dist_threshold))
    recall = 100.0 * float(np.mean(nearest_distances(r, p) <= dist_threshold))
    return precision, recall, harmonic_mean(precision, recall)


def harmonic_mean(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class EvalReport:
    mean_accuracy: float
    median_accuracy: float
    mean_completeness: float
    median_completeness: float
    precision_pct: float
    recall_pct: float
    f_score: float
    overall_distance: float
    threshold: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(asdict(self)), lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: repr(v) for k, v in asdict(self).items()})
        return buf.getvalue()

    def to_text(self) -> str:
        return "\n".join([
            f"accuracy     mean {self.mean_accuracy:.6g}  median {self.median_accuracy:.6g}",
            f"completeness mean {self.mean_completeness:.6g}  median {self.median_completeness:.6g}",
            f"overall distance {self.overall_distance:.6g}",
            f"threshold {self.threshold:.6g}: precision {self.precision_pct:.2f}%  "
            f"recall {self.recall_pct:.2f}%  f-score {self.f_score:.2f}",
        ]) + "\n"


def evaluate(pred, reference, dist_threshold: float) -> EvalReport:
    acc = accuracy(pred, reference)
    comp = completeness(pred, reference)
    prec, rec, f = f_score(pred, reference, dist_threshold)
    return EvalReport(acc[0], acc[1], comp[0], comp[1], prec, rec, f,
                      (acc[0] + comp[0]) / 2.0, float(dist_threshold))


def sparsity_sample(view_ids, sparsity: int, batchsize: int = 1) -> list:
    """Views at positions 0, n, 2n, ... each expanded to ``batchsize`` consecutive ids."""
    if sparsity < 1 or batchsize < 1 or batchsize > sparsity:
        raise EvaluationError("need 1 <= batchsize <= sparsity")
    ids = list(view_ids)
    return [ids[i] for start in range(0, len(ids), sparsity)
            for i in range(start, min(start + batchsize, len(ids)))]


def mean_baseline_angle(reference, views) -> float:
    """Mean angle at each reference point between every view and its nearest other view."""
    pts = _points(reference)
    views = list(views)
    if len(views) < 2 or len(pts) == 0:
        raise EvaluationError("need >= 2 views and a non-empty reference")
    centers = np.array([v.center for v in views])
    dist = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    np.fill_diagonal(dist, np.inf)
    # argmin keeps the lowest index on ties, which fixes the nearest-view choice.
    partner = np.argmin(dist, axis=1)
    da = centers[None, :, :] - pts[:, None, :]
    db = centers[None, partner, :] - pts[:, None, :]
    ok = (np.linalg.norm(da, axis=-1) > 0) & (np.linalg.norm(db, axis=-1) > 0)
    if not ok.any():
        raise EvaluationError("all baseline terms degenerate")
    cross = np.linalg.norm(np.cross(da, db), axis=-1)
    dot = np.sum(da * db, axis=-1)
    return float(np.mean(np.arctan2(cross, dot)[ok]))


@dataclass
class CubeCountLedger:
    """Sub-volumes scheduled and processed per level against a dense finest-level sweep."""

    dense_baseline: int
    relative_resolution: float
    cells_scheduled: dict = field(default_factory=dict)
    cells_processed: dict = field(default_factory=dict)

    def record(self, level: int, scheduled: int, processed: int) -> None:
        if processed > scheduled:
            raise EvaluationError("processed cells cannot exceed scheduled cells")
        self.cells_scheduled[level] = int(scheduled)
        self.cells_processed[level] = int(processed)

    @property
    def total_processed(self) -> int:
        return sum(self.cells_processed.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "cells_scheduled", "cells_processed", "dense_baseline",
                    "relative_resolution"])
        for level in sorted(self.cells_scheduled):
            w.writerow([level, self.cells_scheduled[level], self.cells_processed[level],
                        self.dense_baseline, repr(self.relative_resolution)])
        return buf.getvalue()


def speedup_ratio(ledger: CubeCountLedger) -> float:
    """Dense single-scale cell count over cells actually processed across all levels."""
    if ledger.dense_baseline <= 0:
        raise EvaluationError("dense_baseline must be positive")
    processed = ledger.total_processed
    if processed == 0:
        return float("inf")
    return ledger.dense_baseline / processed
