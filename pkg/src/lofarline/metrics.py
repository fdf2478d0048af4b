"""Detection ROC (PD/FAR), trapezoidal AUC, and line location accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MetricError


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    pd: float                # TP / (TP + FN)
    far: float               # FP / (FP + TN)


def roc_points(scores, labels) -> list:
    """One point per distinct score plus +/-inf sentinels; the decision
    rule is score >= threshold => declare line present.  Tied scores
    share a single point.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise MetricError("scores and labels must be equal-length vectors")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs both labels present")
    thresholds = [float("inf")] + sorted(set(scores.tolist()), reverse=True) + [float("-inf")]
    points = []
    for thr in thresholds:
        declared = scores >= thr
        tp = int((declared & (labels == 1)).sum())
        fp = int((declared & (labels == 0)).sum())
        points.append(RocPoint(threshold=thr, pd=tp / n_pos, far=fp / n_neg))
    return points


def auc(points) -> float:
    """Trapezoidal area over FAR-sorted points."""
    if len(points) < 2:
        raise MetricError("AUC needs at least two ROC points")
    pairs = sorted((p.far, p.pd) for p in points)
    fars = np.array([p[0] for p in pairs])
    pds = np.array([p[1] for p in pairs])
    trapezoid = getattr(np, "trapezoid", np.trapz)
    return float(trapezoid(pds, fars))


def lla(pred_mask, truth_mask, lam: float = 1.0) -> float:
    """Line location accuracy: distance-discounted overlap in [0, 1].

    Each predicted pixel contributes 1 / (1 + lam * d^2) with d the
    Euclidean distance to the nearest truth pixel; the sum is divided by
    max(|pred|, |truth|).  Empty prediction scores 0.
    """
    pred = np.argwhere(np.asarray(pred_mask) != 0)
    truth = np.argwhere(np.asarray(truth_mask) != 0)
    if len(truth) == 0:
        raise MetricError("LLA needs a nonempty ground-truth map")
    if len(pred) == 0:
        return 0.0
    # Pairwise squared distances; fine at lofargram scale.
    d2 = ((pred[:, None, :] - truth[None, :, :]) ** 2).sum(axis=2).min(axis=1)
    return float(np.sum(1.0 / (1.0 + lam * d2)) / max(len(pred), len(truth)))


def random_line_mask(shape, rng) -> np.ndarray:
    """Uniformly random one-pixel-per-row mask; the chance baseline for LLA."""
    t, k = shape
    mask = np.zeros((t, k), dtype=np.uint8)
    mask[np.arange(t), rng.integers(0, k, t)] = 1
    return mask
