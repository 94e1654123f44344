"""Training objectives evaluated as plain numeric functions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pyramid import Label, LocationTargetMap, ShapeAssignment

PROB_EPS = 1e-12


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"focal alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ConfigurationError(f"focal gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 0.1

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigurationError("loss weights must be non-negative")


@dataclass
class ProbabilityMap:
    level: int
    values: np.ndarray  # (grid_h, grid_w) in [0, 1]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ConfigurationError("probability map must be 2-D")
        if np.any(~np.isfinite(self.values)) or self.values.min(initial=0) < 0 or self.values.max(initial=0) > 1:
            raise ConfigurationError("probabilities must lie in [0, 1]")


def smooth_l1(x, beta: float = 1.0):
    if beta <= 0:
        raise ConfigurationError("smooth L1 beta must be positive")
    ax = np.abs(x)
    out = np.where(ax < beta, 0.5 * ax * ax / beta, ax - 0.5 * beta)
    return float(out) if np.ndim(out) == 0 else out


def bounded_iou_loss(pred, gt, beta: float = 1.0):
    """Shape loss on ``(w, h)`` pairs; accepts scalars or broadcastable arrays."""
    pw, ph = np.asarray(pred[0], dtype=np.float64), np.asarray(pred[1], dtype=np.float64)
    gw, gh = np.asarray(gt[0], dtype=np.float64), np.asarray(gt[1], dtype=np.float64)
    rw = np.minimum(pw / gw, gw / pw)
    rh = np.minimum(ph / gh, gh / ph)
    return smooth_l1(1.0 - rw, beta) + smooth_l1(1.0 - rh, beta)


def focal_loss_map(pred: ProbabilityMap, target: LocationTargetMap, params: FocalParams = FocalParams()) -> float:
    """Focal loss summed over non-IGNORE cells, divided by max(1, #POSITIVE)."""
    loss, n_pos = _focal_sum(pred, target, params)
    return loss / max(n_pos, 1)


def _focal_sum(pred: ProbabilityMap, target: LocationTargetMap, params: FocalParams):
    if pred.values.shape != target.labels.shape:
        raise ConfigurationError(
            f"probability map {pred.values.shape} does not match target {target.labels.shape}"
        )
    p = np.clip(pred.values, PROB_EPS, 1 - PROB_EPS)
    pos = target.labels == Label.POSITIVE
    neg = target.labels == Label.NEGATIVE
    a, g = params.alpha, params.gamma
    pos_terms = -a * (1 - p[pos]) ** g * np.log(p[pos])
    neg_terms = -(1 - a) * p[neg] ** g * np.log1p(-p[neg])
    return float(pos_terms.sum() + neg_terms.sum()), int(pos.sum())


def focal_loss_levels(
    preds: Sequence[ProbabilityMap], targets: Sequence[LocationTargetMap], params: FocalParams = FocalParams()
) -> float:
    """Location loss over a whole pyramid, normalized by the total positive count."""
    total, n_pos = 0.0, 0
    for p, t in zip(preds, targets, strict=True):
        s, n = _focal_sum(p, t, params)
        total += s
        n_pos += n
    return total / max(n_pos, 1)


def shape_loss(pred_wh: Sequence[np.ndarray], assignments: Sequence[ShapeAssignment], beta: float = 1.0) -> float:
    """Mean bounded-IoU loss over assigned (POSITIVE) cells of all levels.

    ``pred_wh[k]`` holds predicted pixel sizes, shape ``(grid_h, grid_w, 2)``.
    """
    total, count = 0.0, 0
    for wh, a in zip(pred_wh, assignments, strict=True):
        mask = a.gt_index >= 0
        if not mask.any():
            continue
        p = wh[mask]
        t = a.target_wh[mask]
        total += float(np.sum(bounded_iou_loss((p[:, 0], p[:, 1]), (t[:, 0], t[:, 1]), beta)))
        count += int(mask.sum())
    return total / max(count, 1)


def joint_loss(l_loc: float, l_shape: float, l_cls: float, l_reg: float, w: LossWeights = LossWeights()) -> float:
    for v in (l_loc, l_shape, l_cls, l_reg):
        if not np.isfinite(v) or v < 0:
            raise ConfigurationError(f"loss components must be finite and >= 0, got {v}")
    return w.lambda1 * l_loc + w.lambda2 * l_shape + l_cls + l_reg
