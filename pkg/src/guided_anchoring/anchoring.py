"""Sliding-window and guided anchor generation, oracle predictors, NMS and top-k.

Anchor sets are column arrays rather than lists of objects: a sliding-window
set for one 512x512 image already holds tens of thousands of anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Box, ShapeDelta, iou_matrix
from .losses import ProbabilityMap
from .pyramid import GroundTruthScene, Label, PyramidConfig, assign_level, location_targets

ORACLE_PROB = {Label.POSITIVE: 1.0, Label.IGNORE: 0.3, Label.NEGATIVE: 0.0}
# logits of exact 0/1 are infinite; noisy maps clamp here first
LOGIT_EPS = 1e-6

SLIDING_PRESETS = {
    "rpn-3": ((1.0,), (0.5, 1.0, 2.0)),
    "rpn-9": ((1.0, 2 ** (1 / 3), 2 ** (2 / 3)), (0.5, 1.0, 2.0)),
}


class Scheme(str, Enum):
    SLIDING_WINDOW = "SLIDING_WINDOW"
    GUIDED = "GUIDED"
    GROUND_TRUTH = "GROUND_TRUTH"


@dataclass
class ShapeMap:
    level: int
    deltas: np.ndarray  # (grid_h, grid_w, 2): dw, dh

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=np.float64)
        if self.deltas.ndim != 3 or self.deltas.shape[2] != 2:
            raise ValueError("shape map must be (grid_h, grid_w, 2)")
        if not np.all(np.isfinite(self.deltas)):
            raise ValueError("shape deltas must be finite")

    def delta_at(self, i: int, j: int) -> ShapeDelta:
        return ShapeDelta(float(self.deltas[j, i, 0]), float(self.deltas[j, i, 1]))


@dataclass
class PredictorOutput:
    prob: List[ProbabilityMap]
    shape: List[ShapeMap]

    def check(self, cfg: PyramidConfig) -> None:
        if len(self.prob) != len(cfg.levels) or len(self.shape) != len(cfg.levels):
            raise ValueError("predictor output does not cover every pyramid level")
        for lvl, p, s in zip(cfg.levels, self.prob, self.shape):
            if p.values.shape != lvl.shape or s.deltas.shape[:2] != lvl.shape:
                raise ValueError(f"predictor maps on level {lvl.index} do not match grid {lvl.shape}")


@dataclass(frozen=True)
class Anchor:
    level: int
    cell: Tuple[int, int]
    box: Box
    score: float


@dataclass
class AnchorSet:
    """Column store of anchors. ``boxes`` is center-form ``(N, 4)``."""

    levels: np.ndarray
    cells: np.ndarray  # (N, 2): i, j
    boxes: np.ndarray
    scores: np.ndarray
    scheme: Scheme

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=np.int64).reshape(-1)
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 4)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        n = len(self.levels)
        if not (len(self.cells) == len(self.boxes) == len(self.scores) == n):
            raise ValueError("anchor columns differ in length")

    @classmethod
    def empty(cls, scheme: Scheme) -> "AnchorSet":
        return cls(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 4)), np.zeros(0), scheme)

    @classmethod
    def concat(cls, parts: Sequence["AnchorSet"], scheme: Scheme) -> "AnchorSet":
        if not parts:
            return cls.empty(scheme)
        return cls(
            np.concatenate([p.levels for p in parts]),
            np.concatenate([p.cells for p in parts]),
            np.concatenate([p.boxes for p in parts]),
            np.concatenate([p.scores for p in parts]),
            scheme,
        )

    def __len__(self) -> int:
        return len(self.scores)

    def __iter__(self) -> Iterator[Anchor]:
        for k in range(len(self)):
            yield self[k]

    def __getitem__(self, k: int) -> Anchor:
        i, j = self.cells[k]
        return Anchor(int(self.levels[k]), (int(i), int(j)), Box(*map(float, self.boxes[k])), float(self.scores[k]))

    def take(self, idx) -> "AnchorSet":
        idx = np.asarray(idx, dtype=np.int64)
        return AnchorSet(self.levels[idx], self.cells[idx], self.boxes[idx], self.scores[idx], self.scheme)

    def rank_order(self) -> np.ndarray:
        """Indices sorted by descending score, ties by (level, j, i, position)."""
        return np.lexsort((np.arange(len(self)), self.cells[:, 0], self.cells[:, 1], self.levels, -self.scores))


def sliding_window_anchors(
    cfg: PyramidConfig,
    scales: Sequence[float] = SLIDING_PRESETS["rpn-3"][0],
    ratios: Sequence[float] = SLIDING_PRESETS["rpn-3"][1],
) -> AnchorSet:
    """``len(scales) * len(ratios)`` anchors at every cell, base size ``sigma * stride``."""
    if not scales or not ratios:
        raise ValueError("need at least one scale and one ratio")
    shapes = [(sc / math.sqrt(r), sc * math.sqrt(r)) for sc in scales for r in ratios]
    k = len(shapes)
    parts = []
    for lvl in cfg.levels:
        base = cfg.sigma * lvl.stride
        jj, ii = np.meshgrid(np.arange(lvl.grid_h), np.arange(lvl.grid_w), indexing="ij")
        ii = np.repeat(ii.reshape(-1), k)
        jj = np.repeat(jj.reshape(-1), k)
        wh = np.tile(np.asarray(shapes) * base, (lvl.num_cells, 1))
        boxes = np.column_stack([(ii + 0.5) * lvl.stride, (jj + 0.5) * lvl.stride, wh])
        parts.append(
            AnchorSet(np.full(len(ii), lvl.index), np.column_stack([ii, jj]), boxes, np.ones(len(ii)), Scheme.SLIDING_WINDOW)
        )
    return AnchorSet.concat(parts, Scheme.SLIDING_WINDOW)


def guided_anchors(pred: PredictorOutput, cfg: PyramidConfig, eps_l: float) -> AnchorSet:
    """One anchor of the predicted shape at every cell with probability >= ``eps_l``."""
    pred.check(cfg)
    parts = []
    for lvl, pm, sm in zip(cfg.levels, pred.prob, pred.shape):
        js, is_ = np.nonzero(pm.values >= eps_l)
        base = cfg.sigma * lvl.stride
        d = sm.deltas[js, is_]
        boxes = np.column_stack(
            [(is_ + 0.5) * lvl.stride, (js + 0.5) * lvl.stride, base * np.exp(d[:, 0]), base * np.exp(d[:, 1])]
        )
        parts.append(
            AnchorSet(np.full(len(js), lvl.index), np.column_stack([is_, js]), boxes, pm.values[js, is_], Scheme.GUIDED)
        )
    return AnchorSet.concat(parts, Scheme.GUIDED)


def oracle_maps(scene: GroundTruthScene, cfg: PyramidConfig) -> PredictorOutput:
    """Idealized predictor built from ground truth.

    Probability is 1.0 on CR cells, 0.3 on IGNORE cells and 0 elsewhere. The
    shape at each cell encodes the gt (assigned to that level) whose center is
    nearest to the cell center; levels without gts get zero deltas.
    """
    targets = location_targets(scene, cfg)
    by_level = {}
    for g, b in enumerate(scene.boxes):
        by_level.setdefault(assign_level(b, cfg), []).append(g)
    prob, shape = [], []
    for lvl, tm in zip(cfg.levels, targets):
        p = np.zeros(lvl.shape)
        for lab, v in ORACLE_PROB.items():
            p[tm.labels == lab] = v
        deltas = np.zeros(lvl.shape + (2,))
        gts = by_level.get(lvl.index, [])
        if gts:
            cx, cy = lvl.cell_centers()
            arr = scene.box_array()[gts]
            d2 = (cx[..., None] - arr[:, 0]) ** 2 + (cy[..., None] - arr[:, 1]) ** 2
            nearest = np.argmin(d2, axis=-1)  # first index wins ties
            base = cfg.sigma * lvl.stride
            deltas[..., 0] = np.log(arr[nearest, 2] / base)
            deltas[..., 1] = np.log(arr[nearest, 3] / base)
        prob.append(ProbabilityMap(lvl.index, p))
        shape.append(ShapeMap(lvl.index, deltas))
    return PredictorOutput(prob, shape)


def noisy_oracle_maps(
    scene: GroundTruthScene,
    cfg: PyramidConfig,
    p_sigma: float,
    d_sigma: float,
    seed: int,
) -> PredictorOutput:
    """Oracle maps with seeded Gaussian noise on probability logits and on shape deltas."""
    if p_sigma < 0 or d_sigma < 0:
        raise ValueError("noise scales must be >= 0")
    clean = oracle_maps(scene, cfg)
    if p_sigma == 0 and d_sigma == 0:
        return clean
    rng = np.random.default_rng(seed)
    prob, shape = [], []
    for pm, sm in zip(clean.prob, clean.shape):
        p = pm.values
        if p_sigma > 0:
            q = np.clip(p, LOGIT_EPS, 1 - LOGIT_EPS)
            logit = np.log(q) - np.log1p(-q) + rng.normal(0.0, p_sigma, size=p.shape)
            p = np.clip(1.0 / (1.0 + np.exp(-logit)), 0.0, 1.0)
        d = sm.deltas
        if d_sigma > 0:
            d = d + rng.normal(0.0, d_sigma, size=d.shape)
        prob.append(ProbabilityMap(pm.level, p))
        shape.append(ShapeMap(sm.level, d))
    return PredictorOutput(prob, shape)


def nms(anchors: AnchorSet, iou_thr: float) -> AnchorSet:
    """Greedy suppression in rank order; survivors are returned in rank order."""
    if not 0 < iou_thr < 1:
        raise ValueError("iou_thr must be in (0, 1)")
    order = anchors.rank_order()
    boxes = anchors.boxes[order]
    alive = np.ones(len(order), dtype=bool)
    keep = []
    for r in range(len(order)):
        if not alive[r]:
            continue
        keep.append(order[r])
        rest = np.nonzero(alive[r + 1:])[0] + r + 1
        if len(rest):
            ov = iou_matrix(boxes[r:r + 1], boxes[rest])[0]
            alive[rest[ov > iou_thr]] = False
    return anchors.take(keep)


def top_k(anchors: AnchorSet, k: int) -> AnchorSet:
    if k < 0:
        raise ValueError("k must be >= 0")
    return anchors.take(anchors.rank_order()[:k])


def ground_truth_proposals(scene: GroundTruthScene) -> AnchorSet:
    """The scene's own boxes as unit-score proposals (level -1, cell (-1, -1))."""
    n = len(scene.boxes)
    return AnchorSet(np.full(n, -1), np.full((n, 2), -1), scene.box_array(), np.ones(n), Scheme.GROUND_TRUTH)


def anchors_for_scene(
    scene: GroundTruthScene,
    cfg: PyramidConfig,
    scheme: str,
    eps_l: float = 0.5,
    sliding_preset: str = "rpn-3",
    p_sigma: float = 0.0,
    d_sigma: float = 0.0,
    seed: Optional[int] = None,
) -> AnchorSet:
    """Dispatch used by the CLI and experiment scripts."""
    if scheme == "sliding":
        scales, ratios = SLIDING_PRESETS[sliding_preset]
        return sliding_window_anchors(cfg, scales, ratios)
    if scheme == "guided":
        if p_sigma or d_sigma:
            pred = noisy_oracle_maps(scene, cfg, p_sigma, d_sigma, scene_seed(seed, scene.image_id))
        else:
            pred = oracle_maps(scene, cfg)
        return guided_anchors(pred, cfg, eps_l)
    if scheme == "gt":
        return ground_truth_proposals(scene)
    raise ValueError(f"unknown anchoring scheme {scheme!r}")


def scene_seed(seed: Optional[int], image_id: int) -> int:
    """Per-scene seed so results do not depend on processing order."""
    if seed is None:
        raise ValueError("noisy predictors need an explicit seed")
    return int(np.random.SeedSequence([seed, image_id]).generate_state(1)[0])
