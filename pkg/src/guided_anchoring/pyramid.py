"""Feature-pyramid configuration and anchor location / shape targets.

Grids are stored row-major as ``(grid_h, grid_w)`` arrays indexed ``[j, i]``
where ``i`` is the column (x) and ``j`` the row (y), matching
:func:`guided_anchoring.geometry.anchor_center`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Box, SamplePairSet, anchor_center, retinanet_sample_pairs, sampled_viou


class Label(IntEnum):
    NEGATIVE = 0
    IGNORE = 1
    POSITIVE = 2


@dataclass(frozen=True)
class PyramidLevel:
    index: int
    stride: float
    grid_w: int
    grid_h: int

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.grid_h, self.grid_w)

    @property
    def num_cells(self) -> int:
        return self.grid_w * self.grid_h

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Image-space ``(cx, cy)`` grids of shape ``(grid_h, grid_w)``."""
        xs = (np.arange(self.grid_w) + 0.5) * self.stride
        ys = (np.arange(self.grid_h) + 0.5) * self.stride
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class PyramidConfig:
    levels: Tuple[PyramidLevel, ...]
    sigma: float = 8.0
    sigma1: float = 0.2
    sigma2: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if not self.levels:
            raise ValueError("pyramid needs at least one level")
        if not 0 < self.sigma1 < self.sigma2 <= 1:
            raise ValueError(f"need 0 < sigma1 < sigma2 <= 1, got {self.sigma1}, {self.sigma2}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        for k, lvl in enumerate(self.levels):
            if lvl.index != k:
                raise ValueError("level indices must be 0..n-1 in order")
            if lvl.stride <= 0 or lvl.grid_w < 1 or lvl.grid_h < 1:
                raise ValueError(f"invalid level {lvl}")
        strides = [lvl.stride for lvl in self.levels]
        if any(b <= a for a, b in zip(strides, strides[1:])):
            raise ValueError("strides must strictly increase")

    @classmethod
    def for_image(
        cls,
        image_w: float,
        image_h: float,
        strides: Sequence[float] = (4, 8, 16, 32, 64),
        sigma: float = 8.0,
        sigma1: float = 0.2,
        sigma2: float = 0.5,
    ) -> "PyramidConfig":
        levels = tuple(
            PyramidLevel(k, float(s), math.ceil(image_w / s), math.ceil(image_h / s))
            for k, s in enumerate(strides)
        )
        return cls(levels, sigma, sigma1, sigma2)

    @property
    def total_cells(self) -> int:
        return sum(lvl.num_cells for lvl in self.levels)


@dataclass(frozen=True)
class GroundTruthScene:
    image_id: int
    image_w: float
    image_h: float
    boxes: Tuple[Box, ...] = ()
    object_ids: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.object_ids is None:
            object.__setattr__(self, "object_ids", tuple(range(len(self.boxes))))
        else:
            object.__setattr__(self, "object_ids", tuple(self.object_ids))
        if len(self.object_ids) != len(self.boxes):
            raise ValueError("object_ids and boxes differ in length")
        if len(set(self.object_ids)) != len(self.object_ids):
            raise ValueError("duplicate object ids")
        if self.image_w <= 0 or self.image_h <= 0:
            raise ValueError("image size must be positive")

    def box_array(self) -> np.ndarray:
        return np.array([b.as_array() for b in self.boxes], dtype=np.float64).reshape(-1, 4)


@dataclass
class LocationTargetMap:
    level: int
    labels: np.ndarray  # (grid_h, grid_w) int8 of Label values
    empty_scene: bool = False

    def cells(self, label: Label) -> List[Tuple[int, int]]:
        """``(i, j)`` cells carrying ``label`` in row-major order."""
        js, is_ = np.nonzero(self.labels == label)
        return [(int(i), int(j)) for j, i in zip(js, is_)]

    def count(self, label: Label) -> int:
        return int(np.count_nonzero(self.labels == label))


@dataclass
class ShapeAssignment:
    level: int
    gt_index: np.ndarray  # (grid_h, grid_w) int, -1 where unassigned
    target_wh: np.ndarray  # (grid_h, grid_w, 2), nan where unassigned

    def assigned_cells(self) -> List[Tuple[int, int]]:
        js, is_ = np.nonzero(self.gt_index >= 0)
        return [(int(i), int(j)) for j, i in zip(js, is_)]


def project_to_level(b: Box, level: PyramidLevel) -> Tuple[float, float, float, float]:
    s = level.stride
    return (b.x / s, b.y / s, b.w / s, b.h / s)


def assign_level(b: Box, cfg: PyramidConfig) -> int:
    """Level whose ``sigma * stride`` is nearest to the box scale in log2 space."""
    scale = 0.5 * (math.log2(b.w) + math.log2(b.h))
    dists = [abs(scale - math.log2(cfg.sigma * lvl.stride)) for lvl in cfg.levels]
    # min() keeps the first minimum, i.e. the lower index on ties
    return min(range(len(dists)), key=dists.__getitem__)


def _centers_in_region(level: PyramidLevel, cx: float, cy: float, w: float, h: float) -> np.ndarray:
    """Cells whose center lies inside the closed feature-space rectangle."""
    ci = np.arange(level.grid_w) + 0.5
    cj = np.arange(level.grid_h) + 0.5
    in_x = (ci >= cx - w / 2) & (ci <= cx + w / 2)
    in_y = (cj >= cy - h / 2) & (cj <= cy + h / 2)
    return in_y[:, None] & in_x[None, :]


def _nearest_cell(level: PyramidLevel, cx: float, cy: float) -> Tuple[int, int]:
    i = min(max(int(math.floor(cx)), 0), level.grid_w - 1)
    j = min(max(int(math.floor(cy)), 0), level.grid_h - 1)
    return i, j


def center_region_mask(b: Box, level: PyramidLevel, sigma1: float) -> np.ndarray:
    """POSITIVE cells for one box on its assigned level, never empty."""
    x, y, w, h = project_to_level(b, level)
    mask = _centers_in_region(level, x, y, sigma1 * w, sigma1 * h)
    if not mask.any():
        i, j = _nearest_cell(level, x, y)
        mask[j, i] = True
    return mask


def footprint_on_level(src_mask: np.ndarray, src: PyramidLevel, dst: PyramidLevel) -> np.ndarray:
    """Cells of ``dst`` whose square overlaps (with positive area) the image-space
    footprint of the marked cells of ``src``."""
    out = np.zeros(dst.shape, dtype=bool)
    js, is_ = np.nonzero(src_mask)
    if len(js) == 0:
        return out
    ratio = src.stride / dst.stride
    # src cell i spans [i*ratio, (i+1)*ratio) in dst cell units
    for j, i in zip(js, is_):
        i0 = int(math.floor(i * ratio))
        i1 = int(math.ceil((i + 1) * ratio))
        j0 = int(math.floor(j * ratio))
        j1 = int(math.ceil((j + 1) * ratio))
        out[max(j0, 0):min(j1, dst.grid_h), max(i0, 0):min(i1, dst.grid_w)] = True
    return out


def location_targets(scene: GroundTruthScene, cfg: PyramidConfig) -> List[LocationTargetMap]:
    """CR / IR / OR label maps for every pyramid level.

    Each box places its center region (POSITIVE) and ignore ring on its
    assigned level, and marks the footprint of its center-region cells as
    IGNORE on the neighbouring levels. Labels are combined by precedence
    POSITIVE > IGNORE > NEGATIVE, so the result does not depend on box order.
    """
    n = len(cfg.levels)
    pos = [np.zeros(lvl.shape, dtype=bool) for lvl in cfg.levels]
    ign = [np.zeros(lvl.shape, dtype=bool) for lvl in cfg.levels]
    for b in scene.boxes:
        k = assign_level(b, cfg)
        lvl = cfg.levels[k]
        cr = center_region_mask(b, lvl, cfg.sigma1)
        x, y, w, h = project_to_level(b, lvl)
        pos[k] |= cr
        ign[k] |= _centers_in_region(lvl, x, y, cfg.sigma2 * w, cfg.sigma2 * h)
        for nb in (k - 1, k + 1):
            if 0 <= nb < n:
                ign[nb] |= footprint_on_level(cr, lvl, cfg.levels[nb])
    maps = []
    for k in range(n):
        labels = np.full(cfg.levels[k].shape, Label.NEGATIVE, dtype=np.int8)
        labels[ign[k]] = Label.IGNORE
        labels[pos[k]] = Label.POSITIVE
        maps.append(LocationTargetMap(k, labels, empty_scene=not scene.boxes))
    return maps


def default_sample_pairs(cfg: PyramidConfig, n_pairs: int = 9) -> List[SamplePairSet]:
    return [retinanet_sample_pairs(lvl.stride, cfg.sigma, n_pairs) for lvl in cfg.levels]


def shape_targets(
    scene: GroundTruthScene,
    cfg: PyramidConfig,
    loc: Sequence[LocationTargetMap],
    samples: Optional[Sequence[SamplePairSet]] = None,
) -> List[ShapeAssignment]:
    """Match every POSITIVE cell to the gt on its level with the largest sampled vIoU.

    Ties go to the smaller gt area, then the lower object id.
    """
    if samples is None:
        samples = default_sample_pairs(cfg)
    by_level: Dict[int, List[int]] = {}
    for g, b in enumerate(scene.boxes):
        by_level.setdefault(assign_level(b, cfg), []).append(g)

    out = []
    for k, lvl in enumerate(cfg.levels):
        gt_index = np.full(lvl.shape, -1, dtype=np.int64)
        target_wh = np.full(lvl.shape + (2,), np.nan)
        candidates = by_level.get(k, [])
        for i, j in loc[k].cells(Label.POSITIVE):
            assert candidates, f"POSITIVE cell ({i}, {j}) on level {k} without a gt"
            c = anchor_center(i, j, lvl.stride)
            best = min(
                candidates,
                key=lambda g: (
                    -sampled_viou(c, scene.boxes[g], samples[k]),
                    scene.boxes[g].area,
                    scene.object_ids[g],
                ),
            )
            gt_index[j, i] = best
            target_wh[j, i] = (scene.boxes[best].w, scene.boxes[best].h)
        out.append(ShapeAssignment(k, gt_index, target_wh))
    return out
