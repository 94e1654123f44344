"""Box algebra, feature-map coordinate mapping and the anchor shape transform.

Boxes are center-form ``(x, y, w, h)`` in image pixels everywhere in this
package. Array helpers take ``(N, 4)`` float arrays in the same layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

# Scale exponents (powers of two) for the sample-pair presets; the 9-pair
# preset is the RetinaNet anchor family.
SAMPLE_SCALE_EXPONENTS = {
    3: (0.0,),
    9: (0.0, 1 / 3, 2 / 3),
    15: (-1 / 3, 0.0, 1 / 3, 2 / 3, 1.0),
}
SAMPLE_RATIOS = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class Box:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive size, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def to_xyxy(self) -> Tuple[float, float, float, float]:
        return (
            self.x - self.w / 2,
            self.y - self.h / 2,
            self.x + self.w / 2,
            self.y + self.h / 2,
        )

    def translated(self, dx: float, dy: float) -> "Box":
        return Box(self.x + dx, self.y + dy, self.w, self.h)


@dataclass(frozen=True)
class ShapeDelta:
    """Log-scale shape offsets relative to ``sigma * stride``."""

    dw: float
    dh: float

    def __post_init__(self):
        if not (math.isfinite(self.dw) and math.isfinite(self.dh)):
            raise ValueError(f"non-finite shape delta ({self.dw}, {self.dh})")


@dataclass(frozen=True)
class SamplePairSet:
    pairs: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        pairs = tuple((float(w), float(h)) for w, h in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if not pairs:
            raise ValueError("sample pair set is empty")
        if any(w <= 0 or h <= 0 for w, h in pairs):
            raise ValueError("sample pairs must have positive sizes")
        if len(set(pairs)) != len(pairs):
            raise ValueError("duplicate sample pairs")

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pairs, dtype=np.float64)


@dataclass(frozen=True)
class GridSearchSpec:
    w_min: float
    w_max: float
    h_min: float
    h_max: float
    steps_per_axis: int = 256

    def __post_init__(self):
        if not (0 < self.w_min < self.w_max and 0 < self.h_min < self.h_max):
            raise ValueError("grid bounds must satisfy 0 < min < max")
        if self.steps_per_axis < 2:
            raise ValueError("steps_per_axis must be >= 2")

    @classmethod
    def around(cls, center: Tuple[float, float], gt: Box, steps_per_axis: int = 256) -> "GridSearchSpec":
        """Bounds ``[dim/8, 8*dim + 2*|offset|]`` per axis, wide enough for the optimum."""
        ox = abs(center[0] - gt.x)
        oy = abs(center[1] - gt.y)
        return cls(gt.w / 8, 8 * gt.w + 2 * ox, gt.h / 8, 8 * gt.h + 2 * oy, steps_per_axis)

    def _axis(self, lo: float, hi: float) -> np.ndarray:
        # t = k / steps keeps the grid for 2n steps an exact superset of n steps
        t = np.arange(self.steps_per_axis + 1) / self.steps_per_axis
        return lo * np.exp(t * math.log(hi / lo))

    def widths(self) -> np.ndarray:
        return self._axis(self.w_min, self.w_max)

    def heights(self) -> np.ndarray:
        return self._axis(self.h_min, self.h_max)


def _overlap_1d(c1, s1, c2, s2):
    lo = np.maximum(c1 - s1 / 2, c2 - s2 / 2)
    hi = np.minimum(c1 + s1 / 2, c2 + s2 / 2)
    return np.clip(hi - lo, 0.0, None)


def iou(a: Box, b: Box) -> float:
    inter = float(_overlap_1d(a.x, a.w, b.x, b.w) * _overlap_1d(a.y, a.h, b.y, b.h))
    if inter <= 0.0:
        return 0.0
    # edge arithmetic can overshoot 1 by an ulp for identical boxes
    return min(1.0, inter / (a.area + b.area - inter))


def iou_matrix(boxes1: np.ndarray, boxes2: np.ndarray) -> np.ndarray:
    """Pairwise IoU of center-form box arrays, shape ``(N, M)``."""
    b1 = np.asarray(boxes1, dtype=np.float64).reshape(-1, 4)
    b2 = np.asarray(boxes2, dtype=np.float64).reshape(-1, 4)
    if len(b1) == 0 or len(b2) == 0:
        return np.zeros((len(b1), len(b2)))
    ix = _overlap_1d(b1[:, None, 0], b1[:, None, 2], b2[None, :, 0], b2[None, :, 2])
    iy = _overlap_1d(b1[:, None, 1], b1[:, None, 3], b2[None, :, 1], b2[None, :, 3])
    inter = ix * iy
    union = (b1[:, 2] * b1[:, 3])[:, None] + (b2[:, 2] * b2[:, 3])[None, :] - inter
    return np.where(inter > 0, np.minimum(inter / union, 1.0), 0.0)


def anchor_center(i: int, j: int, s: float) -> Tuple[float, float]:
    """Image-space center of feature cell ``(i, j)``; ``i`` indexes columns."""
    return ((i + 0.5) * s, (j + 0.5) * s)


def decode_shape(d: ShapeDelta, s: float, sigma: float) -> Tuple[float, float]:
    base = sigma * s
    return base * math.exp(d.dw), base * math.exp(d.dh)


def encode_shape(w: float, h: float, s: float, sigma: float) -> ShapeDelta:
    base = sigma * s
    return ShapeDelta(math.log(w / base), math.log(h / base))


def retinanet_sample_pairs(s: float, sigma: float, n_pairs: int = 9) -> SamplePairSet:
    """Scale x aspect-ratio family with base size ``(sigma / 2) * s``.

    ``n_pairs`` selects the 3-, 9- or 15-pair preset; each is a subset of the
    next larger one.
    """
    try:
        exponents = SAMPLE_SCALE_EXPONENTS[n_pairs]
    except KeyError:
        raise ValueError(f"no sample-pair preset with {n_pairs} pairs") from None
    base = sigma / 2 * s
    pairs = []
    for e in exponents:
        size = base * 2.0**e
        for r in SAMPLE_RATIOS:
            pairs.append((size / math.sqrt(r), size * math.sqrt(r)))
    return SamplePairSet(tuple(pairs))


def _best_iou_over_shapes(center, gt: Box, ws: np.ndarray, hs: np.ndarray) -> float:
    # ws, hs broadcast against each other; returns max IoU over all shapes
    ix = _overlap_1d(center[0], ws, gt.x, gt.w)
    iy = _overlap_1d(center[1], hs, gt.y, gt.h)
    inter = ix * iy
    union = ws * hs + gt.area - inter
    ious = np.where(inter > 0, np.minimum(inter / union, 1.0), 0.0)
    return float(ious.max()) if ious.size else 0.0


def sampled_viou(center: Tuple[float, float], gt: Box, samples: SamplePairSet) -> float:
    arr = samples.as_array()
    return _best_iou_over_shapes(center, gt, arr[:, 0], arr[:, 1])


def brute_force_viou(center: Tuple[float, float], gt: Box, spec: GridSearchSpec | None = None) -> float:
    """Maximum IoU over a dense log-spaced ``(w, h)`` grid at a fixed center.

    The grid always includes ``(gt.w, gt.h)`` when it lies inside the bounds,
    so a centered anchor reaches exactly 1.0.
    """
    if spec is None:
        spec = GridSearchSpec.around(center, gt)
    ws = spec.widths()
    hs = spec.heights()
    best = _best_iou_over_shapes(center, gt, ws[:, None], hs[None, :])
    if spec.w_min <= gt.w <= spec.w_max and spec.h_min <= gt.h <= spec.h_max:
        best = max(best, _best_iou_over_shapes(center, gt, np.array([gt.w]), np.array([gt.h])))
    return best


def boxes_to_array(boxes: Iterable[Box]) -> np.ndarray:
    out = np.array([b.as_array() for b in boxes], dtype=np.float64)
    return out.reshape(-1, 4)


def xyxy_to_center(x0: float, y0: float, x1: float, y1: float) -> Box:
    return Box((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


def log2_scale_ratio(wh: Sequence[Sequence[float]] | np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """``log2(sqrt(w*h))`` and ``log2(h/w)`` for an ``(N, 2)`` array of sizes."""
    arr = np.asarray(wh, dtype=np.float64).reshape(-1, 2)
    w, h = arr[:, 0], arr[:, 1]
    return 0.5 * (np.log2(w) + np.log2(h)), np.log2(h) - np.log2(w)
