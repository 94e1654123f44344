"""Recall and distribution analytics for anchor / proposal sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .anchoring import AnchorSet, PredictorOutput, Scheme, guided_anchors, top_k
from .geometry import Box, iou_matrix, log2_scale_ratio
from .pyramid import GroundTruthScene, PyramidConfig

IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * k, 2) for k in range(10))
BUDGETS = (100, 300, 1000)
SMALL_AREA = 32.0**2
LARGE_AREA = 96.0**2

Proposals = Mapping[int, AnchorSet]


class Population(str, Enum):
    GT = "GT"
    GUIDED = "GUIDED"
    SLIDING_WINDOW = "SLIDING_WINDOW"


@dataclass
class RecallReport:
    ar_100: float
    ar_300: float
    ar_1000: float
    ar_small: Optional[float]
    ar_medium: Optional[float]
    ar_large: Optional[float]
    thresholds: Tuple[float, ...] = IOU_THRESHOLDS
    # budget -> recall at each threshold
    recall_curves: Dict[int, List[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ar_100": self.ar_100,
            "ar_300": self.ar_300,
            "ar_1000": self.ar_1000,
            "ar_small": self.ar_small,
            "ar_medium": self.ar_medium,
            "ar_large": self.ar_large,
            "thresholds": list(self.thresholds),
            "recall_curves": {str(k): v for k, v in sorted(self.recall_curves.items())},
        }


@dataclass
class IoUDistribution:
    edges: List[float]
    counts: List[int]

    def to_dict(self) -> dict:
        return {"edges": list(self.edges), "counts": list(self.counts)}


@dataclass
class SweepRow:
    eps_l: float
    anchors_per_image: float
    retention: float
    mean_best_coverage: float


@dataclass
class SweepReport:
    rows: List[SweepRow]

    def to_dict(self) -> dict:
        return {"rows": [vars(r) for r in self.rows]}


@dataclass
class ShapeHistogram:
    population: Population
    bin_width: float
    scale_centers: List[float]
    scale_counts: List[int]
    ratio_centers: List[float]
    ratio_counts: List[int]

    @property
    def size(self) -> int:
        return sum(self.scale_counts)

    def table(self, which: str) -> str:
        """Two-column ``center<TAB>count`` table for external plotting."""
        centers, counts = (
            (self.scale_centers, self.scale_counts) if which == "scale" else (self.ratio_centers, self.ratio_counts)
        )
        lines = [f"log2_{which}\tcount"] + [f"{c!r}\t{n}" for c, n in zip(centers, counts)]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "population": self.population.value,
            "bin_width": self.bin_width,
            "scale": {"centers": self.scale_centers, "counts": self.scale_counts},
            "ratio": {"centers": self.ratio_centers, "counts": self.ratio_counts},
        }


def best_coverage(anchors: AnchorSet, scene: GroundTruthScene) -> np.ndarray:
    """Per-gt maximum IoU over the anchor set (0 when the set is empty)."""
    gts = scene.box_array()
    if len(anchors) == 0 or len(gts) == 0:
        return np.zeros(len(gts))
    out = np.zeros(len(gts))
    # chunk to bound memory on dense sliding-window sets
    for start in range(0, len(anchors), 65536):
        m = iou_matrix(gts, anchors.boxes[start:start + 65536])
        np.maximum(out, m.max(axis=1), out=out)
    return out


def greedy_match_count(ious: np.ndarray, thr: float) -> int:
    """One-to-one matches, highest IoU first; ties by gt index then proposal rank."""
    g_idx, p_idx = np.nonzero(ious >= thr)
    if len(g_idx) == 0:
        return 0
    vals = ious[g_idx, p_idx]
    order = np.lexsort((p_idx, g_idx, -vals))
    used_g, used_p = set(), set()
    for o in order:
        g, p = int(g_idx[o]), int(p_idx[o])
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
    return len(used_g)


def _scene_ious(proposals: Proposals, scene: GroundTruthScene, k: int, gt_keep=None) -> np.ndarray:
    props = proposals.get(scene.image_id)
    gts = scene.box_array()
    if gt_keep is not None:
        gts = gts[gt_keep]
    if props is None or len(props) == 0:
        return np.zeros((len(gts), 0))
    props = top_k(props, k)
    return iou_matrix(gts, props.boxes)


def _match_counts(
    proposals: Proposals,
    scenes: Sequence[GroundTruthScene],
    k: int,
    gt_filter: Optional[Callable[[Box], bool]],
    thresholds: Sequence[float],
) -> Tuple[np.ndarray, int]:
    matched = np.zeros(len(thresholds), dtype=np.int64)
    total = 0
    for scene in sorted(scenes, key=lambda s: s.image_id):
        keep = None
        if gt_filter is not None:
            keep = np.array([gt_filter(b) for b in scene.boxes], dtype=bool)
        n_gt = len(scene.boxes) if keep is None else int(keep.sum())
        if n_gt == 0:
            continue
        total += n_gt
        ious = _scene_ious(proposals, scene, k, keep)
        for t_i, t in enumerate(thresholds):
            matched[t_i] += greedy_match_count(ious, t)
    return matched, total


def _mean_recall(matched: np.ndarray, total: int) -> float:
    # one integer ratio, so the result is correctly rounded and order independent
    return int(matched.sum()) / (total * len(matched))


def recall_curve(
    proposals: Proposals,
    scenes: Sequence[GroundTruthScene],
    k: int,
    gt_filter: Optional[Callable[[Box], bool]] = None,
    thresholds: Sequence[float] = IOU_THRESHOLDS,
) -> Tuple[List[float], int]:
    """Pooled recall at each threshold and the number of gts counted."""
    matched, total = _match_counts(proposals, scenes, k, gt_filter, thresholds)
    if total == 0:
        return [], 0
    return [int(m) / total for m in matched], total


def average_recall(
    proposals: Proposals,
    scenes: Sequence[GroundTruthScene],
    k: int,
    gt_filter: Optional[Callable[[Box], bool]] = None,
) -> Optional[float]:
    """Mean recall over IoU thresholds 0.50:0.95 with the top-``k`` proposals per image.

    Returns ``None`` when no gt passes ``gt_filter``; a corpus without any gt
    at all also yields ``None``.
    """
    matched, total = _match_counts(proposals, scenes, k, gt_filter, IOU_THRESHOLDS)
    if total == 0:
        return None
    return _mean_recall(matched, total)


def size_bucket(b: Box) -> str:
    a = b.area
    if a < SMALL_AREA:
        return "small"
    if a > LARGE_AREA:
        return "large"
    return "medium"


def recall_report(proposals: Proposals, scenes: Sequence[GroundTruthScene]) -> RecallReport:
    curves = {}
    ars = {}
    for k in BUDGETS:
        matched, total = _match_counts(proposals, scenes, k, None, IOU_THRESHOLDS)
        curves[k] = [int(m) / total for m in matched] if total else []
        ars[k] = _mean_recall(matched, total) if total else 0.0
    buckets = {
        name: average_recall(proposals, scenes, 100, lambda b, name=name: size_bucket(b) == name)
        for name in ("small", "medium", "large")
    }
    return RecallReport(
        ars[100], ars[300], ars[1000], buckets["small"], buckets["medium"], buckets["large"], IOU_THRESHOLDS, curves
    )


def proposal_best_ious(proposals: Proposals, scenes: Sequence[GroundTruthScene]) -> np.ndarray:
    out = []
    for scene in sorted(scenes, key=lambda s: s.image_id):
        props = proposals.get(scene.image_id)
        if props is None or len(props) == 0:
            continue
        if not scene.boxes:
            out.append(np.zeros(len(props)))
            continue
        out.append(iou_matrix(props.boxes, scene.box_array()).max(axis=1))
    return np.concatenate(out) if out else np.zeros(0)


def iou_distribution(
    proposals: Proposals, scenes: Sequence[GroundTruthScene], edges: Sequence[float]
) -> IoUDistribution:
    """Cumulative number of proposals whose best-gt IoU is at least each edge."""
    edges = [float(e) for e in edges]
    if any(not 0 < e <= 1 for e in edges) or any(b >= a for a, b in zip(edges, edges[1:])):
        raise ValueError("edges must be strictly descending within (0, 1]")
    best = proposal_best_ious(proposals, scenes)
    return IoUDistribution(edges, [int(np.count_nonzero(best >= e)) for e in edges])


def threshold_sweep(
    preds: Mapping[int, PredictorOutput],
    cfg: Union[PyramidConfig, Callable[[GroundTruthScene], PyramidConfig]],
    eps_list: Sequence[float],
    scenes: Sequence[GroundTruthScene],
) -> SweepReport:
    """Anchor count, retention vs. eps=0 and mean gt coverage for each threshold."""
    eps_list = [float(e) for e in eps_list]
    if any(b < a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be ascending")
    cfg_for = cfg if callable(cfg) else (lambda _s: cfg)
    scenes = sorted(scenes, key=lambda s: s.image_id)
    counts = np.zeros(len(eps_list))
    cover_sum = np.zeros(len(eps_list))
    n_cells = 0
    n_gts = 0
    for scene in scenes:
        c = cfg_for(scene)
        n_cells += c.total_cells
        n_gts += len(scene.boxes)
        pred = preds[scene.image_id]
        for e_i, eps in enumerate(eps_list):
            anchors = guided_anchors(pred, c, eps)
            counts[e_i] += len(anchors)
            cover_sum[e_i] += best_coverage(anchors, scene).sum()
    n_img = max(len(scenes), 1)
    rows = [
        SweepRow(
            eps,
            float(counts[e_i] / n_img),
            float(counts[e_i] / n_cells) if n_cells else 0.0,
            float(cover_sum[e_i] / n_gts) if n_gts else 0.0,
        )
        for e_i, eps in enumerate(eps_list)
    ]
    return SweepReport(rows)


def _histogram(values: np.ndarray, bin_width: float) -> Tuple[List[float], List[int]]:
    idx = np.floor(values / bin_width + 0.5).astype(np.int64)
    uniq, counts = np.unique(idx, return_counts=True)
    return [float(u * bin_width) for u in uniq], [int(c) for c in counts]


def shape_distribution(
    population: Union[AnchorSet, Sequence[Box]],
    bin_width: float = 0.25,
    tag: Optional[Population] = None,
) -> ShapeHistogram:
    """Histograms of log2 scale (sqrt of area) and log2 aspect ratio (h/w).

    Bins are centered on multiples of ``bin_width``.
    """
    if isinstance(population, AnchorSet):
        wh = population.boxes[:, 2:4]
        if tag is None:
            tag = Population.GUIDED if population.scheme == Scheme.GUIDED else Population.SLIDING_WINDOW
            if population.scheme == Scheme.GROUND_TRUTH:
                tag = Population.GT
    else:
        wh = np.array([(b.w, b.h) for b in population], dtype=np.float64).reshape(-1, 2)
        tag = tag or Population.GT
    if len(wh) == 0:
        raise ValueError("shape distribution of an empty population")
    if bin_width <= 0:
        raise ValueError("bin width must be positive")
    scale, ratio = log2_scale_ratio(wh)
    sc, sn = _histogram(scale, bin_width)
    rc, rn = _histogram(ratio, bin_width)
    return ShapeHistogram(tag, bin_width, sc, sn, rc, rn)
