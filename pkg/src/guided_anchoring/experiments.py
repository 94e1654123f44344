"""Desk-scale experiment drivers shared by ``scripts/`` and the acceptance suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from .anchoring import (
    AnchorSet,
    PredictorOutput,
    SLIDING_PRESETS,
    guided_anchors,
    noisy_oracle_maps,
    oracle_maps,
    scene_seed,
    sliding_window_anchors,
    top_k,
)
from .evaluation import best_coverage, iou_distribution, threshold_sweep
from .geometry import Box, brute_force_viou, GridSearchSpec, retinanet_sample_pairs, sampled_viou
from .io import Corpus, SynthesisSpec, is_extreme, synthesize
from .pyramid import PyramidConfig

DEFAULT_STRIDES = (4.0, 8.0, 16.0, 32.0, 64.0)


def tall_wide_corpus(count: int = 200, seed: int = 0, extreme_fraction: float = 0.3) -> Corpus:
    return synthesize(SynthesisSpec(count=count, extreme_fraction=extreme_fraction, seed=seed))


def random_viou_case(rng: np.random.Generator, gt_min: float = 24.0, gt_max: float = 320.0):
    """A gt with log-uniform sides and an anchor center drawn uniformly inside it."""
    w, h = np.exp(rng.uniform(np.log(gt_min), np.log(gt_max), size=2))
    gt = Box(float(rng.uniform(0, 512)), float(rng.uniform(0, 512)), float(w), float(h))
    center = (float(gt.x + rng.uniform(-w / 2, w / 2)), float(gt.y + rng.uniform(-h / 2, h / 2)))
    return center, gt


@dataclass
class SamplingStudy:
    n_cases: int
    mean_gap: Dict[int, float]
    violations: Dict[int, int]  # cases where sampled exceeds the grid oracle by > 1e-9


def sampling_gap_study(
    n_cases: int = 1000, seed: int = 0, stride: float = 16.0, sigma: float = 8.0, steps: int = 256
) -> SamplingStudy:
    """Gap between grid-oracle vIoU and sampled vIoU for the 3/9/15-pair presets."""
    rng = np.random.default_rng(seed)
    presets = {n: retinanet_sample_pairs(stride, sigma, n) for n in (3, 9, 15)}
    gaps = {n: [] for n in presets}
    bad = {n: 0 for n in presets}
    for _ in range(n_cases):
        center, gt = random_viou_case(rng)
        ref = brute_force_viou(center, gt, GridSearchSpec.around(center, gt, steps))
        for n, pairs in presets.items():
            v = sampled_viou(center, gt, pairs)
            gaps[n].append(ref - v)
            if v > ref + 1e-9:
                bad[n] += 1
    return SamplingStudy(n_cases, {n: float(np.mean(g)) for n, g in gaps.items()}, bad)


def score_by_location(anchors: AnchorSet, pred: PredictorOutput) -> AnchorSet:
    """Copy of ``anchors`` scored with the predictor's probability at each anchor's cell."""
    scores = np.empty(len(anchors))
    for lvl, pm in enumerate(pred.prob):
        m = anchors.levels == lvl
        scores[m] = pm.values[anchors.cells[m, 1], anchors.cells[m, 0]]
    return AnchorSet(anchors.levels, anchors.cells, anchors.boxes, scores, anchors.scheme)


@dataclass
class SchemeComparison:
    guided_cover: np.ndarray
    sliding_cover: np.ndarray
    extreme: np.ndarray
    guided_anchors: int
    sliding_anchors: int
    guided_props: Dict[int, AnchorSet]
    sliding_props: Dict[int, AnchorSet]

    @property
    def extreme_gain(self) -> float:
        return float(self.guided_cover[self.extreme].mean() - self.sliding_cover[self.extreme].mean())


def compare_schemes(
    corpus: Corpus,
    strides: Sequence[float] = DEFAULT_STRIDES,
    eps_l: float = 0.5,
    sliding_preset: str = "rpn-3",
) -> SchemeComparison:
    """Oracle-guided vs sliding-window anchors on every scene of ``corpus``.

    Besides per-gt best coverage, returns equal-budget proposal sets: sliding
    anchors are scored by the same oracle location map and cut to the number
    of guided anchors in each image.
    """
    scales, ratios = SLIDING_PRESETS[sliding_preset]
    g_cov, s_cov, ext = [], [], []
    n_g = n_s = 0
    g_props, s_props = {}, {}
    for scene in corpus.scenes:
        cfg = PyramidConfig.for_image(scene.image_w, scene.image_h, strides)
        pred = oracle_maps(scene, cfg)
        ga = guided_anchors(pred, cfg, eps_l)
        sa = sliding_window_anchors(cfg, scales, ratios)
        n_g += len(ga)
        n_s += len(sa)
        g_cov.append(best_coverage(ga, scene))
        s_cov.append(best_coverage(sa, scene))
        ext.append(np.array([is_extreme(b) for b in scene.boxes], dtype=bool))
        g_props[scene.image_id] = ga
        s_props[scene.image_id] = top_k(score_by_location(sa, pred), len(ga))
    return SchemeComparison(
        np.concatenate(g_cov), np.concatenate(s_cov), np.concatenate(ext), n_g, n_s, g_props, s_props
    )


def iou_dominance(cmp: SchemeComparison, corpus: Corpus, edges: Sequence[float]):
    return (
        iou_distribution(cmp.guided_props, corpus.scenes, edges),
        iou_distribution(cmp.sliding_props, corpus.scenes, edges),
    )


def noisy_sweep(
    corpus: Corpus,
    eps_list: Sequence[float],
    p_sigma: float = 1.0,
    d_sigma: float = 0.0,
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    strides: Sequence[float] = DEFAULT_STRIDES,
):
    """Threshold sweep on noisy oracle maps, one report per seed."""
    reports = []
    for seed in seeds:
        preds = {}
        for scene in corpus.scenes:
            cfg = PyramidConfig.for_image(scene.image_w, scene.image_h, strides)
            preds[scene.image_id] = noisy_oracle_maps(scene, cfg, p_sigma, d_sigma, scene_seed(seed, scene.image_id))
        cfg_for = lambda s: PyramidConfig.for_image(s.image_w, s.image_h, strides)  # noqa: E731
        reports.append(threshold_sweep(preds, cfg_for, eps_list, corpus.scenes))
    return reports


def mean_coverage_vs_shape_noise(
    corpus: Corpus,
    d_sigmas: Sequence[float],
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    eps_l: float = 0.5,
    strides: Sequence[float] = DEFAULT_STRIDES,
) -> List[float]:
    """Mean per-gt best coverage of guided anchors, averaged over seeds, per shape-noise level."""
    out = []
    for d in d_sigmas:
        vals = []
        for seed in seeds:
            covs = []
            for scene in corpus.scenes:
                cfg = PyramidConfig.for_image(scene.image_w, scene.image_h, strides)
                pred = noisy_oracle_maps(scene, cfg, 0.0, d, scene_seed(seed, scene.image_id))
                covs.append(best_coverage(guided_anchors(pred, cfg, eps_l), scene))
            vals.append(float(np.concatenate(covs).mean()))
        out.append(float(np.mean(vals)))
    return out
