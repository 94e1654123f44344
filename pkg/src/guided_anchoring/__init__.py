"""Guided anchoring geometry, targets, losses and proposal evaluation with oracle predictors."""

from .geometry import (
    Box,
    GridSearchSpec,
    SamplePairSet,
    ShapeDelta,
    anchor_center,
    brute_force_viou,
    decode_shape,
    encode_shape,
    iou,
    retinanet_sample_pairs,
    sampled_viou,
)
from .pyramid import (
    GroundTruthScene,
    Label,
    LocationTargetMap,
    PyramidConfig,
    PyramidLevel,
    ShapeAssignment,
    assign_level,
    location_targets,
    project_to_level,
    shape_targets,
)
from .losses import FocalParams, LossWeights, ProbabilityMap, bounded_iou_loss, focal_loss_map, joint_loss, smooth_l1
from .anchoring import (
    Anchor,
    AnchorSet,
    PredictorOutput,
    Scheme,
    ShapeMap,
    guided_anchors,
    nms,
    noisy_oracle_maps,
    oracle_maps,
    sliding_window_anchors,
    top_k,
)
from .evaluation import (
    average_recall,
    best_coverage,
    iou_distribution,
    recall_report,
    shape_distribution,
    threshold_sweep,
)
from .io import Corpus, SynthesisSpec, load_coco, save_coco, synthesize

__version__ = "0.1.0"

__all__ = [
    "Box",
    "GridSearchSpec",
    "SamplePairSet",
    "ShapeDelta",
    "anchor_center",
    "brute_force_viou",
    "decode_shape",
    "encode_shape",
    "iou",
    "retinanet_sample_pairs",
    "sampled_viou",
    "GroundTruthScene",
    "Label",
    "LocationTargetMap",
    "PyramidConfig",
    "PyramidLevel",
    "ShapeAssignment",
    "assign_level",
    "location_targets",
    "project_to_level",
    "shape_targets",
    "FocalParams",
    "LossWeights",
    "ProbabilityMap",
    "bounded_iou_loss",
    "focal_loss_map",
    "joint_loss",
    "smooth_l1",
    "Anchor",
    "AnchorSet",
    "PredictorOutput",
    "Scheme",
    "ShapeMap",
    "guided_anchors",
    "nms",
    "noisy_oracle_maps",
    "oracle_maps",
    "sliding_window_anchors",
    "top_k",
    "average_recall",
    "best_coverage",
    "iou_distribution",
    "recall_report",
    "shape_distribution",
    "threshold_sweep",
    "Corpus",
    "SynthesisSpec",
    "load_coco",
    "save_coco",
    "synthesize",
]
