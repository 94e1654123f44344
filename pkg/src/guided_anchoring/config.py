"""Run configuration: JSON file values, overridden by command-line flags.

Every key is optional; defaults follow the published training setup
(sigma=8, sigma1=0.2, sigma2=0.5, lambda1=1, lambda2=0.1). Example::

    {
      "strides": [4, 8, 16, 32, 64],
      "sigma": 8.0, "sigma1": 0.2, "sigma2": 0.5,
      "anchor_preset": "rpn-3",
      "sample_pairs": 9,
      "focal_alpha": 0.25, "focal_gamma": 2.0,
      "lambda1": 1.0, "lambda2": 0.1, "smooth_l1_beta": 1.0,
      "eps_l": 0.5,
      "eps_list": [0.0, 0.01, 0.05, 0.1, 0.5],
      "budgets": [100, 300, 1000],
      "iou_edges": [0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5],
      "predictor": "oracle", "p_sigma": 0.0, "d_sigma": 0.0,
      "nms_iou": null, "top_k": null,
      "seed": 0,
      "synthesis": {"count": 200, "extreme_fraction": 0.3, "seed": 0}
    }
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .anchoring import SLIDING_PRESETS
from .geometry import SAMPLE_SCALE_EXPONENTS
from .io import SynthesisSpec
from .losses import FocalParams, LossWeights
from .pyramid import PyramidConfig, GroundTruthScene


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    strides: Tuple[float, ...] = (4.0, 8.0, 16.0, 32.0, 64.0)
    sigma: float = 8.0
    sigma1: float = 0.2
    sigma2: float = 0.5
    anchor_preset: str = "rpn-3"
    sample_pairs: int = 9
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    lambda1: float = 1.0
    lambda2: float = 0.1
    smooth_l1_beta: float = 1.0
    eps_l: float = 0.5
    eps_list: Tuple[float, ...] = (0.0, 0.01, 0.05, 0.1, 0.5)
    budgets: Tuple[int, ...] = (100, 300, 1000)
    iou_edges: Tuple[float, ...] = (0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5)
    predictor: str = "oracle"
    p_sigma: float = 0.0
    d_sigma: float = 0.0
    nms_iou: Optional[float] = None
    top_k: Optional[int] = None
    seed: int = 0
    synthesis: SynthesisSpec = field(default_factory=SynthesisSpec)

    def validate(self) -> "RunConfig":
        try:
            PyramidConfig.for_image(64, 64, self.strides, self.sigma, self.sigma1, self.sigma2)
            FocalParams(self.focal_alpha, self.focal_gamma)
            LossWeights(self.lambda1, self.lambda2)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        if self.anchor_preset not in SLIDING_PRESETS:
            raise ConfigError(f"anchor_preset must be one of {sorted(SLIDING_PRESETS)}")
        if self.sample_pairs not in SAMPLE_SCALE_EXPONENTS:
            raise ConfigError(f"sample_pairs must be one of {sorted(SAMPLE_SCALE_EXPONENTS)}")
        if self.smooth_l1_beta <= 0:
            raise ConfigError("smooth_l1_beta must be positive")
        if list(self.eps_list) != sorted(self.eps_list) or any(not 0 <= e <= 1 for e in self.eps_list):
            raise ConfigError("eps_list must be ascending values in [0, 1]")
        if not 0 <= self.eps_l <= 1:
            raise ConfigError("eps_l must be in [0, 1]")
        if not self.budgets or any(k < 0 for k in self.budgets):
            raise ConfigError("budgets must be non-negative")
        edges = list(self.iou_edges)
        if any(not 0 < e <= 1 for e in edges) or any(b >= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("iou_edges must be strictly descending within (0, 1]")
        if self.predictor not in ("oracle", "noisy"):
            raise ConfigError("predictor must be 'oracle' or 'noisy'")
        if self.p_sigma < 0 or self.d_sigma < 0:
            raise ConfigError("noise scales must be >= 0")
        if self.predictor == "oracle" and (self.p_sigma or self.d_sigma):
            raise ConfigError("p_sigma/d_sigma given but predictor is 'oracle'; use predictor 'noisy'")
        if self.nms_iou is not None and not 0 < self.nms_iou < 1:
            raise ConfigError("nms_iou must be in (0, 1)")
        if self.top_k is not None and self.top_k < 0:
            raise ConfigError("top_k must be >= 0")
        return self

    def pyramid(self, scene: GroundTruthScene) -> PyramidConfig:
        return PyramidConfig.for_image(scene.image_w, scene.image_h, self.strides, self.sigma, self.sigma1, self.sigma2)

    @property
    def focal(self) -> FocalParams:
        return FocalParams(self.focal_alpha, self.focal_gamma)

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lambda1, self.lambda2)

    def to_dict(self) -> Dict[str, Any]:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d


_TUPLE_FIELDS = {"strides": float, "eps_list": float, "budgets": int, "iou_edges": float}


def _coerce(name: str, value: Any) -> Any:
    if name in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        return tuple(_TUPLE_FIELDS[name](v) for v in value)
    return value


def build_config(file_values: Optional[Dict[str, Any]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Merge file values and flag overrides (``None`` overrides are skipped)."""
    merged: Dict[str, Any] = {}
    synth: Dict[str, Any] = {}
    names = {f.name for f in dataclasses.fields(RunConfig)}
    synth_names = {f.name for f in dataclasses.fields(SynthesisSpec)}
    for source in (file_values or {}, overrides or {}):
        for k, v in source.items():
            if v is None and source is overrides:
                continue
            if k == "synthesis":
                if not isinstance(v, dict):
                    raise ConfigError("synthesis must be an object")
                bad = set(v) - synth_names
                if bad:
                    raise ConfigError(f"unknown synthesis keys: {sorted(bad)}")
                synth.update(v)
                continue
            if k not in names:
                raise ConfigError(f"unknown config key {k!r}")
            merged[k] = _coerce(k, v)
    try:
        merged["synthesis"] = SynthesisSpec(**synth)
        cfg = RunConfig(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return cfg.validate()


def load_config_file(path) -> Dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config ({e.strerror})") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data
