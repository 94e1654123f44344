"""Annotation / proposal file formats and the seeded synthetic corpus.

Proposal files are JSON Lines, one anchor per line::

    {"image_id": 3, "level": 1, "i": 6, "j": 6, "x": 104.0, "y": 104.0, "w": 64.0, "h": 64.0, "score": 1.0}

Boxes are center-form pixels. Ground-truth pseudo-proposals use level -1 and
cell (-1, -1).
"""

from __future__ import annotations

import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .anchoring import AnchorSet, Scheme
from .geometry import Box
from .pyramid import GroundTruthScene

log = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class LoadStats:
    clipped: int = 0
    dropped: int = 0


@dataclass
class Corpus:
    scenes: Tuple[GroundTruthScene, ...]
    provenance: str = "COCO_FILE"
    seed: Optional[int] = None
    stats: LoadStats = field(default_factory=LoadStats, compare=False)

    def __post_init__(self):
        self.scenes = tuple(sorted(self.scenes, key=lambda s: s.image_id))
        ids = [s.image_id for s in self.scenes]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate image ids in corpus")

    def __len__(self) -> int:
        return len(self.scenes)

    def by_id(self) -> Dict[int, GroundTruthScene]:
        return {s.image_id: s for s in self.scenes}

    @property
    def num_objects(self) -> int:
        return sum(len(s.boxes) for s in self.scenes)


def atomic_write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _field_error(where: str, msg: str) -> DataError:
    return DataError(f"{where}: {msg}")


def _number(obj, key, where):
    v = obj.get(key) if isinstance(obj, dict) else None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise _field_error(f"{where}.{key}", f"expected a finite number, got {v!r}")
    return v


def parse_coco(data, source: str = "<memory>") -> Corpus:
    if not isinstance(data, dict):
        raise _field_error(source, "top level must be a JSON object")
    images = data.get("images")
    anns = data.get("annotations", [])
    if not isinstance(images, list):
        raise _field_error(f"{source}: images", "missing or not a list")
    if not isinstance(anns, list):
        raise _field_error(f"{source}: annotations", "not a list")

    sizes: Dict[int, Tuple[float, float]] = {}
    for n, img in enumerate(images):
        where = f"{source}: images[{n}]"
        if not isinstance(img, dict) or not isinstance(img.get("id"), int):
            raise _field_error(f"{where}.id", "expected an integer id")
        w, h = _number(img, "width", where), _number(img, "height", where)
        if w <= 0 or h <= 0:
            raise _field_error(where, "image size must be positive")
        if img["id"] in sizes:
            raise _field_error(where, f"duplicate image id {img['id']}")
        sizes[img["id"]] = (w, h)

    boxes: Dict[int, List[Tuple[int, Box]]] = {k: [] for k in sizes}
    stats = LoadStats()
    for n, ann in enumerate(anns):
        where = f"{source}: annotations[{n}]"
        if not isinstance(ann, dict):
            raise _field_error(where, "expected an object")
        img_id = ann.get("image_id")
        if img_id not in sizes:
            raise _field_error(f"{where}.image_id", f"unknown image id {img_id!r}")
        bbox = ann.get("bbox")
        if (
            not isinstance(bbox, list)
            or len(bbox) != 4
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in bbox)
        ):
            raise _field_error(f"{where}.bbox", f"expected 4 finite numbers, got {bbox!r}")
        ann_id = ann.get("id", n)
        if not isinstance(ann_id, int):
            raise _field_error(f"{where}.id", "expected an integer id")
        W, H = sizes[img_id]
        x0, y0, bw, bh = (float(v) for v in bbox)
        cx0, cy0 = min(max(x0, 0.0), W), min(max(y0, 0.0), H)
        cx1, cy1 = min(max(x0 + bw, 0.0), W), min(max(y0 + bh, 0.0), H)
        if cx1 - cx0 <= 0 or cy1 - cy0 <= 0:
            stats.dropped += 1
            continue
        if (cx0, cy0, cx1, cy1) != (x0, y0, x0 + bw, y0 + bh):
            stats.clipped += 1
            box = Box((cx0 + cx1) / 2, (cy0 + cy1) / 2, cx1 - cx0, cy1 - cy0)
        else:
            box = Box(x0 + bw / 2, y0 + bh / 2, bw, bh)
        boxes[img_id].append((ann_id, box))

    if stats.dropped:
        log.warning("dropped %d zero-area annotations from %s", stats.dropped, source)
    if stats.clipped:
        log.warning("clipped %d annotations to image bounds in %s", stats.clipped, source)

    scenes = []
    for img_id, (w, h) in sizes.items():
        items = boxes[img_id]
        try:
            scenes.append(
                GroundTruthScene(img_id, w, h, tuple(b for _, b in items), tuple(i for i, _ in items))
            )
        except ValueError as e:
            raise _field_error(f"{source}: image {img_id}", str(e)) from None
    info = data.get("info") if isinstance(data.get("info"), dict) else {}
    provenance = info.get("provenance", "COCO_FILE")
    seed = info.get("seed") if provenance == "SYNTHETIC" else None
    return Corpus(tuple(scenes), provenance, seed, stats)


def load_coco(path: PathLike) -> Corpus:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"{path}: cannot read annotation file ({e.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    return parse_coco(data, str(path))


def corpus_to_coco(corpus: Corpus) -> dict:
    images, anns = [], []
    for s in corpus.scenes:
        images.append({"id": s.image_id, "width": s.image_w, "height": s.image_h})
        for oid, b in zip(s.object_ids, s.boxes):
            anns.append(
                {
                    "id": oid,
                    "image_id": s.image_id,
                    "bbox": [b.x - b.w / 2, b.y - b.h / 2, b.w, b.h],
                    "area": b.area,
                    "category_id": 1,
                    "iscrowd": 0,
                }
            )
    info = {"provenance": corpus.provenance}
    if corpus.seed is not None:
        info["seed"] = corpus.seed
    return {
        "info": info,
        "images": images,
        "annotations": anns,
        "categories": [{"id": 1, "name": "object"}],
    }


def save_coco(corpus: Corpus, path: PathLike) -> None:
    atomic_write_text(path, json.dumps(corpus_to_coco(corpus), indent=1) + "\n")


def proposals_to_jsonl(proposals: Mapping[int, AnchorSet]) -> str:
    lines = []
    for img_id in sorted(proposals):
        a = proposals[img_id]
        for k in range(len(a)):
            x, y, w, h = (float(v) for v in a.boxes[k])
            rec = {
                "image_id": int(img_id),
                "level": int(a.levels[k]),
                "i": int(a.cells[k, 0]),
                "j": int(a.cells[k, 1]),
                "x": x,
                "y": y,
                "w": w,
                "h": h,
                "score": float(a.scores[k]),
            }
            lines.append(json.dumps(rec))
    return "".join(line + "\n" for line in lines)


def write_proposals(path: PathLike, proposals: Mapping[int, AnchorSet]) -> None:
    atomic_write_text(path, proposals_to_jsonl(proposals))


def read_proposals(path: PathLike, scheme: Scheme = Scheme.GUIDED) -> Dict[int, AnchorSet]:
    path = Path(path)
    cols: Dict[int, List[tuple]] = {}
    try:
        f = path.open(encoding="utf-8")
    except OSError as e:
        raise DataError(f"{path}: cannot read proposals file ({e.strerror})") from None
    with f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{where}: {e.msg}") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("image_id"), int):
                raise _field_error(f"{where}.image_id", "expected an integer")
            vals = [_number(rec, k, where) for k in ("x", "y", "w", "h", "score")]
            if vals[2] <= 0 or vals[3] <= 0:
                raise _field_error(where, "proposal needs positive w and h")
            level = int(rec.get("level", -1))
            cell = (int(rec.get("i", -1)), int(rec.get("j", -1)))
            cols.setdefault(rec["image_id"], []).append((level, cell, vals[:4], vals[4]))
    out = {}
    for img_id, rows in cols.items():
        out[img_id] = AnchorSet(
            np.array([r[0] for r in rows]),
            np.array([r[1] for r in rows]),
            np.array([r[2] for r in rows]),
            np.array([r[3] for r in rows]),
            scheme,
        )
    return out


@dataclass(frozen=True)
class SynthesisSpec:
    """Random scenes of axis-aligned objects.

    Scale (sqrt of area) and aspect ratio are log-uniform. Each object is
    independently "extreme" with probability ``extreme_fraction``; extreme
    objects have ``max(h/w, w/h)`` in ``[extreme_ratio_min, extreme_ratio_max]``,
    normal ones in ``[1, normal_ratio_max]``. Coordinates are multiples of
    ``quantum`` so corner/center conversions are exact.
    """

    count: int = 200
    image_w: float = 512.0
    image_h: float = 512.0
    objects_min: int = 1
    objects_max: int = 6
    scale_min: float = 24.0
    scale_max: float = 256.0
    normal_ratio_max: float = 3.0
    extreme_ratio_min: float = 4.0
    extreme_ratio_max: float = 8.0
    extreme_fraction: float = 0.0
    quantum: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.count < 0 or not 0 <= self.objects_min <= self.objects_max:
            raise ValueError("invalid scene / object counts")
        if not 0 < self.scale_min <= self.scale_max:
            raise ValueError("invalid scale range")
        if not 1 <= self.normal_ratio_max or not 1 < self.extreme_ratio_min <= self.extreme_ratio_max:
            raise ValueError("invalid aspect ratio ranges")
        if not 0 <= self.extreme_fraction <= 1:
            raise ValueError("extreme_fraction must be in [0, 1]")
        if self.quantum <= 0 or self.image_w < 8 * self.quantum or self.image_h < 8 * self.quantum:
            raise ValueError("image too small for the quantum")


def _sample_box(rng: np.random.Generator, spec: SynthesisSpec, extreme: bool) -> Box:
    q = spec.quantum
    lo, hi = (spec.extreme_ratio_min, spec.extreme_ratio_max) if extreme else (1.0, spec.normal_ratio_max)
    r = math.exp(rng.uniform(math.log(lo), math.log(hi))) if hi > lo else lo
    tall = bool(rng.integers(2))
    scale = math.exp(rng.uniform(math.log(spec.scale_min), math.log(spec.scale_max)))
    long_limit = spec.image_h if tall else spec.image_w
    short_limit = spec.image_w if tall else spec.image_h
    short = min(scale / math.sqrt(r), long_limit / r, short_limit)
    short = max(q, math.floor(short / q) * q)
    long_ = round(short * r / q) * q
    # keep long/short inside [lo, hi] after quantizing
    long_ = min(max(long_, math.ceil(short * lo / q) * q), math.floor(short * hi / q) * q)
    long_ = max(long_, short)
    w, h = (short, long_) if tall else (long_, short)
    x0 = math.floor(rng.uniform(0, spec.image_w - w) / q) * q
    y0 = math.floor(rng.uniform(0, spec.image_h - h) / q) * q
    return Box(x0 + w / 2, y0 + h / 2, w, h)


def synthesize(spec: SynthesisSpec) -> Corpus:
    rng = np.random.default_rng(spec.seed)
    scenes = []
    next_id = 0
    for img_id in range(spec.count):
        n = int(rng.integers(spec.objects_min, spec.objects_max + 1))
        boxes = []
        for _ in range(n):
            extreme = bool(rng.random() < spec.extreme_fraction)
            boxes.append(_sample_box(rng, spec, extreme))
        ids = tuple(range(next_id, next_id + n))
        next_id += n
        scenes.append(GroundTruthScene(img_id, spec.image_w, spec.image_h, tuple(boxes), ids))
    return Corpus(tuple(scenes), "SYNTHETIC", spec.seed)


def aspect_ratio(b: Box) -> float:
    """``max(h/w, w/h)``."""
    return max(b.h / b.w, b.w / b.h)


def is_extreme(b: Box, threshold: float = 4.0) -> bool:
    return aspect_ratio(b) >= threshold
