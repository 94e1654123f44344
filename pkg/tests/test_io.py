import json
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guided_anchoring.anchoring import Scheme, sliding_window_anchors
from guided_anchoring.geometry import Box
from guided_anchoring.io import (
    Corpus,
    DataError,
    SynthesisSpec,
    aspect_ratio,
    load_coco,
    read_proposals,
    save_coco,
    synthesize,
    write_proposals,
)
from guided_anchoring.pyramid import PyramidConfig


def coco(images, anns):
    return {"images": images, "annotations": anns}


def write(tmp_path, obj, name="ann.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


class TestLoadCoco:
    def test_top_left_to_center(self, tmp_path):
        p = write(tmp_path, coco([{"id": 1, "width": 200, "height": 200}], [{"id": 5, "image_id": 1, "bbox": [90, 90, 20, 20]}]))
        c = load_coco(p)
        assert c.scenes[0].boxes == (Box(100, 100, 20, 20),)
        assert c.scenes[0].object_ids == (5,)
        assert c.provenance == "COCO_FILE"

    def test_empty_annotations(self, tmp_path):
        p = write(tmp_path, coco([{"id": 1, "width": 10, "height": 10}, {"id": 2, "width": 10, "height": 10}], []))
        c = load_coco(p)
        assert [s.boxes for s in c.scenes] == [(), ()]

    def test_clip_to_image(self, tmp_path, caplog):
        p = write(tmp_path, coco([{"id": 1, "width": 100, "height": 80}], [{"image_id": 1, "bbox": [-10, 60, 40, 50]}]))
        with caplog.at_level(logging.WARNING):
            c = load_coco(p)
        # x: [-10, 30] -> [0, 30]; y: [60, 110] -> [60, 80]
        assert c.scenes[0].boxes == (Box(15, 70, 30, 20),)
        assert c.stats.clipped == 1
        assert "clipped 1" in caplog.text

    def test_zero_area_dropped(self, tmp_path):
        anns = [
            {"image_id": 1, "bbox": [10, 10, 0, 5]},
            {"image_id": 1, "bbox": [200, 10, 5, 5]},  # entirely outside
            {"image_id": 1, "bbox": [1, 1, 2, 2]},
        ]
        c = load_coco(write(tmp_path, coco([{"id": 1, "width": 100, "height": 100}], anns)))
        assert c.stats.dropped == 2
        assert len(c.scenes[0].boxes) == 1

    def test_extra_fields_ignored(self, tmp_path):
        data = coco(
            [{"id": 1, "width": 50, "height": 50, "file_name": "x.jpg", "license": 3}],
            [{"image_id": 1, "bbox": [0, 0, 5, 5], "segmentation": [[1, 2]], "category_id": 9, "iscrowd": 0}],
        )
        data["licenses"] = []
        assert len(load_coco(write(tmp_path, data)).scenes[0].boxes) == 1

    @pytest.mark.parametrize(
        "data,fragment",
        [
            ("{\n  \"images\": [\n  oops", "line 3"),
            ([], "top level"),
            ({"annotations": []}, "images"),
            (coco([{"id": "a", "width": 1, "height": 1}], []), "images[0].id"),
            (coco([{"id": 1, "width": 0, "height": 1}], []), "images[0]"),
            (coco([{"id": 1, "width": 5, "height": 5}], [{"image_id": 2, "bbox": [0, 0, 1, 1]}]), "annotations[0].image_id"),
            (coco([{"id": 1, "width": 5, "height": 5}], [{"image_id": 1, "bbox": [0, 0, 1]}]), "annotations[0].bbox"),
            (coco([{"id": 1, "width": 5, "height": 5}], [{"image_id": 1, "bbox": [0, 0, "1", 1]}]), "annotations[0].bbox"),
        ],
    )
    def test_malformed(self, tmp_path, data, fragment):
        with pytest.raises(DataError, match=fragment.replace("[", r"\[").replace("]", r"\]")):
            load_coco(write(tmp_path, data))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_coco(tmp_path / "nope.json")


class TestSynthesize:
    def test_deterministic(self):
        spec = SynthesisSpec(count=30, extreme_fraction=0.3, seed=11)
        assert synthesize(spec) == synthesize(spec)
        assert synthesize(spec) != synthesize(SynthesisSpec(count=30, extreme_fraction=0.3, seed=12))

    def test_count(self):
        assert len(synthesize(SynthesisSpec(count=200))) == 200

    def test_no_extremes(self):
        spec = SynthesisSpec(count=100, extreme_fraction=0.0, normal_ratio_max=3.0, seed=1)
        for s in synthesize(spec).scenes:
            for b in s.boxes:
                assert 1 <= aspect_ratio(b) <= 3.0

    def test_all_extreme(self):
        spec = SynthesisSpec(count=50, extreme_fraction=1.0, seed=2)
        ratios = [aspect_ratio(b) for s in synthesize(spec).scenes for b in s.boxes]
        assert min(ratios) >= 4.0 and max(ratios) <= 8.0
        assert len(ratios) > 50

    def test_extreme_fraction_roughly_respected(self):
        c = synthesize(SynthesisSpec(count=200, extreme_fraction=0.3, seed=0))
        frac = np.mean([aspect_ratio(b) >= 4 for s in c.scenes for b in s.boxes])
        assert 0.22 < frac < 0.38

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 10**6), st.floats(0, 1), st.sampled_from([64.0, 200.0, 512.0]))
    def test_boxes_inside_image(self, seed, frac, size):
        spec = SynthesisSpec(count=10, image_w=size, image_h=size, extreme_fraction=frac, seed=seed)
        for s in synthesize(spec).scenes:
            for b in s.boxes:
                x0, y0, x1, y1 = b.to_xyxy()
                assert 0 <= x0 and 0 <= y0 and x1 <= size and y1 <= size

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SynthesisSpec(extreme_fraction=1.5)
        with pytest.raises(ValueError):
            SynthesisSpec(scale_min=10, scale_max=5)


class TestRoundtrip:
    def test_synthetic_corpus(self, tmp_path):
        c = synthesize(SynthesisSpec(count=40, extreme_fraction=0.3, seed=5))
        save_coco(c, tmp_path / "c.json")
        back = load_coco(tmp_path / "c.json")
        assert back == c
        assert back.provenance == "SYNTHETIC" and back.seed == 5

    def test_proposals(self, tmp_path):
        cfg = PyramidConfig.for_image(64, 48, strides=(8, 16))
        a = sliding_window_anchors(cfg)
        a.scores = np.linspace(0, 1, len(a))
        write_proposals(tmp_path / "p.jsonl", {3: a, 1: a.take([0, 5])})
        back = read_proposals(tmp_path / "p.jsonl", Scheme.SLIDING_WINDOW)
        assert sorted(back) == [1, 3]
        for k in ("levels", "cells", "boxes", "scores"):
            assert getattr(back[3], k).tobytes() == getattr(a, k).tobytes()
        first = json.loads((tmp_path / "p.jsonl").read_text().splitlines()[0])
        assert list(first) == ["image_id", "level", "i", "j", "x", "y", "w", "h", "score"]

    def test_bad_proposal_line(self, tmp_path):
        p = tmp_path / "p.jsonl"
        p.write_text('{"image_id": 1, "x": 1, "y": 1, "w": 1, "h": 1, "score": 1}\n{"image_id": 1, "x": 1}\n')
        with pytest.raises(DataError, match="line 2"):
            read_proposals(p)

    def test_duplicate_image_ids(self):
        from guided_anchoring.pyramid import GroundTruthScene

        with pytest.raises(DataError):
            Corpus((GroundTruthScene(1, 5, 5), GroundTruthScene(1, 5, 5)))
