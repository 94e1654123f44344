import json
import subprocess
import sys

import pytest

from guided_anchoring.cli import main
from guided_anchoring.geometry import Box
from guided_anchoring.io import Corpus, save_coco
from guided_anchoring.pyramid import GroundTruthScene, Label, PyramidConfig, location_targets


@pytest.fixture
def fixture_file(tmp_path):
    p = tmp_path / "fixture.json"
    save_coco(Corpus((GroundTruthScene(0, 256, 256, (Box(100, 100, 64, 64),)),)), p)
    return p


@pytest.fixture
def synth_file(tmp_path):
    out = tmp_path / "synth"
    assert main(["synth", "--out", str(out), "--count", "12", "--extreme-fraction", "0.3", "--seed", "4"]) == 0
    return out / "corpus.json"


def read_report(d):
    return json.loads((d / "report.json").read_text())


def test_synth_outputs(tmp_path, synth_file):
    rep = read_report(synth_file.parent)
    assert rep["result"]["scenes"] == 12
    assert rep["seed"] == 4
    assert rep["config"]["synthesis"]["extreme_fraction"] == 0.3


def test_gt_proposals_recall_all_ones(tmp_path, synth_file):
    assert main(["anchors", "--annotations", str(synth_file), "--scheme", "gt", "--out", str(tmp_path / "a")]) == 0
    out = tmp_path / "r"
    props = tmp_path / "a" / "proposals.jsonl"
    assert main(["eval-recall", "--annotations", str(synth_file), "--proposals", str(props), "--out", str(out)]) == 0
    res = read_report(out)["result"]
    for k in ("ar_100", "ar_300", "ar_1000"):
        assert res[k] == 1.0
    for k in ("ar_small", "ar_medium", "ar_large"):
        assert res[k] in (1.0, None)


def test_sweep_oracle_retention(tmp_path, fixture_file):
    out = tmp_path / "s"
    assert main(["sweep", "--annotations", str(fixture_file), "--eps-list", "0,0.5", "--strides", "16", "--out", str(out)]) == 0
    rows = read_report(out)["result"]["rows"]
    cfg = PyramidConfig.for_image(256, 256, strides=(16,))
    n_cr = location_targets(GroundTruthScene(0, 256, 256, (Box(100, 100, 64, 64),)), cfg)[0].count(Label.POSITIVE)
    assert [r["retention"] for r in rows] == [1.0, n_cr / cfg.total_cells]
    assert rows[1]["retention"] == 1 / 256


def test_targets_fixture(tmp_path, fixture_file):
    out = tmp_path / "t"
    assert main(["targets", "--annotations", str(fixture_file), "--strides", "16", "--out", str(out)]) == 0
    res = read_report(out)["result"]
    lvl = res["scenes"][0]["levels"][0]
    labels = lvl["labels"]
    pos = [(i, j) for j, row in enumerate(labels) for i, v in enumerate(row) if v == 2]
    ign = sorted((i, j) for j, row in enumerate(labels) for i, v in enumerate(row) if v == 1)
    assert pos == [(6, 6)]
    assert ign == [(5, 5), (5, 6), (6, 5)]
    assert lvl["shape_targets"] == [{"i": 6, "j": 6, "gt_id": 0, "w": 64.0, "h": 64.0}]
    # oracle predictor: shapes exact, CR probability 1, IR cells ignored
    assert res["losses"]["shape"] == pytest.approx(0.0, abs=1e-12)
    assert res["losses"]["location"] == pytest.approx(0.0, abs=1e-9)
    assert res["losses"]["joint"] == pytest.approx(0.0, abs=1e-9)


def test_targets_joint_loss_with_opaque_terms(tmp_path, fixture_file):
    out = tmp_path / "t"
    args = ["targets", "--annotations", str(fixture_file), "--strides", "16", "--out", str(out)]
    assert main(args + ["--predictor", "noisy", "--p-sigma", "1", "--d-sigma", "0.3", "--l-cls", "0.5", "--l-reg", "0.25"]) == 0
    l = read_report(out)["result"]["losses"]
    assert l["joint"] == pytest.approx(l["location"] + 0.1 * l["shape"] + 0.75, rel=1e-12)
    assert l["shape"] > 0


def test_iou_dist_and_shape_stats(tmp_path, synth_file):
    a = tmp_path / "a"
    assert main(["anchors", "--annotations", str(synth_file), "--scheme", "guided", "--eps-l", "0.5", "--out", str(a)]) == 0
    d = tmp_path / "d"
    props = str(a / "proposals.jsonl")
    assert main(["iou-dist", "--annotations", str(synth_file), "--proposals", props, "--edges", "0.9,0.7,0.5", "--out", str(d)]) == 0
    counts = read_report(d)["result"]["counts"]
    assert counts == sorted(counts) and len(counts) == 3
    assert (d / "iou_dist.tsv").read_text().startswith("iou_edge\tcount\n")
    h = tmp_path / "h"
    assert main(["shape-stats", "--annotations", str(synth_file), "--proposals", props, "--out", str(h)]) == 0
    assert read_report(h)["result"]["population"] == "GUIDED"
    assert (h / "scale.tsv").exists() and (h / "ratio.tsv").exists()
    g = tmp_path / "g"
    assert main(["shape-stats", "--annotations", str(synth_file), "--out", str(g)]) == 0
    assert read_report(g)["result"]["population"] == "GT"


def test_anchors_nms_topk(tmp_path, fixture_file):
    out = tmp_path / "a"
    args = ["anchors", "--annotations", str(fixture_file), "--scheme", "sliding", "--strides", "16,32"]
    assert main(args + ["--top-k", "7", "--out", str(out)]) == 0
    assert len((out / "proposals.jsonl").read_text().splitlines()) == 7
    assert main(args + ["--nms-iou", "0.5", "--out", str(tmp_path / "n")]) == 0
    assert read_report(tmp_path / "n")["result"]["total_anchors"] < 3 * (16 * 16 + 8 * 8)


def test_config_file_and_flag_override(tmp_path, fixture_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"strides": [16], "eps_list": [0.0, 0.2], "seed": 9}))
    out = tmp_path / "s"
    assert main(["sweep", "--annotations", str(fixture_file), "--config", str(cfg), "--eps-list", "0,0.9", "--out", str(out)]) == 0
    rep = read_report(out)
    assert rep["config"]["strides"] == [16.0]
    assert rep["config"]["eps_list"] == [0.0, 0.9]
    assert rep["seed"] == 9
    assert rep["inputs"]["annotations"] == "fixture.json"


@pytest.mark.parametrize(
    "argv",
    [
        ["sweep", "--bogus"],
        ["nonsense"],
        ["sweep", "--sigma1", "0.6"],  # sigma1 > sigma2
        ["sweep", "--p-sigma", "1.0"],  # noise with the exact oracle
        ["sweep", "--eps-list", "0.5,0.1"],
        ["sweep", "--workers", "0"],
    ],
)
def test_usage_and_config_errors(tmp_path, fixture_file, argv, capsys):
    out = tmp_path / "o"
    full = argv[:1] + ["--annotations", str(fixture_file), "--out", str(out)] + argv[1:]
    assert main(full) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_bad_config_file(tmp_path, fixture_file):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"no_such_key": 1}))
    out = tmp_path / "o"
    assert main(["sweep", "--annotations", str(fixture_file), "--config", str(cfg), "--out", str(out)]) == 1
    assert not out.exists()


def test_data_error_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"images": [{"id": 1, "width": 5, "height": 5}], "annotations": [{"image_id": 1, "bbox": [1]}]}')
    out = tmp_path / "o"
    assert main(["sweep", "--annotations", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["sweep", "--annotations", str(tmp_path / "missing.json"), "--out", str(out)]) == 2


def _run_all(tmp_path, tag, corpus, workers):
    base = tmp_path / tag
    common = ["--workers", str(workers), "--seed", "3"]
    runs = {
        "synth": ["synth", "--count", "8", "--extreme-fraction", "0.5"],
        "anchors": ["anchors", "--annotations", corpus, "--scheme", "guided", "--predictor", "noisy",
                    "--p-sigma", "1", "--d-sigma", "0.2", "--eps-l", "0.3"],
        "targets": ["targets", "--annotations", corpus, "--predictor", "noisy", "--p-sigma", "0.5", "--strides", "16,32,64"],
        "sweep": ["sweep", "--annotations", corpus, "--predictor", "noisy", "--p-sigma", "1"],
        "shape-stats": ["shape-stats", "--annotations", corpus],
    }
    for name, argv in runs.items():
        assert main(argv + common + ["--out", str(base / name)]) == 0
    props = str(base / "anchors" / "proposals.jsonl")
    assert main(["eval-recall", "--annotations", corpus, "--proposals", props, "--out", str(base / "eval-recall")] + common) == 0
    assert main(["iou-dist", "--annotations", corpus, "--proposals", props, "--out", str(base / "iou-dist")] + common) == 0
    return {p.relative_to(base): p.read_bytes() for p in sorted(base.rglob("*")) if p.is_file()}


def test_reports_byte_identical_across_runs_and_workers(tmp_path, synth_file):
    corpus = str(synth_file)
    a = _run_all(tmp_path, "a", corpus, 1)
    b = _run_all(tmp_path, "b", corpus, 1)
    c = _run_all(tmp_path, "c", corpus, 3)
    assert len(a) >= 12
    assert a == b == c


def test_module_entry_point(tmp_path):
    out = tmp_path / "m"
    r = subprocess.run(
        [sys.executable, "-m", "guided_anchoring", "synth", "--count", "3", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
    assert "synthesized 3 scenes" in r.stdout
