"""Command-line entry point: ``guided-anchoring <command> [options]``.

Each command writes ``report.json`` (plus command-specific files) into
``--out`` and prints a short human summary. Exit codes: 0 ok, 1 usage or
configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import anchoring, evaluation, losses
from .anchoring import AnchorSet, Scheme
from .config import ConfigError, RunConfig, build_config, load_config_file
from .io import DataError, atomic_write_text, corpus_to_coco, load_coco, read_proposals, synthesize
from .io import proposals_to_jsonl
from .pyramid import GroundTruthScene, Label, default_sample_pairs, location_targets, shape_targets

log = logging.getLogger("guided_anchoring")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--out", required=True, help="output directory for reports")
    common.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    common.add_argument("--seed", type=int)
    common.add_argument("--strides", type=_float_list)
    common.add_argument("--sigma", type=float)
    common.add_argument("--sigma1", type=float)
    common.add_argument("--sigma2", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    predictor = _Parser(add_help=False)
    predictor.add_argument("--predictor", choices=["oracle", "noisy"])
    predictor.add_argument("--p-sigma", type=float, dest="p_sigma")
    predictor.add_argument("--d-sigma", type=float, dest="d_sigma")

    ann = _Parser(add_help=False)
    ann.add_argument("--annotations", required=True, help="COCO-format annotation file")

    parser = _Parser(prog="guided-anchoring", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic corpus")
    p.add_argument("--count", type=int)
    p.add_argument("--image-size", type=float, dest="image_size")
    p.add_argument("--extreme-fraction", type=float, dest="extreme_fraction")
    p.add_argument("--objects-max", type=int, dest="objects_max")

    p = sub.add_parser("anchors", parents=[common, ann, predictor], help="emit an anchor set per image")
    p.add_argument("--scheme", choices=["sliding", "guided", "gt"], required=True)
    p.add_argument("--anchor-preset", choices=sorted(anchoring.SLIDING_PRESETS), dest="anchor_preset")
    p.add_argument("--eps-l", type=float, dest="eps_l")
    p.add_argument("--nms-iou", type=float, dest="nms_iou")
    p.add_argument("--top-k", type=int, dest="top_k")

    p = sub.add_parser("targets", parents=[common, ann, predictor], help="location/shape targets and losses")
    p.add_argument("--sample-pairs", type=int, dest="sample_pairs")
    p.add_argument("--focal-alpha", type=float, dest="focal_alpha")
    p.add_argument("--focal-gamma", type=float, dest="focal_gamma")
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--l-cls", type=float, default=0.0, dest="l_cls", help="opaque classification loss term")
    p.add_argument("--l-reg", type=float, default=0.0, dest="l_reg", help="opaque regression loss term")

    p = sub.add_parser("eval-recall", parents=[common, ann], help="AR@k and size-bucket AR")
    p.add_argument("--proposals", required=True)
    p.add_argument("--budgets", type=_int_list)

    p = sub.add_parser("iou-dist", parents=[common, ann], help="cumulative proposal counts by best IoU")
    p.add_argument("--proposals", required=True)
    p.add_argument("--edges", type=_float_list, dest="iou_edges")

    p = sub.add_parser("sweep", parents=[common, ann, predictor], help="location threshold sweep")
    p.add_argument("--eps-list", type=_float_list, dest="eps_list")

    p = sub.add_parser("shape-stats", parents=[common, ann], help="scale / aspect-ratio histograms")
    p.add_argument("--proposals", help="histogram these proposals instead of the ground truth")
    p.add_argument("--population", choices=[t.value for t in evaluation.Population])
    p.add_argument("--bin-width", type=float, default=0.25, dest="bin_width")
    return parser


_CONFIG_FLAGS = (
    "seed", "strides", "sigma", "sigma1", "sigma2", "predictor", "p_sigma", "d_sigma", "anchor_preset",
    "eps_l", "nms_iou", "top_k", "sample_pairs", "focal_alpha", "focal_gamma", "lambda1", "lambda2",
    "budgets", "iou_edges", "eps_list",
)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in _CONFIG_FLAGS if hasattr(args, k)}
    if args.command == "synth":
        synth = {
            "count": args.count,
            "extreme_fraction": args.extreme_fraction,
            "objects_max": args.objects_max,
            "seed": args.seed,
        }
        if args.image_size is not None:
            synth["image_w"] = synth["image_h"] = args.image_size
        synth = {k: v for k, v in synth.items() if v is not None}
        base = dict(file_values.get("synthesis", {}))
        base.update(synth)
        overrides["synthesis"] = base
    return build_config(file_values, overrides)


def map_scenes(fn: Callable, scenes: Sequence[GroundTruthScene], workers: int) -> list:
    """Apply ``fn`` per scene; results keep scene order for any worker count."""
    if workers <= 1 or len(scenes) <= 1:
        return [fn(s) for s in scenes]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, scenes, chunksize=max(1, len(scenes) // (4 * workers))))


def predictor_for(scene: GroundTruthScene, cfg: RunConfig) -> anchoring.PredictorOutput:
    pyr = cfg.pyramid(scene)
    if cfg.predictor == "noisy":
        seed = anchoring.scene_seed(cfg.seed, scene.image_id)
        return anchoring.noisy_oracle_maps(scene, pyr, cfg.p_sigma, cfg.d_sigma, seed)
    return anchoring.oracle_maps(scene, pyr)


def _anchors_job(scene: GroundTruthScene, cfg: RunConfig, scheme: str) -> AnchorSet:
    pyr = cfg.pyramid(scene)
    if scheme == "sliding":
        scales, ratios = anchoring.SLIDING_PRESETS[cfg.anchor_preset]
        a = anchoring.sliding_window_anchors(pyr, scales, ratios)
    elif scheme == "guided":
        a = anchoring.guided_anchors(predictor_for(scene, cfg), pyr, cfg.eps_l)
    else:
        a = anchoring.ground_truth_proposals(scene)
    if cfg.nms_iou is not None:
        a = anchoring.nms(a, cfg.nms_iou)
    if cfg.top_k is not None:
        a = anchoring.top_k(a, cfg.top_k)
    return a


def _targets_job(scene: GroundTruthScene, cfg: RunConfig) -> Dict[str, Any]:
    pyr = cfg.pyramid(scene)
    loc = location_targets(scene, pyr)
    shp = shape_targets(scene, pyr, loc, default_sample_pairs(pyr, cfg.sample_pairs))
    pred = predictor_for(scene, cfg)
    pred_wh = [cfg.sigma * lvl.stride * np.exp(sm.deltas) for lvl, sm in zip(pyr.levels, pred.shape)]
    l_loc = losses.focal_loss_levels(pred.prob, loc, cfg.focal)
    l_shape = losses.shape_loss(pred_wh, shp, cfg.smooth_l1_beta)
    levels = []
    for lvl, tm, sa in zip(pyr.levels, loc, shp):
        levels.append(
            {
                "level": lvl.index,
                "stride": lvl.stride,
                "counts": {lab.name: tm.count(lab) for lab in Label},
                "labels": tm.labels.astype(int).tolist(),
                "shape_targets": [
                    {
                        "i": i,
                        "j": j,
                        "gt_id": scene.object_ids[int(sa.gt_index[j, i])],
                        "w": float(sa.target_wh[j, i, 0]),
                        "h": float(sa.target_wh[j, i, 1]),
                    }
                    for i, j in sa.assigned_cells()
                ],
            }
        )
    return {
        "image_id": scene.image_id,
        "empty_scene": not scene.boxes,
        "levels": levels,
        "losses": {"location": l_loc, "shape": l_shape},
    }


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _report(command: str, cfg: RunConfig, inputs: Dict[str, Optional[str]], result: Any) -> str:
    return _dump(
        {
            "command": command,
            "config": cfg.to_dict(),
            "seed": cfg.seed,
            "inputs": {k: (Path(v).name if v else None) for k, v in inputs.items()},
            "result": result,
        }
    )


def run(args: argparse.Namespace) -> Tuple[Dict[str, str], List[str]]:
    """Compute every output file for a command; nothing is written here."""
    cfg = resolve_config(args)
    files: Dict[str, str] = {}
    summary: List[str] = []
    cmd = args.command

    if cmd == "synth":
        corpus = synthesize(cfg.synthesis)
        n_ext = sum(1 for s in corpus.scenes for b in s.boxes if max(b.w / b.h, b.h / b.w) >= 4)
        files["corpus.json"] = json.dumps(corpus_to_coco(corpus), indent=1) + "\n"
        result = {"scenes": len(corpus), "objects": corpus.num_objects, "extreme_objects": n_ext}
        files["report.json"] = _report(cmd, cfg, {}, result)
        summary.append(f"synthesized {len(corpus)} scenes, {corpus.num_objects} objects ({n_ext} extreme-ratio)")
        return files, summary

    corpus = load_coco(args.annotations)
    scenes = list(corpus.scenes)
    inputs = {"annotations": args.annotations}
    if getattr(args, "proposals", None):
        inputs["proposals"] = args.proposals

    if cmd == "anchors":
        sets = map_scenes(partial(_anchors_job, cfg=cfg, scheme=args.scheme), scenes, args.workers)
        props = {s.image_id: a for s, a in zip(scenes, sets)}
        files["proposals.jsonl"] = proposals_to_jsonl(props)
        counts = [len(a) for a in sets]
        result = {
            "scheme": args.scheme,
            "images": len(scenes),
            "total_anchors": int(sum(counts)),
            "anchors_per_image": float(np.mean(counts)) if counts else 0.0,
        }
        summary.append(f"{args.scheme}: {result['total_anchors']} anchors over {len(scenes)} images")
    elif cmd == "targets":
        per_scene = map_scenes(partial(_targets_job, cfg=cfg), scenes, args.workers)
        loc_mean = float(np.mean([r["losses"]["location"] for r in per_scene])) if per_scene else 0.0
        shape_mean = float(np.mean([r["losses"]["shape"] for r in per_scene])) if per_scene else 0.0
        joint = losses.joint_loss(loc_mean, shape_mean, args.l_cls, args.l_reg, cfg.weights)
        result = {
            "scenes": per_scene,
            "losses": {"location": loc_mean, "shape": shape_mean, "cls": args.l_cls, "reg": args.l_reg, "joint": joint},
        }
        summary.append(f"targets for {len(scenes)} images; L_loc={loc_mean:.6g} L_shape={shape_mean:.6g} L={joint:.6g}")
    elif cmd == "eval-recall":
        props = read_proposals(args.proposals)
        rep = evaluation.recall_report(props, scenes)
        extra = {}
        for k in cfg.budgets:
            if k not in evaluation.BUDGETS:
                extra[str(k)] = evaluation.average_recall(props, scenes, k)
        result = rep.to_dict()
        if extra:
            result["ar_extra"] = extra
        summary.append(
            f"AR@100={rep.ar_100:.4f} AR@300={rep.ar_300:.4f} AR@1000={rep.ar_1000:.4f} "
            f"AR_S={_fmt(rep.ar_small)} AR_M={_fmt(rep.ar_medium)} AR_L={_fmt(rep.ar_large)}"
        )
    elif cmd == "iou-dist":
        props = read_proposals(args.proposals)
        dist = evaluation.iou_distribution(props, scenes, cfg.iou_edges)
        result = dist.to_dict()
        files["iou_dist.tsv"] = "iou_edge\tcount\n" + "".join(f"{e!r}\t{c}\n" for e, c in zip(dist.edges, dist.counts))
        summary.append("edge count: " + " ".join(f"{e:g}:{c}" for e, c in zip(dist.edges, dist.counts)))
    elif cmd == "sweep":
        preds = map_scenes(partial(predictor_for, cfg=cfg), scenes, args.workers)
        rep = evaluation.threshold_sweep(
            {s.image_id: p for s, p in zip(scenes, preds)}, cfg.pyramid, cfg.eps_list, scenes
        )
        result = rep.to_dict()
        for r in rep.rows:
            summary.append(
                f"eps={r.eps_l:g} anchors/img={r.anchors_per_image:.1f} "
                f"retention={r.retention:.4f} coverage={r.mean_best_coverage:.4f}"
            )
    elif cmd == "shape-stats":
        if args.proposals:
            props = read_proposals(args.proposals)
            merged = AnchorSet.concat([props[k] for k in sorted(props)], Scheme.GUIDED)
            tag = evaluation.Population(args.population or "GUIDED")
            hist = evaluation.shape_distribution(merged, args.bin_width, tag)
        else:
            boxes = [b for s in scenes for b in s.boxes]
            tag = evaluation.Population(args.population or "GT")
            hist = evaluation.shape_distribution(boxes, args.bin_width, tag)
        result = hist.to_dict()
        files["scale.tsv"] = hist.table("scale")
        files["ratio.tsv"] = hist.table("ratio")
        summary.append(f"{tag.value}: {hist.size} boxes, {len(hist.scale_counts)} scale bins, {len(hist.ratio_counts)} ratio bins")
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown command {cmd}")

    files["report.json"] = _report(cmd, cfg, inputs, result)
    return files, summary


def _fmt(v: Optional[float]) -> str:
    return "undefined" if v is None else f"{v:.4f}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
            stream=sys.stderr,
        )
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        files, summary = run(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    out = Path(args.out)
    for name in sorted(files):
        atomic_write_text(out / name, files[name])
    for line in summary:
        print(line)
    return 0


if __name__ == "__main__":
    sys.exit(main())
