"""Log2 scale and aspect-ratio histograms of gt boxes, guided anchors and sliding anchors."""

import argparse
from pathlib import Path

from guided_anchoring.anchoring import AnchorSet, SLIDING_PRESETS, Scheme, guided_anchors, oracle_maps, sliding_window_anchors
from guided_anchoring.evaluation import Population, shape_distribution
from guided_anchoring.experiments import DEFAULT_STRIDES, tall_wide_corpus
from guided_anchoring.pyramid import PyramidConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--bin-width", type=float, default=0.5)
    ap.add_argument("--out-dir", help="write <population>_<scale|ratio>.tsv tables here")
    args = ap.parse_args()

    corpus = tall_wide_corpus(args.count)
    gts, guided, sliding = [], [], []
    scales, ratios = SLIDING_PRESETS["rpn-3"]
    for scene in corpus.scenes:
        cfg = PyramidConfig.for_image(scene.image_w, scene.image_h, DEFAULT_STRIDES)
        gts.extend(scene.boxes)
        guided.append(guided_anchors(oracle_maps(scene, cfg), cfg, 0.5))
    sliding = sliding_window_anchors(PyramidConfig.for_image(512, 512, DEFAULT_STRIDES), scales, ratios)
    hists = {
        "gt": shape_distribution(gts, args.bin_width, Population.GT),
        "guided": shape_distribution(AnchorSet.concat(guided, Scheme.GUIDED), args.bin_width),
        "sliding": shape_distribution(sliding, args.bin_width),
    }
    for name, h in hists.items():
        print(f"== {name} ({h.size} boxes)")
        print("log2 ratio\t" + "\t".join(f"{c:+.1f}:{n}" for c, n in zip(h.ratio_centers, h.ratio_counts)))
        if args.out_dir:
            out = Path(args.out_dir)
            out.mkdir(parents=True, exist_ok=True)
            for which in ("scale", "ratio"):
                (out / f"{name}_{which}.tsv").write_text(h.table(which))


if __name__ == "__main__":
    main()
