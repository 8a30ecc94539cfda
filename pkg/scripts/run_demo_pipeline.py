#!/usr/bin/env python
"""End-to-end demo: synthesize a corpus, run every pipeline stage, then
the crowd-study analytics, printing each stage's survivor count."""

import argparse
import tempfile
from pathlib import Path

from picsel import pipeline
from picsel.synth import ALLOWED_LICENSES, generate_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, default=None,
                    help="working root (default: a fresh temp dir)")
    ap.add_argument("--images", type=int, default=300)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--sample-size", type=int, default=120)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    root = args.root or Path(tempfile.mkdtemp(prefix="picsel-demo-"))
    corpus = generate_corpus(root / "corpus", n_images=args.images, seed=args.seed)

    cfg = pipeline.PipelineConfig(
        workdir=root / "work",
        corpus_manifest=corpus.manifest_path,
        images_root=corpus.root,
        features_file=corpus.features_path,
        faces_file=corpus.faces_path,
        ratings_file=corpus.ratings_path,
        experts_file=corpus.experts_path,
        seed=args.seed,
        threads=args.threads,
        license_allow=ALLOWED_LICENSES,
        tag_target_size=max(40, args.images // 2),
        tag_tolerance=0.15,
        clusters=8,
        sample_size=args.sample_size,
        bins=12,
        dedup_remove=max(1, args.sample_size // 20),
        bootstrap_sizes=(3, 7, 15),
        bootstrap_reps=100,
    )

    for manifest in pipeline.run_all(cfg):
        print(f"{manifest.stage:<11} {len(manifest.output_ids):>5} ids  "
              f"({manifest.elapsed_seconds:.2f}s)")

    print("histograms:", pipeline.export_histograms(cfg))
    print("screen:    ", pipeline.analytics_screen(cfg))
    print("mos:       ", pipeline.analytics_mos(cfg))
    print("testq:     ", pipeline.analytics_testq(cfg))
    print("reliability:", pipeline.analytics_reliability(cfg))
    print("eval:      ", pipeline.analytics_eval(cfg))
    print(f"\nall outputs under {root}")


if __name__ == "__main__":
    main()
