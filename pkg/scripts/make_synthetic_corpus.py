#!/usr/bin/env python
"""Generate the synthetic demo corpus (images, manifest, features, faces,
crowd ratings, expert panel) under a target directory."""

import argparse
from pathlib import Path

from picsel.synth import generate_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--images", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--clusters", type=int, default=8)
    args = ap.parse_args()

    corpus = generate_corpus(
        args.out, n_images=args.images, seed=args.seed, n_clusters=args.clusters
    )
    print(f"{len(corpus.records)} images -> {args.out}")
    print(f"manifest: {corpus.manifest_path}")
    print(f"features: {corpus.features_path}")
    print(f"ratings:  {corpus.ratings_path}")


if __name__ == "__main__":
    main()
