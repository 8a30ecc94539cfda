"""Command-line front end.

Every subcommand runs one pipeline stage or analytics step against a work
directory; `review-serve` starts the HTTP review service. All options can
come from a flat config file, with command-line flags winning.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import pipeline, review_service
from .pipeline import PipelineConfig
from .records import read_id_list


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    p.add_argument("--workdir", type=Path, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--manifest", type=Path, default=None, dest="corpus_manifest")
    p.add_argument("--images-root", type=Path, default=None, dest="images_root")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="picsel",
        description="Staged construction of a diverse, evenly spread image corpus.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    stage_flags: dict[str, list[tuple[str, dict]]] = {
        "filter": [],
        "tagsample": [
            ("--quota", {"type": int, "dest": "tag_quota"}),
            ("--target-size", {"type": int, "dest": "tag_target_size"}),
            ("--tolerance", {"type": float, "dest": "tag_tolerance"}),
            ("--size-cap", {"type": int, "dest": "tag_size_cap"}),
        ],
        "crop": [
            ("--faces", {"type": Path, "dest": "faces_file"}),
            ("--allow-upscale", {"action": "store_const", "const": True,
                                 "default": None, "dest": "allow_upscale"}),
        ],
        "indicators": [],
        "trim": [("--z-max", {"type": float, "dest": "trim_zmax"})],
        "cluster": [
            ("--features", {"type": Path, "dest": "features_file"}),
            ("--clusters", {"type": int, "dest": "clusters"}),
        ],
        "sample": [
            ("--size", {"type": int, "dest": "sample_size"}),
            ("--bins", {"type": int, "dest": "bins"}),
            ("--swap-budget", {"type": int, "dest": "swap_budget"}),
        ],
        "dedup": [("--remove", {"type": int, "dest": "dedup_remove"})],
    }
    for name, flags in stage_flags.items():
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_common(p)
        if name in ("crop", "indicators"):
            _add_threads(p)
        for flag, kw in flags:
            p.add_argument(flag, **kw)

    p = sub.add_parser("run-all", help="run every pipeline stage in order")
    _add_common(p)
    _add_threads(p)

    p = sub.add_parser("export-hist", help="per-indicator population vs selection histograms")
    _add_common(p)
    p.add_argument("--stage", default="dedup", help="selection stage to export (default dedup)")

    for name, extra in (
        ("mos", [("--ratings", {"type": Path, "dest": "ratings_file"}),
                 ("--keep-flagged", {"action": "store_true"})]),
        ("screen", [("--ratings", {"type": Path, "dest": "ratings_file"}),
                    ("--experts", {"type": Path, "dest": "experts_file"})]),
        ("reliability", [("--ratings", {"type": Path, "dest": "ratings_file"}),
                         ("--experts", {"type": Path, "dest": "experts_file"})]),
        ("testq", [("--experts", {"type": Path, "dest": "experts_file"})]),
        ("eval", [("--features", {"type": Path, "dest": "features_file"})]),
    ):
        p = sub.add_parser(name, help=f"analytics: {name}")
        _add_common(p)
        for flag, kw in extra:
            p.add_argument(flag, **kw)

    p = sub.add_parser("review-serve", help="start the manual review HTTP service")
    p.add_argument("--ids", type=Path, required=True, help="id list file for the queue")
    p.add_argument("--images-dir", type=Path, default=None,
                   help="directory holding {id}.jpg files to serve at /image/{id}")
    p.add_argument("--log", type=Path, default=None, help="verdict log (JSONL, appended)")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--lease-seconds", type=float, default=review_service.DEFAULT_LEASE_SECONDS)

    p = sub.add_parser("synth", help="generate the synthetic demo corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--images", type=int, default=500)
    p.add_argument("--seed", type=int, default=7)

    return parser


def _image_file(images_dir: Path | None, image_id: str) -> str | None:
    if images_dir is None:
        return None
    for ext in (".jpg", ".jpeg", ".png"):
        candidate = images_dir / f"{image_id}{ext}"
        if candidate.exists():
            return str(candidate)
    return None


_CONFIG_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)}


def load_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        k: v for k, v in vars(args).items() if k in _CONFIG_KEYS and v is not None
    }
    if getattr(args, "config", None):
        return PipelineConfig.from_file(args.config, overrides)
    return PipelineConfig(**overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )

    if args.command == "review-serve":
        items = [
            review_service.ReviewItem(image_id=i, path=_image_file(args.images_dir, i))
            for i in read_id_list(args.ids)
        ]
        queue = review_service.ReviewQueue(
            items, log_path=args.log, lease_seconds=args.lease_seconds
        )
        review_service.serve(queue, host=args.host, port=args.port)
        return 0

    if args.command == "synth":
        from .synth import generate_corpus

        corpus = generate_corpus(args.out, n_images=args.images, seed=args.seed)
        print(f"wrote {len(corpus.records)} images under {args.out}")
        return 0

    cfg = load_config(args)

    if args.command == "run-all":
        for manifest in pipeline.run_all(cfg):
            print(f"{manifest.stage}: {len(manifest.output_ids)} ids")
        return 0
    if args.command in pipeline.STAGES:
        manifest = pipeline.run_stage(args.command, cfg)
        print(f"{manifest.stage}: {len(manifest.output_ids)} ids")
        return 0
    if args.command == "export-hist":
        out = pipeline.export_histograms(cfg, selection_stage=args.stage)
        print(f"wrote {out}")
        return 0
    if args.command == "mos":
        out = pipeline.analytics_mos(cfg, exclude_flagged=not args.keep_flagged)
        print(f"wrote {out}")
        return 0
    if args.command == "screen":
        out = pipeline.analytics_screen(cfg)
        print(f"wrote {out}")
        return 0
    if args.command == "reliability":
        out = pipeline.analytics_reliability(cfg)
        print(f"wrote {out}")
        return 0
    if args.command == "testq":
        out = pipeline.analytics_testq(cfg)
        print(f"wrote {out}")
        return 0
    if args.command == "eval":
        out = pipeline.analytics_eval(cfg)
        print(f"wrote {out}")
        return 0
    raise SystemExit(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
