"""Stage driver for the corpus-construction pipeline.

Stages run in a fixed dependency order (filter, tagsample, crop,
indicators, trim, cluster, sample, dedup), each reading its upstream
stage's id list from the work directory and writing its own outputs plus
a stage manifest (input digest, parameter digest, output ids, timing).
One global seed fans out to per-stage substreams by hashing the stage
name, so reruns and parallel indicator workers reproduce byte-identical
data artifacts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import cropper, diversity_sampler, subjective, tag_sampler
from .content_features import assign_all, fit_codebook, read_feature_matrix, write_codebook
from .indicators import compute_indicator_vector, load_rgb, zscore_trim
from .records import (
    ImageRecord,
    atomic_write_text,
    read_corpus_manifest,
    read_cluster_table,
    read_id_list,
    read_indicator_table,
    write_cluster_table,
    write_id_list,
    write_indicator_table,
)
from .synth import read_face_boxes

log = logging.getLogger(__name__)

STAGE_ORDER = (
    "filter",
    "tagsample",
    "crop",
    "indicators",
    "trim",
    "cluster",
    "sample",
    "dedup",
)


@dataclass
class PipelineConfig:
    workdir: Path = Path("work")
    corpus_manifest: Path = Path("manifest.tsv")
    images_root: Path = Path(".")
    features_file: Path | None = None
    faces_file: Path | None = None
    ratings_file: Path | None = None
    experts_file: Path | None = None

    seed: int = 0
    threads: int = 1

    # filter
    license_allow: tuple[str, ...] = ()
    min_width: int = 960
    min_height: int = 540
    max_width: int = 6000
    max_height: int = 6000

    # tagsample
    tag_quota: int | None = None
    tag_target_size: int | None = None
    tag_tolerance: float = 0.0
    tag_size_cap: int = 1_000_000

    # crop
    crop_width: int = 1024
    crop_height: int = 768
    crop_border: int = 10
    weight_saliency: float = 1.0
    weight_faces: float = 2.0
    weight_center: float = 0.5
    allow_upscale: bool = False
    crop_jpeg_quality: int = 90

    # indicators
    indicators_on_cropped: bool = True

    # trim
    trim_zmax: float = 3.0

    # cluster
    clusters: int = 200

    # sample
    sample_size: int = 0
    bins: int = 200
    swap_budget: int = 20_000

    # dedup
    dedup_remove: int = 0

    # analytics
    plcc_threshold: float = 0.5
    min_ratings: int = 10
    click_ratio: float = 2.0
    quiz_threshold: float = 0.70
    bootstrap_sizes: tuple[int, ...] = (3, 11, 30, 120)
    bootstrap_reps: int = 200
    cv_train_fraction: float = 0.8
    cv_reps: int = 100

    @classmethod
    def from_file(cls, path: Path | str, overrides: dict | None = None) -> "PipelineConfig":
        """Parse a flat "key = value" config file ('#' starts a comment)."""
        raw: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                raw[key.strip()] = value.strip()
        if overrides:
            raw.update({k: str(v) for k, v in overrides.items() if v is not None})

        fields = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        base = Path(path).parent
        for key, value in raw.items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(fields[key], value, base)
        return cls(**kwargs)


def _coerce(f: dataclasses.Field, value: str, base: Path):
    text = value.strip()
    t = f.type
    if t in ("Path", "Path | None"):
        if text in ("", "none", "None"):
            return None
        p = Path(text)
        return p if p.is_absolute() else base / p
    if t in ("int", "int | None"):
        return None if text in ("", "none", "None") else int(text)
    if t == "float":
        return float(text)
    if t == "bool":
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ValueError(f"config key {f.name!r}: bad boolean {text!r}")
    if t == "tuple[str, ...]":
        return tuple(s.strip() for s in text.split(",") if s.strip())
    if t == "tuple[int, ...]":
        return tuple(int(s) for s in text.split(",") if s.strip())
    raise ValueError(f"config key {f.name!r} has unsupported type {t}")


def stage_seed(global_seed: int, stage: str) -> int:
    """Per-stage substream: hash the stage name into the global seed."""
    digest = hashlib.sha256(f"{global_seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class StageManifest:
    stage: str
    input_digest: str
    param_digest: str
    output_ids: tuple[str, ...]
    elapsed_seconds: float
    extra: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        payload = {
            "stage": self.stage,
            "input_digest": self.input_digest,
            "param_digest": self.param_digest,
            "n_outputs": len(self.output_ids),
            "output_ids": list(self.output_ids),
            "elapsed_seconds": self.elapsed_seconds,
            "extra": self.extra,
        }
        atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")


def _digest_ids(ids) -> str:
    h = hashlib.sha256()
    for i in sorted(ids):
        h.update(i.encode())
        h.update(b"\n")
    return h.hexdigest()


def _digest_params(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()


class PipelineError(ValueError):
    pass


def _ids_path(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.workdir / f"{stage}.ids"


def _manifest_path(cfg: PipelineConfig, stage: str) -> Path:
    return cfg.workdir / "manifests" / f"{stage}.json"


def _require_upstream(cfg: PipelineConfig, stage: str) -> list[str]:
    path = _ids_path(cfg, stage)
    if not path.exists():
        raise PipelineError(
            f"missing upstream output {path.name}: run the {stage!r} stage first"
        )
    return read_id_list(path)


def _records_by_id(cfg: PipelineConfig) -> dict[str, ImageRecord]:
    return {r.image_id: r for r in read_corpus_manifest(cfg.corpus_manifest)}


def _finish(
    cfg: PipelineConfig,
    stage: str,
    input_ids,
    params: dict,
    output_ids,
    started: float,
    extra: dict | None = None,
) -> StageManifest:
    manifest = StageManifest(
        stage=stage,
        input_digest=_digest_ids(input_ids),
        param_digest=_digest_params(params),
        output_ids=tuple(output_ids),
        elapsed_seconds=time.monotonic() - started,
        extra=extra or {},
    )
    manifest.write(_manifest_path(cfg, stage))
    write_id_list(output_ids, _ids_path(cfg, stage))
    log.info("stage %s: %d -> %d ids", stage, len(list(input_ids)), len(manifest.output_ids))
    return manifest


# --- stages --------------------------------------------------------------------


def stage_filter(cfg: PipelineConfig) -> StageManifest:
    """Keep records whose license is allowed (empty allow-list accepts all)
    and whose dimensions sit inside the configured bounds."""
    started = time.monotonic()
    records = read_corpus_manifest(cfg.corpus_manifest)
    allow = set(cfg.license_allow)
    kept = []
    for r in records:
        if allow and r.license not in allow:
            continue
        if not (cfg.min_width <= r.width <= cfg.max_width):
            continue
        if not (cfg.min_height <= r.height <= cfg.max_height):
            continue
        kept.append(r.image_id)
    params = {
        "license_allow": sorted(allow),
        "bounds": [cfg.min_width, cfg.min_height, cfg.max_width, cfg.max_height],
    }
    return _finish(
        cfg, "filter", [r.image_id for r in records], params, kept, started
    )


def stage_tagsample(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "filter")
    records = _records_by_id(cfg)
    index = tag_sampler.build_tag_index([records[i] for i in input_ids])

    if cfg.tag_quota is not None:
        quota = cfg.tag_quota
        selection = tag_sampler.sample_by_quota(index, quota, size_cap=cfg.tag_size_cap)
    elif cfg.tag_target_size is not None:
        quota, selection = tag_sampler.choose_quota(
            index, cfg.tag_target_size, cfg.tag_tolerance, size_cap=cfg.tag_size_cap
        )
    else:
        raise PipelineError("config needs tag_quota or tag_target_size")

    report = "\n".join(
        f"{tag}\t{index.phi[tag]}\t{selection.tag_fulfillment.get(tag, 0)}"
        for tag in sorted(index.phi)
    )
    atomic_write_text(cfg.workdir / "tagsample.tags.tsv", report + "\n")
    params = {
        "quota": quota,
        "target": cfg.tag_target_size,
        "tolerance": cfg.tag_tolerance,
        "cap": cfg.tag_size_cap,
    }
    return _finish(
        cfg, "tagsample", input_ids, params, selection.ids, started,
        extra={"quota_used": quota},
    )


def _crop_one(cfg: PipelineConfig, record: ImageRecord, boxes) -> dict | None:
    src = cfg.images_root / record.path
    image = (load_rgb(src) * 255.0).astype(np.uint8)
    h, w = image.shape[:2]
    try:
        resized = cropper.resize_for_crop(
            image, (cfg.crop_width, cfg.crop_height), allow_upscale=cfg.allow_upscale
        )
    except ValueError:
        return None
    scale = resized.shape[1] / w
    sal = cropper.spectral_residual_saliency(resized.astype(np.float64) / 255.0)
    face_boxes = cropper.scale_face_boxes(
        [cropper.FaceBox(*b) for b in boxes.get(record.image_id, [])], scale
    )
    importance = cropper.combine_importance(
        sal,
        face_boxes,
        weights=(cfg.weight_saliency, cfg.weight_faces, cfg.weight_center),
    )
    crop = cropper.best_crop(
        importance, (cfg.crop_width, cfg.crop_height), cfg.crop_border
    )
    cropped = cropper.apply_crop(resized, crop)
    out_path = cfg.workdir / "crops" / f"{record.image_id}.jpg"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(cropped).save(out_path, "JPEG", quality=cfg.crop_jpeg_quality)
    return {"x": crop.x, "y": crop.y, "score": crop.score, "scale": scale}


def stage_crop(cfg: PipelineConfig) -> StageManifest:
    """Standardize every sampled image to the crop geometry; images that
    would need upscaling are skipped and recorded."""
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "tagsample")
    records = _records_by_id(cfg)
    boxes = read_face_boxes(cfg.faces_file) if cfg.faces_file else {}

    ordered = sorted(input_ids)
    results: dict[str, dict] = {}
    skipped: list[str] = []

    def work(image_id: str):
        return image_id, _crop_one(cfg, records[image_id], boxes)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            outcomes = list(pool.map(work, ordered))
    else:
        outcomes = [work(i) for i in ordered]
    for image_id, outcome in outcomes:
        if outcome is None:
            skipped.append(image_id)
        else:
            results[image_id] = outcome

    kept = [i for i in ordered if i in results]
    crop_log = "\n".join(
        "\t".join(
            (
                i,
                str(results[i]["x"]),
                str(results[i]["y"]),
                repr(results[i]["score"]),
                repr(results[i]["scale"]),
            )
        )
        for i in kept
    )
    atomic_write_text(cfg.workdir / "crop.log.tsv", crop_log + ("\n" if crop_log else ""))
    params = {
        "crop": [cfg.crop_width, cfg.crop_height],
        "border": cfg.crop_border,
        "weights": [cfg.weight_saliency, cfg.weight_faces, cfg.weight_center],
        "allow_upscale": cfg.allow_upscale,
        "jpeg_quality": cfg.crop_jpeg_quality,
    }
    return _finish(
        cfg, "crop", input_ids, params, kept, started, extra={"skipped": skipped}
    )


def stage_indicators(cfg: PipelineConfig) -> StageManifest:
    """Compute the indicator table. Pixel measures read the standardized
    crop by default; file measures always read the original file."""
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "crop")
    records = _records_by_id(cfg)
    ordered = sorted(input_ids)

    def work(image_id: str):
        record = records[image_id]
        original = cfg.images_root / record.path
        if cfg.indicators_on_cropped:
            pixels = load_rgb(cfg.workdir / "crops" / f"{image_id}.jpg")
        else:
            pixels = load_rgb(original)
        return compute_indicator_vector(record, pixels, original.read_bytes())

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            vectors = list(pool.map(work, ordered))
    else:
        vectors = [work(i) for i in ordered]

    write_indicator_table(vectors, cfg.workdir / "indicators.tsv")
    params = {"on_cropped": cfg.indicators_on_cropped}
    return _finish(cfg, "indicators", input_ids, params, ordered, started)


def stage_trim(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "indicators")
    vectors = read_indicator_table(cfg.workdir / "indicators.tsv")
    result = zscore_trim(vectors, z_max=cfg.trim_zmax)
    stats = {
        name: {"mean": m, "std": s} for name, (m, s) in result.stats.items()
    }
    atomic_write_text(
        cfg.workdir / "trim.stats.json", json.dumps(stats, indent=1, sort_keys=True) + "\n"
    )
    params = {"z_max": cfg.trim_zmax}
    return _finish(
        cfg, "trim", input_ids, params, result.kept_ids, started,
        extra={"removed": list(result.removed_ids)},
    )


def stage_cluster(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "trim")
    if not cfg.features_file:
        raise PipelineError("config needs features_file for the cluster stage")
    features = read_feature_matrix(cfg.features_file).subset(input_ids)
    k = min(cfg.clusters, len(input_ids))
    codebook = fit_codebook(features, k, seed=stage_seed(cfg.seed, "cluster"))
    assignments = assign_all(features, codebook)
    write_codebook(codebook, cfg.workdir / "codebook.txt")
    write_cluster_table(
        {i: assignments[i] for i in sorted(assignments)}, cfg.workdir / "clusters.tsv"
    )
    params = {"k": k}
    return _finish(cfg, "cluster", input_ids, params, input_ids, started)


def _load_binned(cfg: PipelineConfig, ids: list[str]) -> diversity_sampler.BinnedDataset:
    vectors = {v.image_id: v for v in read_indicator_table(cfg.workdir / "indicators.tsv")}
    clusters = read_cluster_table(cfg.workdir / "clusters.tsv")
    rows = []
    for i in ids:
        v = vectors[i]
        v.cluster_id = clusters[i]
        rows.append(v)
    return diversity_sampler.bin_dataset(rows, n_bins=cfg.bins)


def stage_sample(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "cluster")
    if cfg.sample_size < 1:
        raise PipelineError("config needs sample_size >= 1")
    binned = _load_binned(cfg, input_ids)
    selection = diversity_sampler.uniform_sample(
        binned, cfg.sample_size, seed=stage_seed(cfg.seed, "sample"),
        swap_budget=cfg.swap_budget,
    )
    params = {"m": cfg.sample_size, "bins": cfg.bins, "swap_budget": cfg.swap_budget}
    return _finish(
        cfg, "sample", input_ids, params, selection.ids, started,
        extra={"objective": selection.objective},
    )


def stage_dedup(cfg: PipelineConfig) -> StageManifest:
    started = time.monotonic()
    input_ids = _require_upstream(cfg, "sample")
    vectors = {v.image_id: v for v in read_indicator_table(cfg.workdir / "indicators.tsv")}
    clusters = read_cluster_table(cfg.workdir / "clusters.tsv")
    rows = []
    for i in input_ids:
        v = vectors[i]
        v.cluster_id = clusters[i]
        rows.append(v)
    space = diversity_sampler.build_distance_space(rows)
    result = diversity_sampler.dedup(space, cfg.dedup_remove)
    removal_log = "\n".join(
        f"{removed}\t{kept}\t{repr(d)}" for removed, kept, d in result.removals
    )
    atomic_write_text(
        cfg.workdir / "dedup.removals.tsv", removal_log + ("\n" if removal_log else "")
    )
    params = {"remove_count": cfg.dedup_remove}
    return _finish(cfg, "dedup", input_ids, params, result.selection.ids, started)


def export_histograms(cfg: PipelineConfig, selection_stage: str = "dedup") -> Path:
    """Columnar per-indicator histograms of population vs selection, using
    the same binning as the sampler."""
    ids = _require_upstream(cfg, selection_stage)
    all_ids = _require_upstream(cfg, "trim")
    binned = _load_binned(cfg, all_ids)
    chosen = set(ids)
    rows = ["indicator\tbin\tlow\thigh\tpopulation\tselection"]
    index = {i: n for n, i in enumerate(binned.ids)}
    sel_rows = [index[i] for i in ids]
    for d, name in enumerate(binned.dim_names):
        nb = binned.n_bins[d]
        pop = np.bincount(binned.bin_index[:, d], minlength=nb)
        sel = np.bincount(binned.bin_index[sel_rows, d], minlength=nb)
        if name in binned.edges:
            edges = binned.edges[name]
        else:
            edges = np.arange(nb + 1, dtype=np.float64)
        for b in range(nb):
            lo = edges[b] if b < len(edges) - 1 else edges[-2]
            hi = edges[b + 1] if b + 1 < len(edges) else edges[-1]
            rows.append(
                f"{name}\t{b}\t{repr(float(lo))}\t{repr(float(hi))}\t{pop[b]}\t{sel[b]}"
            )
    out = cfg.workdir / "histograms.tsv"
    atomic_write_text(out, "\n".join(rows) + "\n")
    return out


STAGES = {
    "filter": stage_filter,
    "tagsample": stage_tagsample,
    "crop": stage_crop,
    "indicators": stage_indicators,
    "trim": stage_trim,
    "cluster": stage_cluster,
    "sample": stage_sample,
    "dedup": stage_dedup,
}


def run_stage(name: str, cfg: PipelineConfig) -> StageManifest:
    if name not in STAGES:
        raise PipelineError(f"unknown stage {name!r}; stages: {', '.join(STAGE_ORDER)}")
    cfg.workdir.mkdir(parents=True, exist_ok=True)
    return STAGES[name](cfg)


def run_all(cfg: PipelineConfig) -> list[StageManifest]:
    return [run_stage(name, cfg) for name in STAGE_ORDER]


# --- analytics commands -----------------------------------------------------------


def analytics_mos(cfg: PipelineConfig, exclude_flagged: bool = True) -> Path:
    ratings = subjective.read_ratings(cfg.ratings_file)
    excluded: set[str] = set()
    flagged_path = cfg.workdir / "flagged_workers.txt"
    if exclude_flagged and flagged_path.exists():
        excluded = set(read_id_list(flagged_path))
    records, residue = subjective.compute_mos(ratings, exclude_workers=excluded)
    lines = ["image_id\tmos\tstd\tn"]
    lines += [
        f"{r.image_id}\t{repr(r.mos)}\t{repr(r.std)}\t{r.n_ratings}" for r in records
    ]
    out = cfg.workdir / "mos.tsv"
    atomic_write_text(out, "\n".join(lines) + "\n")
    if residue:
        atomic_write_text(cfg.workdir / "mos.residue.txt", "\n".join(residue) + "\n")
    return out


def analytics_screen(cfg: PipelineConfig) -> Path:
    ratings = subjective.read_ratings(cfg.ratings_file)
    questions = None
    if cfg.experts_file and Path(cfg.experts_file).exists():
        experts = subjective.read_expert_table(cfg.experts_file)
        questions = {
            q.image_id: q for q in subjective.generate_test_questions(experts)
        }
    profiles = subjective.screen_workers(
        ratings,
        questions,
        plcc_threshold=cfg.plcc_threshold,
        min_ratings=cfg.min_ratings,
        click_ratio=cfg.click_ratio,
        quiz_threshold=cfg.quiz_threshold,
    )
    lines = ["worker_id\tn\tcounts\tplcc\tquiz\tflags"]
    flagged = []
    for p in profiles:
        if p.flags:
            flagged.append(p.worker_id)
        lines.append(
            "\t".join(
                (
                    p.worker_id,
                    str(p.n_ratings),
                    ",".join(str(c) for c in p.score_counts),
                    "-" if p.plcc_vs_crowd is None else repr(p.plcc_vs_crowd),
                    "-" if p.test_accuracy is None else repr(p.test_accuracy),
                    ",".join(sorted(p.flags)) or "-",
                )
            )
        )
    out = cfg.workdir / "workers.tsv"
    atomic_write_text(out, "\n".join(lines) + "\n")
    write_id_list(flagged, cfg.workdir / "flagged_workers.txt")
    return out


def analytics_testq(cfg: PipelineConfig) -> Path:
    experts = subjective.read_expert_table(cfg.experts_file)
    questions = subjective.generate_test_questions(experts)
    lines = ["image_id\tvalid_answers"]
    lines += [
        f"{q.image_id}\t{','.join(str(a) for a in q.valid_answers)}" for q in questions
    ]
    out = cfg.workdir / "test_questions.tsv"
    atomic_write_text(out, "\n".join(lines) + "\n")
    return out


def analytics_reliability(cfg: PipelineConfig) -> Path:
    """Expert-vs-crowd reliability: alignment fit, bootstrap RMSE curve,
    expert panel stability, error z-scores, and agreement."""
    ratings = subjective.read_ratings(cfg.ratings_file)
    experts = subjective.read_expert_table(cfg.experts_file)
    expert_mos = experts.mos(mapped=True)

    flagged_path = cfg.workdir / "flagged_workers.txt"
    excluded = set(read_id_list(flagged_path)) if flagged_path.exists() else set()

    scores_by_image: dict[str, list[float]] = {}
    groups: dict[str, list[float]] = {}
    for ev in ratings:
        if ev.worker_id in excluded:
            continue
        mapped = subjective.map_score(ev.score)
        scores_by_image.setdefault(ev.image_id, []).append(mapped)
        groups.setdefault(ev.image_id, []).append(float(ev.score))

    shared = [i for i in experts.image_ids if i in scores_by_image]
    if not shared:
        raise PipelineError("no overlap between expert images and rated images")
    crowd_mos = {i: float(np.mean(scores_by_image[i])) for i in shared}
    slope, intercept = subjective.fit_alignment(
        np.array([crowd_mos[i] for i in shared]),
        np.array([expert_mos[i] for i in shared]),
    )
    aligned = {i: slope * crowd_mos[i] + intercept for i in shared}

    sizes = [s for s in cfg.bootstrap_sizes
             if all(len(scores_by_image[i]) >= s for i in shared)]
    curve = []
    if sizes:
        curve = subjective.bootstrap_rmse(
            scores_by_image,
            {i: expert_mos[i] for i in shared},
            sizes,
            n_reps=cfg.bootstrap_reps,
            seed=stage_seed(cfg.seed, "reliability"),
        )
    panel_std = subjective.expert_bootstrap_std(
        subjective._map_array(experts.scores), seed=stage_seed(cfg.seed, "panel")
    )
    zreport = subjective.error_zscores(
        aligned, {i: expert_mos[i] for i in shared}, panel_std
    )
    agreement = subjective.icc_oneway(groups)

    payload = {
        "alignment": {"slope": slope, "intercept": intercept},
        "expert_panel_bootstrap_std": panel_std,
        "within_2_std_fraction": zreport.within_2_fraction,
        "icc_oneway": agreement,
        "rmse_curve": [
            {
                "group_size": p.group_size,
                "rmse": p.rmse,
                "ci_low": p.ci_low,
                "ci_high": p.ci_high,
            }
            for p in curve
        ],
    }
    out = cfg.workdir / "reliability.json"
    atomic_write_text(out, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    curve_lines = ["group_size\trmse\tci_low\tci_high"]
    curve_lines += [
        f"{p.group_size}\t{repr(p.rmse)}\t{repr(p.ci_low)}\t{repr(p.ci_high)}"
        for p in curve
    ]
    atomic_write_text(cfg.workdir / "rmse_curve.tsv", "\n".join(curve_lines) + "\n")
    return out


def analytics_eval(cfg: PipelineConfig) -> Path:
    if not cfg.features_file:
        raise PipelineError("config needs features_file for eval")
    mos_path = cfg.workdir / "mos.tsv"
    if not mos_path.exists():
        raise PipelineError("run the mos command before eval")
    mos: dict[str, float] = {}
    with open(mos_path, encoding="utf-8") as fh:
        fh.readline()
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) == 4:
                mos[parts[0]] = float(parts[1])
    features = read_feature_matrix(cfg.features_file)
    report = subjective.cross_validate(
        features,
        mos,
        train_fraction=cfg.cv_train_fraction,
        n_reps=cfg.cv_reps,
        seed=stage_seed(cfg.seed, "eval"),
    )
    payload = {
        "srocc_mean": report.srocc_mean,
        "srocc_std": report.srocc_std,
        "plcc_mean": report.plcc_mean,
        "plcc_std": report.plcc_std,
        "n_reps": report.n_reps,
    }
    out = cfg.workdir / "eval.json"
    atomic_write_text(out, json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return out
