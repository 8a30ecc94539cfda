"""Deterministic synthetic corpus for demos and end-to-end tests.

Generates a mid-size photo catalog (JPEG files with varied geometry,
exposure, color, texture, and encode quality), machine tags with a
skewed popularity profile, content feature vectors with planted cluster
structure, optional face boxes, and a crowd + expert rating set with
planted unreliable workers. Everything derives from one seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .content_features import FeatureMatrix, write_feature_matrix
from .records import ImageRecord, TagAssignment, write_corpus_manifest
from .subjective import ExpertSet, RatingEvent, write_expert_table, write_ratings

TAG_VOCAB = (
    "animal",
    "architecture",
    "beach",
    "city",
    "cloud",
    "flower",
    "food",
    "mountain",
    "night",
    "people",
    "portrait",
    "street",
    "tree",
    "water",
)

LICENSES = ("by", "by-sa", "by-nc", "reserved")
ALLOWED_LICENSES = ("by", "by-sa")


@dataclass
class SynthCorpus:
    root: Path
    manifest_path: Path
    features_path: Path
    faces_path: Path
    ratings_path: Path
    experts_path: Path
    records: list[ImageRecord]


def _paint_image(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Smooth random field + hard-edged patches, so indicators spread out."""
    base = rng.random((6, 8, 3))
    img = Image.fromarray((base * 255).astype(np.uint8)).resize(
        (width, height), Image.BICUBIC
    )
    arr = np.asarray(img, dtype=np.float64)

    for _ in range(int(rng.integers(2, 7))):
        pw = int(rng.integers(width // 10, width // 3))
        ph = int(rng.integers(height // 10, height // 3))
        x = int(rng.integers(0, width - pw))
        y = int(rng.integers(0, height - ph))
        color = rng.random(3) * 255
        arr[y : y + ph, x : x + pw] = 0.6 * arr[y : y + ph, x : x + pw] + 0.4 * color

    noise_level = rng.uniform(0.0, 18.0)
    arr += rng.normal(0.0, noise_level, arr.shape)

    gain = rng.uniform(0.45, 1.25)
    offset = rng.uniform(-25, 45)
    arr = arr * gain + offset

    gray = arr.mean(axis=2, keepdims=True)
    sat = rng.uniform(0.1, 1.6)
    arr = gray + (arr - gray) * sat
    return np.clip(arr, 0, 255).astype(np.uint8)


def generate_corpus(
    root: Path | str,
    n_images: int = 500,
    seed: int = 7,
    n_clusters: int = 8,
    feature_dim: int = 16,
) -> SynthCorpus:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    # Skewed tag popularity, fixed per corpus.
    tag_weights = 1.0 / np.arange(1, len(TAG_VOCAB) + 1) ** 0.8
    tag_weights /= tag_weights.sum()

    centers = rng.normal(0.0, 3.0, (n_clusters, feature_dim))

    records: list[ImageRecord] = []
    feat_ids: list[str] = []
    feat_rows: list[np.ndarray] = []
    face_lines: list[str] = []

    sizes = [(1056, 792), (1120, 840), (1152, 864), (1280, 960), (1040, 780)]
    for i in range(n_images):
        image_id = f"img{i:05d}"
        sub = np.random.default_rng([seed, 11, i])

        kind = sub.random()
        if kind < 0.03:
            width, height = 800, 600  # below the minimum resolution bound
        elif kind < 0.06:
            width, height = 980, 700  # passes the filter, too small to crop
        else:
            width, height = sizes[int(sub.integers(len(sizes)))]

        arr = _paint_image(sub, width, height)
        quality = int(sub.integers(30, 96))
        path = root / "images" / f"{image_id}.jpg"
        Image.fromarray(arr).save(path, "JPEG", quality=quality)

        n_tags = int(sub.integers(1, 4))
        picks = sub.choice(len(TAG_VOCAB), size=n_tags, replace=False, p=tag_weights)
        tags = tuple(
            TagAssignment(TAG_VOCAB[t], round(float(sub.uniform(0.2, 1.0)), 4))
            for t in sorted(picks)
        )

        license_name = LICENSES[int(sub.integers(len(LICENSES)))] if sub.random() < 0.12 else (
            ALLOWED_LICENSES[int(sub.integers(len(ALLOWED_LICENSES)))]
        )

        records.append(
            ImageRecord(
                image_id=image_id,
                path=str(Path("images") / f"{image_id}.jpg"),
                width=width,
                height=height,
                byte_size=path.stat().st_size,
                license=license_name,
                tags=tags,
            )
        )

        cluster = int(sub.integers(n_clusters))
        feat_ids.append(image_id)
        feat_rows.append(centers[cluster] + sub.normal(0.0, 0.7, feature_dim))

        if sub.random() < 0.2:
            bw = int(sub.integers(60, 200))
            bh = int(sub.integers(60, 200))
            bx = int(sub.integers(0, max(1, width - bw)))
            by = int(sub.integers(0, max(1, height - bh)))
            face_lines.append(f"{image_id}\t{bx}\t{by}\t{bw}\t{bh}")

    manifest_path = root / "manifest.tsv"
    write_corpus_manifest(records, manifest_path)

    features_path = root / "features.txt"
    write_feature_matrix(
        FeatureMatrix(tuple(feat_ids), np.array(feat_rows)), features_path
    )

    faces_path = root / "faces.tsv"
    faces_path.write_text("\n".join(face_lines) + ("\n" if face_lines else ""))

    ratings_path, experts_path = _generate_study(root, records, seed)
    return SynthCorpus(
        root=root,
        manifest_path=manifest_path,
        features_path=features_path,
        faces_path=faces_path,
        ratings_path=ratings_path,
        experts_path=experts_path,
        records=records,
    )


def _generate_study(root: Path, records: list[ImageRecord], seed: int):
    """Crowd ratings over a study subset with planted bad workers, plus a
    small expert panel on a question subset."""
    rng = np.random.default_rng([seed, 23])
    study_ids = [r.image_id for r in records[: min(80, len(records))]]
    latent = {i: float(rng.uniform(1.3, 4.7)) for i in study_ids}

    expert_ids = study_ids[: min(24, len(study_ids))]
    n_experts = 11
    expert_scores = np.clip(
        np.round(
            np.array([[latent[i] for _ in range(n_experts)] for i in expert_ids])
            + rng.normal(0, 0.45, (len(expert_ids), n_experts))
        ),
        1,
        5,
    )
    experts = ExpertSet(tuple(expert_ids), expert_scores)
    experts_path = root / "experts.tsv"
    write_expert_table(experts, experts_path)

    events: list[RatingEvent] = []
    t = 0.0
    question_ids = set(expert_ids)

    def emit(worker: str, image: str, score: float) -> None:
        nonlocal t
        t += 1.0
        events.append(
            RatingEvent(
                worker_id=worker,
                image_id=image,
                score=int(np.clip(round(score), 1, 5)),
                timestamp=t,
                is_test=image in question_ids,
            )
        )

    for w in range(24):
        worker = f"worker{w:03d}"
        low = min(40, len(study_ids))
        rated = rng.permutation(study_ids)[: int(rng.integers(low, len(study_ids) + 1))]
        if w < 2:  # line clickers: one answer regardless of content
            stuck = int(rng.integers(1, 6))
            for image in rated:
                emit(worker, image, stuck)
        elif w < 4:  # random clickers: no correlation with content
            for image in rated:
                emit(worker, image, float(rng.integers(1, 6)))
        else:
            for image in rated:
                emit(worker, image, latent[image] + rng.normal(0, 0.6))

    ratings_path = root / "ratings.tsv"
    write_ratings(events, ratings_path)
    return ratings_path, experts_path


def read_face_boxes(path: Path | str) -> dict[str, list[tuple[int, int, int, int]]]:
    out: dict[str, list[tuple[int, int, int, int]]] = {}
    p = Path(path)
    if not p.exists():
        return out
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            image_id, x, y, w, h = line.split("\t")
            out.setdefault(image_id, []).append((int(x), int(y), int(w), int(h)))
    return out
