"""Content descriptors: feature ingestion and a seeded k-means codebook.

Deep features arrive as a plain text matrix with an explicit header, get
quantized against a k-means codebook (seeded k-means++ start, Lloyd
iterations run to an assignment fixpoint or a hard cap), and the winning
centroid index becomes the image's content cluster id.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .records import IngestError, atomic_write_text

KMEANS_MAX_ITER = 100


@dataclass
class FeatureMatrix:
    ids: tuple[str, ...]
    vectors: np.ndarray  # (n, d) float64

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got {self.vectors.shape}")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids for {self.vectors.shape[0]} feature rows"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in feature matrix")
        bad = np.nonzero(~np.isfinite(self.vectors).all(axis=1))[0]
        if bad.size:
            raise IngestError(f"non-finite feature values in row {self.ids[bad[0]]!r}")

    def row(self, image_id: str) -> np.ndarray:
        return self.vectors[self.ids.index(image_id)]

    def subset(self, keep_ids) -> "FeatureMatrix":
        index = {image_id: i for i, image_id in enumerate(self.ids)}
        missing = [i for i in keep_ids if i not in index]
        if missing:
            raise KeyError(f"ids absent from feature matrix: {missing[:5]}")
        rows = [index[i] for i in keep_ids]
        return FeatureMatrix(tuple(keep_ids), self.vectors[rows])


def read_feature_matrix(path: Path | str) -> FeatureMatrix:
    """Parse a feature file: a "count dim" header line, then one row per
    image as "id v1 ... vd" separated by whitespace."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise IngestError(f"{path}: header must be 'count dim', got {header!r}")
        count, dim = int(header[0]), int(header[1])
        if count <= 0 or dim <= 0:
            raise IngestError(f"{path}: non-positive header values {count} {dim}")
        ids, rows = [], []
        for rownum, raw in enumerate(fh):
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != dim + 1:
                raise IngestError(
                    f"{path}: row {rownum}: expected id + {dim} values, got {len(parts) - 1}"
                )
            ids.append(parts[0])
            try:
                rows.append([float(p) for p in parts[1:]])
            except ValueError as exc:
                raise IngestError(f"{path}: row {rownum}: {exc}") from exc
        if len(ids) != count:
            raise IngestError(f"{path}: header declares {count} rows, found {len(ids)}")
    try:
        return FeatureMatrix(tuple(ids), np.array(rows, dtype=np.float64))
    except IngestError as exc:
        raise IngestError(f"{path}: {exc}") from exc


def write_feature_matrix(features: FeatureMatrix, path: Path | str) -> None:
    n, d = features.vectors.shape
    lines = [f"{n} {d}"]
    for image_id, row in zip(features.ids, features.vectors):
        lines.append(image_id + " " + " ".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass
class Codebook:
    centroids: np.ndarray  # (k, d)
    seed: int
    wcss_history: tuple[float, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] == 0:
            raise ValueError(f"bad codebook shape {self.centroids.shape}")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _nearest(vectors: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # Squared distances; argmin returns the lowest index on ties.
    d2 = (
        (vectors**2).sum(axis=1)[:, None]
        - 2.0 * vectors @ centroids.T
        + (centroids**2).sum(axis=1)[None, :]
    )
    return np.argmin(d2, axis=1)


def _wcss(vectors: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> float:
    diff = vectors - centroids[assign]
    return float((diff**2).sum())


def fit_codebook(
    features: FeatureMatrix, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER
) -> Codebook:
    """Seeded k-means: k-means++ start, Lloyd updates to an assignment
    fixpoint or max_iter sweeps. A cluster that loses all members keeps its
    previous centroid. Identical seeds give identical codebooks."""
    x = features.vectors
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")

    rng = np.random.default_rng(seed)
    centroids = np.empty((k, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0.0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))

    assign = _nearest(x, centroids)
    history = [_wcss(x, centroids, assign)]
    for _ in range(max_iter):
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        new_assign = _nearest(x, centroids)
        history.append(_wcss(x, centroids, new_assign))
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
    return Codebook(centroids=centroids, seed=seed, wcss_history=tuple(history))


def assign_cluster(vector, codebook: Codebook) -> int:
    """Index of the nearest centroid; ties go to the lowest index."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (codebook.centroids.shape[1],):
        raise ValueError(
            f"vector has dim {v.shape}, codebook expects {codebook.centroids.shape[1]}"
        )
    return int(_nearest(v[None, :], codebook.centroids)[0])


def assign_all(features: FeatureMatrix, codebook: Codebook) -> dict[str, int]:
    assign = _nearest(features.vectors, codebook.centroids)
    return {image_id: int(c) for image_id, c in zip(features.ids, assign)}


def write_codebook(codebook: Codebook, path: Path | str) -> None:
    k, d = codebook.centroids.shape
    lines = [f"{k} {d} {codebook.seed}"]
    for row in codebook.centroids:
        lines.append(" ".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_codebook(path: Path | str) -> Codebook:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise IngestError(f"{path}: header must be 'k dim seed'")
        k, d, seed = int(header[0]), int(header[1]), int(header[2])
        rows = []
        for raw in fh:
            parts = raw.split()
            if not parts:
                continue
            if len(parts) != d:
                raise IngestError(f"{path}: centroid row has {len(parts)} values, want {d}")
            rows.append([float(p) for p in parts])
        if len(rows) != k:
            raise IngestError(f"{path}: header declares {k} centroids, found {len(rows)}")
    return Codebook(centroids=np.array(rows), seed=seed)
