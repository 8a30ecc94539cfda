"""Core record types and tabular file formats shared across the pipeline.

Every tabular artifact is line-delimited UTF-8 text with tab-separated
fields. Files are written atomically (temp file in the same directory,
then rename) so an interrupted stage never leaves a half-written table.
Floats are serialized with repr(), which round-trips exactly.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

# The seven scalar indicators, in canonical column order. jpeg_quality is
# the only one that may be absent (losslessly coded files have none).
SCALAR_INDICATORS = (
    "brightness",
    "colorfulness",
    "rms_contrast",
    "sharpness",
    "bitrate",
    "resolution",
    "jpeg_quality",
)


class IngestError(ValueError):
    """A structured input file violates its declared shape or value rules."""


@dataclass(frozen=True)
class TagAssignment:
    """One machine tag on one image, with the tagger's confidence."""

    tag: str
    confidence: float

    def __post_init__(self) -> None:
        if not self.tag:
            raise ValueError("empty tag name")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(
                f"confidence for tag {self.tag!r} outside [0, 1]: {self.confidence}"
            )


@dataclass(frozen=True)
class ImageRecord:
    """Catalog entry for one source photo (dimensions are the original file's)."""

    image_id: str
    path: str
    width: int
    height: int
    byte_size: int
    license: str = ""
    tags: tuple[TagAssignment, ...] = ()
    license_ok: bool = True

    def __post_init__(self) -> None:
        if not self.image_id:
            raise ValueError("empty image id")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"{self.image_id}: non-positive dimensions")
        if self.byte_size <= 0:
            raise ValueError(f"{self.image_id}: non-positive byte size")
        seen = set()
        for t in self.tags:
            if t.tag in seen:
                raise ValueError(f"{self.image_id}: duplicate tag {t.tag!r}")
            seen.add(t.tag)


@dataclass
class IndicatorVector:
    """The seven scalar quality indicators for one image, plus its content
    cluster once assigned. jpeg_quality is None for non-JPEG sources."""

    image_id: str
    brightness: float
    colorfulness: float
    rms_contrast: float
    sharpness: float
    bitrate: float
    resolution: float
    jpeg_quality: int | None = None
    cluster_id: int | None = None

    def __post_init__(self) -> None:
        for name in SCALAR_INDICATORS[:-1]:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{self.image_id}: non-finite {name}: {v!r}")
        if self.jpeg_quality is not None and not (1 <= self.jpeg_quality <= 100):
            raise ValueError(
                f"{self.image_id}: jpeg_quality outside [1, 100]: {self.jpeg_quality}"
            )

    def scalar(self, name: str) -> float | None:
        if name not in SCALAR_INDICATORS:
            raise KeyError(name)
        v = getattr(self, name)
        return None if v is None else float(v)


@dataclass
class Selection:
    """An ordered subset of image ids plus the sampling state that produced it."""

    ids: tuple[str, ...]
    quota_used: int | None = None
    tag_fulfillment: dict[str, int] = field(default_factory=dict)
    objective: float | None = None
    trace: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.ids)


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write text to path via a temp file + rename in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_float(v: float) -> str:
    return repr(float(v))


# --- corpus manifest ---------------------------------------------------------
#
# Columns: image_id, path, width, height, byte_size, license, tags.
# tags is a comma-joined list of tag:confidence pairs, or "-" when empty.

_MANIFEST_COLS = 7


def _serialize_tags(tags: Sequence[TagAssignment]) -> str:
    if not tags:
        return "-"
    return ",".join(f"{t.tag}:{_fmt_float(t.confidence)}" for t in tags)


def _parse_tags(fieldtext: str, image_id: str) -> tuple[TagAssignment, ...]:
    if fieldtext == "-":
        return ()
    out = []
    for part in fieldtext.split(","):
        tag, sep, conf = part.rpartition(":")
        if not sep:
            raise IngestError(f"{image_id}: malformed tag entry {part!r}")
        out.append(TagAssignment(tag, float(conf)))
    return tuple(out)


def write_corpus_manifest(records: Iterable[ImageRecord], path: Path | str) -> None:
    lines = []
    for r in records:
        lines.append(
            "\t".join(
                (
                    r.image_id,
                    r.path,
                    str(r.width),
                    str(r.height),
                    str(r.byte_size),
                    r.license or "-",
                    _serialize_tags(r.tags),
                )
            )
        )
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_corpus_manifest(path: Path | str) -> list[ImageRecord]:
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != _MANIFEST_COLS:
                raise IngestError(
                    f"{path}:{lineno}: expected {_MANIFEST_COLS} fields, got {len(parts)}"
                )
            image_id = parts[0]
            if image_id in seen:
                raise IngestError(f"{path}:{lineno}: duplicate image id {image_id!r}")
            seen.add(image_id)
            records.append(
                ImageRecord(
                    image_id=image_id,
                    path=parts[1],
                    width=int(parts[2]),
                    height=int(parts[3]),
                    byte_size=int(parts[4]),
                    license="" if parts[5] == "-" else parts[5],
                    tags=_parse_tags(parts[6], image_id),
                )
            )
    return records


# --- indicator table ---------------------------------------------------------
#
# Columns: image_id + the seven scalar indicators. jpeg_quality serializes
# to "-" when unset. Cluster assignments live in their own two-column table.


def write_indicator_table(vectors: Iterable[IndicatorVector], path: Path | str) -> None:
    lines = ["\t".join(("image_id",) + SCALAR_INDICATORS)]
    for v in vectors:
        jq = "-" if v.jpeg_quality is None else str(v.jpeg_quality)
        lines.append(
            "\t".join(
                (
                    v.image_id,
                    _fmt_float(v.brightness),
                    _fmt_float(v.colorfulness),
                    _fmt_float(v.rms_contrast),
                    _fmt_float(v.sharpness),
                    _fmt_float(v.bitrate),
                    _fmt_float(v.resolution),
                    jq,
                )
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_indicator_table(path: Path | str) -> list[IndicatorVector]:
    vectors = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        expected = ["image_id"] + list(SCALAR_INDICATORS)
        if header != expected:
            raise IngestError(f"{path}: unexpected header {header}")
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(expected):
                raise IngestError(
                    f"{path}:{lineno}: expected {len(expected)} fields, got {len(parts)}"
                )
            vectors.append(
                IndicatorVector(
                    image_id=parts[0],
                    brightness=float(parts[1]),
                    colorfulness=float(parts[2]),
                    rms_contrast=float(parts[3]),
                    sharpness=float(parts[4]),
                    bitrate=float(parts[5]),
                    resolution=float(parts[6]),
                    jpeg_quality=None if parts[7] == "-" else int(parts[7]),
                )
            )
    return vectors


# --- simple id / assignment tables -------------------------------------------


def write_id_list(ids: Iterable[str], path: Path | str) -> None:
    ids = list(ids)
    atomic_write_text(path, "\n".join(ids) + ("\n" if ids else ""))


def read_id_list(path: Path | str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def write_cluster_table(assignments: Mapping[str, int], path: Path | str) -> None:
    lines = [f"{image_id}\t{cluster}" for image_id, cluster in assignments.items()]
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_cluster_table(path: Path | str) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise IngestError(f"{path}:{lineno}: expected 2 fields")
            if parts[0] in out:
                raise IngestError(f"{path}:{lineno}: duplicate id {parts[0]!r}")
            out[parts[0]] = int(parts[1])
    return out
