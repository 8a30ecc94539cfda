"""Scalar quality indicators for photographs.

Four pixel measures (brightness, colorfulness, RMS contrast, sharpness)
operate on float RGB arrays in [0, 1] of shape (h, w, 3); three file
measures (bitrate, resolution, JPEG quality) come from the encoded file
and its catalog record. The trimming step drops statistical outliers in
any single indicator.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .records import SCALAR_INDICATORS, ImageRecord, IndicatorVector

# ITU-R BT.601 luma weights.
_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114

# Largest Sobel gradient magnitude reachable on unit-range input: each of
# the two 3x3 kernels has one-sided weight sum 4, so |g| <= sqrt(4^2 + 4^2).
_SOBEL_MAX = 4.0 * math.sqrt(2.0)

_MIN_SHARPNESS_SIDE = 8


def _as_rgb(image) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("empty image")
    return arr


def luminance(image) -> np.ndarray:
    """BT.601 luma of an RGB array in [0, 1], same height/width, float64."""
    arr = _as_rgb(image)
    return _LUMA_R * arr[..., 0] + _LUMA_G * arr[..., 1] + _LUMA_B * arr[..., 2]


def brightness(image) -> float:
    """Mean luminance; 0 for black frames, 1 for white."""
    return float(luminance(image).mean())


def colorfulness(image) -> float:
    """Opponent-color colorfulness on the 8-bit scale.

    Computed from the rg = R-G and yb = (R+G)/2 - B planes as
    sqrt(std_rg^2 + std_yb^2) + 0.3 * sqrt(mean_rg^2 + mean_yb^2),
    with channels scaled to [0, 255]. Zero exactly for achromatic images.
    """
    arr = _as_rgb(image) * 255.0
    rg = arr[..., 0] - arr[..., 1]
    yb = 0.5 * (arr[..., 0] + arr[..., 1]) - arr[..., 2]
    sigma = math.hypot(float(rg.std()), float(yb.std()))
    mu = math.hypot(float(rg.mean()), float(yb.mean()))
    return sigma + 0.3 * mu


def rms_contrast(image) -> float:
    """Population standard deviation of the luminance plane."""
    return float(luminance(image).std())


def sharpness(image) -> float:
    """Mean of the top decile of Sobel gradient magnitudes on luminance.

    The top decile holds ceil(n/10) pixels (at least one). The mean is
    normalized by the largest magnitude reachable on unit-range input, so
    the value lies in [0, 1] and a constant frame scores exactly 0.
    Requires both sides >= 8 px; gradients use reflected borders.
    """
    y = luminance(image)
    if min(y.shape) < _MIN_SHARPNESS_SIDE:
        raise ValueError(
            f"image too small for sharpness: {y.shape[1]}x{y.shape[0]}, "
            f"need both sides >= {_MIN_SHARPNESS_SIDE}"
        )
    gx = ndimage.sobel(y, axis=1, mode="reflect")
    gy = ndimage.sobel(y, axis=0, mode="reflect")
    mag = np.hypot(gx, gy).ravel()
    k = max(1, -(-mag.size // 10))
    top = np.partition(mag, mag.size - k)[mag.size - k :]
    return float(top.mean() / _SOBEL_MAX)


# --- file-level indicators ----------------------------------------------------

# Baseline luminance quantization table (row-major), the anchor of the
# standard quality-scaling family used by common JPEG encoders.
_JPEG_LUMA_BASE = np.array(
    [
        16, 11, 10, 16, 24, 40, 51, 61,
        12, 12, 14, 19, 26, 58, 60, 55,
        14, 13, 16, 24, 40, 57, 69, 56,
        14, 17, 22, 29, 51, 87, 80, 62,
        18, 22, 37, 56, 68, 109, 103, 77,
        24, 35, 55, 64, 81, 104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99,
    ],
    dtype=np.int64,
)


def scaled_luma_table(quality: int) -> np.ndarray:
    """The standard luminance table scaled to a 1..100 quality setting."""
    if not 1 <= quality <= 100:
        raise ValueError(f"quality outside [1, 100]: {quality}")
    s = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((_JPEG_LUMA_BASE * s + 50) // 100, 1, 255)


def estimate_jpeg_quality(table) -> int:
    """Nearest quality whose scaled standard table matches the observed one.

    Distance is the L1 gap over the 64 luminance entries; ties resolve
    toward the lower quality.
    """
    obs = np.asarray(table, dtype=np.int64)
    if obs.shape != (64,):
        raise ValueError(f"expected 64 table entries, got shape {obs.shape}")
    best_q, best_d = 1, None
    for q in range(1, 101):
        d = int(np.abs(scaled_luma_table(q) - obs).sum())
        if best_d is None or d < best_d:
            best_q, best_d = q, d
    return best_q


def file_indicators(record: ImageRecord, data: bytes) -> dict:
    """Bitrate, pixel count, and (for JPEG sources) estimated quality.

    Bitrate is bits per pixel of the encoded file against the record's
    dimensions. Unreadable bytes raise; readable non-JPEG formats simply
    leave jpeg_quality as None.
    """
    bitrate = record.byte_size * 8.0 / (record.width * record.height)
    resolution = float(record.width * record.height)
    jpeg_quality = None
    try:
        img = Image.open(io.BytesIO(data))
        img.verify()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ValueError(f"{record.image_id}: unreadable image file: {exc}") from exc
    if img.format == "JPEG":
        img = Image.open(io.BytesIO(data))  # verify() invalidates the reader
        tables = getattr(img, "quantization", None) or {}
        if 0 in tables:
            jpeg_quality = estimate_jpeg_quality(list(tables[0]))
    return {"bitrate": bitrate, "resolution": resolution, "jpeg_quality": jpeg_quality}


def compute_indicator_vector(
    record: ImageRecord, pixels: np.ndarray, data: bytes
) -> IndicatorVector:
    """Assemble the full seven-indicator vector for one image.

    pixels is the RGB array ([0, 1]) the pixel measures should describe —
    normally the standardized crop, while data is always the original
    encoded file.
    """
    file_part = file_indicators(record, data)
    return IndicatorVector(
        image_id=record.image_id,
        brightness=brightness(pixels),
        colorfulness=colorfulness(pixels),
        rms_contrast=rms_contrast(pixels),
        sharpness=sharpness(pixels),
        bitrate=file_part["bitrate"],
        resolution=file_part["resolution"],
        jpeg_quality=file_part["jpeg_quality"],
    )


def load_rgb(path) -> np.ndarray:
    """Decode an image file to a float RGB array in [0, 1]."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


# --- outlier trimming ---------------------------------------------------------


@dataclass
class TrimResult:
    kept_ids: tuple[str, ...]
    removed_ids: tuple[str, ...]
    stats: dict[str, tuple[float, float]]  # indicator -> (mean, population std)


def zscore_trim(vectors, z_max: float = 3.0) -> TrimResult:
    """Drop every image whose z-score exceeds z_max in any single indicator.

    Means and standard deviations are computed once over the full input
    population (population std). An indicator with zero spread trims
    nothing, and missing jpeg_quality values neither enter the stats nor
    trip the threshold for their row.
    """
    vectors = list(vectors)
    if len(vectors) < 2:
        raise ValueError(f"need at least 2 vectors to trim, got {len(vectors)}")
    if z_max <= 0:
        raise ValueError(f"z_max must be positive: {z_max}")

    stats: dict[str, tuple[float, float]] = {}
    for name in SCALAR_INDICATORS:
        values = np.array(
            [v.scalar(name) for v in vectors if v.scalar(name) is not None],
            dtype=np.float64,
        )
        if values.size == 0:
            stats[name] = (math.nan, 0.0)
        else:
            stats[name] = (float(values.mean()), float(values.std()))

    kept, removed = [], []
    for v in vectors:
        out = False
        for name in SCALAR_INDICATORS:
            value = v.scalar(name)
            if value is None:
                continue
            mean, std = stats[name]
            if std > 0.0 and abs(value - mean) / std > z_max:
                out = True
                break
        (removed if out else kept).append(v.image_id)
    return TrimResult(tuple(kept), tuple(removed), stats)
